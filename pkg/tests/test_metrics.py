"""Metric tests, including the independent direct-summation oracles."""

import numpy as np
import pytest

from nfcsi.channel import SystemConfig, generate_channel
from nfcsi.metrics import NMSE_FLOOR_DB, cosine_similarity, nmse_db, rho_per_sample
from nfcsi.transform import angular_delay_forward


def oracle_nmse_db(truth_list, recon_list):
    """Direct per-element summation, no vectorized shortcuts."""
    ratios = []
    for t, r in zip(truth_list, recon_list):
        num = 0.0
        den = 0.0
        for i in range(t.shape[0]):
            for j in range(t.shape[1]):
                num += abs(t[i, j] - r[i, j]) ** 2
                den += abs(t[i, j]) ** 2
        ratios.append(num / den)
    return 10.0 * np.log10(sum(ratios) / len(ratios))


def oracle_rho(truth_list, recon_list):
    vals = []
    for t, r in zip(truth_list, recon_list):
        acc = 0.0
        for m in range(t.shape[0]):
            inner = 0.0
            for n in range(t.shape[1]):
                inner += np.conj(r[m, n]) * t[m, n]
            nt = np.sqrt(sum(abs(t[m, n]) ** 2 for n in range(t.shape[1])))
            nr = np.sqrt(sum(abs(r[m, n]) ** 2 for n in range(t.shape[1])))
            acc += abs(inner) / (nt * nr) if nt > 0 and nr > 0 else 0.0
        vals.append(acc / t.shape[0])
    return sum(vals) / len(vals)


class TestNmse:
    def test_exact_reconstruction_floors(self):
        h = np.ones((2, 2), dtype=complex)
        assert nmse_db(h, h) == NMSE_FLOOR_DB

    def test_zero_reconstruction_is_zero_db(self):
        h = np.array([[1 + 1j, 2], [3, 4j]])
        assert nmse_db(h, np.zeros_like(h)) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_example(self):
        h = np.array([[1.0 + 0j]])
        h_hat = np.array([[0.9 + 0j]])
        assert nmse_db(h, h_hat) == pytest.approx(-20.0, abs=1e-12)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(21)
        truths, recons = [], []
        for _ in range(5):
            t = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            r = t + 0.1 * (rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)))
            truths.append(t)
            recons.append(r)
        got = nmse_db(np.stack(truths), np.stack(recons))
        assert got == pytest.approx(oracle_nmse_db(truths, recons), abs=1e-10)

    def test_zero_norm_truth_rejected(self):
        with pytest.raises(ValueError, match="zero-norm"):
            nmse_db(np.zeros((2, 2), dtype=complex), np.ones((2, 2), dtype=complex))

    def test_domain_invariance(self):
        cfg = SystemConfig()
        rng = np.random.default_rng(22)
        spatial_t, spatial_r = [], []
        for seed in range(8):
            h = generate_channel(cfg, seed).matrix
            noise = 0.05 * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
            spatial_t.append(h)
            spatial_r.append(h + noise)
        a = nmse_db(np.stack(spatial_t), np.stack(spatial_r))
        b = nmse_db(angular_delay_forward(np.stack(spatial_t)),
                    angular_delay_forward(np.stack(spatial_r)))
        assert abs(a - b) < 1e-9


class TestCosineSimilarity:
    def test_identical_is_one(self):
        rng = np.random.default_rng(23)
        h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        assert cosine_similarity(h, h) == pytest.approx(1.0, abs=1e-12)

    def test_complex_scale_invariance(self):
        rng = np.random.default_rng(24)
        h = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        c = 2.5 * np.exp(1j * 0.7)
        assert cosine_similarity(h, c * h) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_single_subcarrier(self):
        h = np.array([[1.0 + 0j, 0.0]])
        h_hat = np.array([[0.0, 1.0 + 0j]])
        assert cosine_similarity(h, h_hat) == pytest.approx(0.0, abs=1e-15)

    def test_zero_norm_row_contributes_zero(self):
        h = np.array([[1.0 + 0j, 0.0], [0.0, 0.0]])
        h_hat = np.array([[1.0 + 0j, 0.0], [1.0, 0.0]])
        # second row of truth has zero norm -> term 0; mean = (1 + 0)/2
        assert cosine_similarity(h, h_hat) == pytest.approx(0.5, abs=1e-12)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(25)
        truths, recons = [], []
        for _ in range(5):
            t = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            r = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            truths.append(t)
            recons.append(r)
        got = cosine_similarity(np.stack(truths), np.stack(recons))
        assert got == pytest.approx(oracle_rho(truths, recons), abs=1e-10)

    def test_bounds(self):
        rng = np.random.default_rng(26)
        for _ in range(20):
            t = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            r = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
            per = rho_per_sample(t, r)
            assert np.all((per >= 0.0) & (per <= 1.0))
