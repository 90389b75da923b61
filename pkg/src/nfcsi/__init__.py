"""End-to-end rate-adaptive CSI feedback for wideband near-field XL-MIMO.

Pipeline: spherical-wave channel generation -> unitary angular-delay
transform -> min-max normalization -> convolutional encoder -> rate adapter
(channel selection) -> serialized feedback message -> decoder -> metrics.
"""

from .blocks import (
    Decoder,
    Encoder,
    FixedRateCodec,
    FixedRateHead,
    LightResBlock,
    NetworkConfig,
)
from .channel import (
    ChannelRealization,
    SystemConfig,
    array_response,
    generate_channel,
    generate_dataset,
    read_dataset,
    sample_seed_for,
)
from .cli import RunConfig, cli_dispatch, main, parse_config
from .evaluation import (
    MetricReport,
    SweepResult,
    analytic_parameter_count,
    bandwidth_sweep,
    count_parameters,
    cr_sweep,
    evaluate_model,
    measure_inference,
    write_sweep,
)
from .metrics import cosine_similarity, nmse_db
from .params import ParameterStore, init_parameters, load_checkpoint, save_checkpoint
from .rate_adapter import (
    AdaptiveCodec,
    CamConfig,
    FeedbackMessage,
    RateAdapter,
    pack_message,
    parse_message,
    serialize_message,
    unpack_message,
)
from .training import (
    TrainConfig,
    TrainingDiverged,
    prepare_dataset,
    train_adaptive,
    train_fixed_rate,
    write_history,
)
from .transform import (
    NormalizationMeta,
    angular_delay_forward,
    angular_delay_inverse,
    compression_ratio,
    denormalize,
    normalize,
)

__version__ = "0.1.0"
