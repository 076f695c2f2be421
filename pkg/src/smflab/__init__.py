"""smflab: a desk-scale stochastic multimodal fusion laboratory.

Masked-subset contrastive alignment plus latent modality reconstruction
over a small transformer fusion module, together with a synthetic
benchmark that measures whether trained location embeddings retain
redundant, unique and synergistic cross-modal information.
"""

from .errors import (
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    ContractError,
    DimensionError,
)
from .fusion import FusionConfig, FusionModel, MaskScheme
from .geo import (
    GeoCoordinate,
    LocationEncoder,
    ProjectedPoint,
    RffBasis,
    encode_location,
    equal_earth_project,
    rff_features,
)
from .objective import (
    LossBreakdown,
    info_nce_symmetric,
    latent_reconstruction_loss,
    sample_mask,
    total_loss,
    znormalize_latents,
)
from .pid import (
    BASELINE_KINDS,
    PidReport,
    SyntheticDataset,
    augment_batch_unique,
    build_baseline,
    first_layer_unique_weight_share,
    generate_synthetic_dataset,
    run_pid_probes,
    train_baseline,
)
from .probe import (
    FoldSplit,
    RidgeModel,
    cross_entropy,
    kfold_ridge_r2,
    mse,
    r2_score,
    ridge_fit_loo,
    weighted_f1,
)
from .tensor import Tape, Tensor, backward, gelu, layer_norm, matmul, softmax_rows
from .training import (
    AvailabilityProfile,
    OptimizerState,
    ScheduleConfig,
    TrainConfig,
    cosine_lr,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
    train_smf,
    validation_loss,
)

__version__ = "0.1.0"
