"""One-class representation learning for presentation attack detection.

Trains a multi-channel embedding network with a combined cross-entropy +
one-class contrastive objective, fits a one-class Gaussian mixture on
bonafide embeddings, and evaluates known/unseen-attack detection with
ISO/IEC 30107-3 style metrics on protocol-structured data.
"""

from .data import (
    GeneratorConfig,
    ProtocolSplit,
    Sample,
    generate_synthetic,
    generator_config_from_dict,
    load_dataset,
    mad_normalize,
    save_dataset,
    split_protocol,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    FitError,
    InputError,
    MetricError,
    OcpadError,
    ParseError,
    SplitError,
    TrainingError,
)
from .gmm import EmConfig, GmmParams, fit_em, log_likelihood, responsibilities
from .losses import (
    BonafideCenter,
    LossConfig,
    bce_loss,
    center_loss,
    combined_loss,
    distance_to_center,
    occl_loss,
    update_center,
)
from .metrics import (
    MetricsReport,
    ScoredSet,
    compute_rates,
    det_points,
    eer,
    select_threshold,
)
from .network import (
    AdamState,
    ForwardResult,
    NetworkConfig,
    NetworkParams,
    adam_step,
    backward,
    forward,
    forward_batch,
    gradient_check,
    init_adam_state,
    init_network,
)
from .experiments import example_experiment
from .pipeline import (
    Checkpoint,
    TrainConfig,
    evaluate,
    extract_embeddings,
    fit_one_class,
    load_checkpoint,
    load_gmm,
    save_checkpoint,
    save_gmm,
    train,
)

__version__ = "0.1.0"
