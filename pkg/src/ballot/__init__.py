"""Fairness-aware pruning of small fully connected classifiers.

The pipeline trains a dense network while recording, per hidden unit
and epoch, whether the accuracy-loss and fairness-loss gradients pull
its pre-activation in opposite directions.  Units accumulating the most
such conflicts are pruned first; the surviving ticket is rewound to
early-epoch weights and retrained, with a refinement loop that keeps
the fairest accurate candidate.
"""

from ._version import __version__
from .config import AppConfig, config_from_dict, load_config
from .data import Dataset, DatasetSpec, Split, SyntheticSpec, gen_synthetic, load_csv, make_dataset
from .errors import (
    BallotError,
    ConfigurationError,
    DataError,
    InfeasibleMaskError,
    NumericalFailure,
    PersistenceError,
    UsageError,
)
from .masks import (
    ConflictLedger,
    Mask,
    NeuronId,
    build_ballot_mask,
    build_magnitude_mask,
    build_random_mask,
    deserialize_mask,
    identity_mask,
    serialize_mask,
    sparsity,
)
from .metrics import (
    ClassWeights,
    EvalReport,
    bias_delta,
    cwv,
    evaluate,
    mcd,
    update_class_weights,
)
from .model import (
    Checkpoint,
    LayerSpec,
    NetworkParams,
    apply_mask,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from .pipeline import (
    METHODS,
    PruneResult,
    RunArtifacts,
    TrainConfig,
    fix_model,
    lr_at,
    refine,
    run_baseline,
    train_dense,
)
from .reporting import load_report, run_experiment, write_report

__all__ = [name for name in dir() if not name.startswith("_")]
