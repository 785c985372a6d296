"""Descriptive energy-based models over fixed filter banks.

Training couples a persistent-chain Langevin sampler with two weight
update rules: plain moment matching (``frame``) and the damped variant
(``wframe``) that subtracts a gradient-norm statistic to keep the learned
energy from collapsing. Numerical oracles (finite differences, an explicit
1-D Fokker-Planck solver, exhaustive transport search) back every analytic
shortcut, and a scikit-learn style estimator wraps the pipeline.
"""

from .dataio import (
    Dataset,
    gaussian_mixture,
    load_checkpoint,
    load_images,
    save_checkpoint,
    synth_texture,
)
from .energies import BankEnergy, QuadraticEnergy
from .estimator import FrameModel
from .filters import ActivationPattern, Filter, FilterBank, convolve, gabor_bank, random_bank
from .learner import (
    LearnerConfig,
    TrainState,
    TrainingDiverged,
    frame_update,
    train,
    wframe_update,
)
from .metrics import CSV_HEADER, MetricRow, MetricTrace, empirical_w2_1d, mean_energy, response_distance
from .oracle import (
    DensityGrid,
    brute_force_w2,
    finite_diff_grad,
    fokker_planck_1d,
    ks_statistic,
    modified_fp_1d,
)
from .sampler import (
    ChainState,
    DivergenceError,
    SamplerConfig,
    euler_maruyama_modified,
    initialize_chains,
    langevin_step,
    run_inner_loop,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationPattern",
    "BankEnergy",
    "CSV_HEADER",
    "ChainState",
    "Dataset",
    "DensityGrid",
    "DivergenceError",
    "Filter",
    "FilterBank",
    "FrameModel",
    "LearnerConfig",
    "MetricRow",
    "MetricTrace",
    "QuadraticEnergy",
    "SamplerConfig",
    "TrainState",
    "TrainingDiverged",
    "brute_force_w2",
    "convolve",
    "empirical_w2_1d",
    "euler_maruyama_modified",
    "finite_diff_grad",
    "fokker_planck_1d",
    "frame_update",
    "gabor_bank",
    "gaussian_mixture",
    "initialize_chains",
    "ks_statistic",
    "langevin_step",
    "load_checkpoint",
    "load_images",
    "mean_energy",
    "modified_fp_1d",
    "random_bank",
    "response_distance",
    "run_inner_loop",
    "save_checkpoint",
    "synth_texture",
    "train",
    "wframe_update",
    "__version__",
]
