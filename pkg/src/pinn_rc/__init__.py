"""Physics-informed neural networks for parallel RC circuit transients, in numpy."""

from .circuits import (
    CASE0,
    CASE1,
    CASE2,
    CASE3,
    FIXTURES,
    Branch,
    CircuitCase,
    CircuitError,
    TimeDomain,
    analytical_current,
    analytical_log_current,
    initial_current,
    residual_log,
    residual_raw,
    residual_raw_multi,
)
from .inverse import Dataset, TrainableParams, generate_synthetic, train_inverse
from .metrics import ErrorMetrics, l2_relative_error
from .net import Mlp, init_mlp
from .report import compare_formulations, domain_sweep
from .training import TrainConfig, TrainingDivergence, predict, train_forward

__version__ = "0.1.0"
