"""Trotter scars: state-dependent product-formula error on small spin chains."""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import (
    ErrorPredictor,
    LadderReport,
    TrajectoryRecord,
    compute_trajectory,
    ladder_report,
    local_expectations,
    loschmidt_exact,
    loschmidt_trotter,
    perturbative_error,
    total_spin_expectation,
)
from .formulas import (
    ErrorKernel,
    ProductFormulaSchedule,
    apply_group_exponential,
    error_kernel,
    measured_trotter_error,
    schedule_for_order,
    suzuki_schedule,
    trotter_evolve,
)
from .linalg import (
    NumericalError,
    SpectralDecomposition,
    eigendecompose_hermitian,
    exact_evolve,
    kron_embed,
    unitary_log_generator,
)
from .models import SplitHamiltonian, build_heisenberg, build_model, build_pxp, build_stark, neel_state
from .variational import (
    LossConfig,
    OptimizerConfig,
    VariationalParameters,
    composite_loss,
    haar_random_product_state,
    loss_gradient,
    optimize,
    prepare_product_state,
)
