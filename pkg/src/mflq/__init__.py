"""Mean-field LQ control with regime switching: solvers and certifiers.

The package solves the closed-loop form of a mean-field linear-quadratic
control problem whose coefficients switch with a finite-state Markov
chain, and certifies numerically that finite-horizon optimal pairs
approach the infinite-horizon limit pair exponentially fast (the strong
turnpike property).

Pipeline: validate a generator and coefficient blocks, split the system
into mean and deviation subsystems, certify stabilisability via coupled
Lyapunov equations, integrate the coupled value-matrix equations
(finite-horizon and stationary), solve the feedforward offset ODEs,
simulate the closed loop by Monte Carlo, and run coupled finite- vs
infinite-horizon experiments.
"""

from .errors import (
    NumericalFailure,
    OutputFailure,
    ToolkitError,
    ValidationFailure,
)
from .markov import (
    GeneratorMatrix,
    RegimePath,
    lambda_op,
    sample_regime_path,
    stationary_distribution,
    validate_generator,
)
from .model import (
    AssumptionReport,
    DecomposedModel,
    ForcingClass,
    ForcingSignals,
    RawCoefficients,
    check_positive_definiteness,
    classify_forcing,
    decompose,
    xi,
)
from .stability import (
    Infeasible,
    LyapunovCertificate,
    check_stabilizer,
    decay_rate,
    dissipation_residual,
    solve_coupled_lyapunov,
)
from .riccati import (
    ConvergenceReport,
    RiccatiSolution,
    StationarySolution,
    convergence_report,
    integrate_riccati,
    solve_are,
    time_shift_check,
)
from .feedforward import (
    FeedforwardSolution,
    StationaryFeedforward,
    feedforward_controls,
    integrate_eta,
    stationary_feedforward,
)
from .simulate import (
    ControlTables,
    Ensemble,
    PairedGaps,
    PathBundle,
    SimulationConfig,
    evaluate_cost,
    evaluate_ergodic_cost,
    recompose,
    simulate_closed_loop,
    simulate_paired,
)
from .turnpike import (
    IntegrableLimitVerdict,
    TurnpikeReport,
    fit_exponential_decay,
    run_turnpike_experiment,
    verify_integrable_limit,
)

__version__ = "0.1.0"
