"""Constrained-control toolkit: polytope algebra, admissible-set
construction, action supervision, and safe online learning."""

from .control_linalg import (
    ClosedLoop,
    LinearPlant,
    NominalGain,
    OutputMap,
    closed_loop,
    dare_solve,
    dlyap_scaled,
    riccati_finite,
    spectral_radius,
)
from .convexset import (
    Ellipsoid,
    HPolytope,
    ellipsoid_contains,
    ellipsoid_support,
    is_subset,
    lp_solve,
    nearest_affine_point,
    pontryagin_diff,
    project_out,
    rejection_sample,
    remove_redundancy,
    support,
)
from .discrete_safeset import (
    DiscreteGridOracle,
    DiscreteSafeSet,
    GridSpec,
    TransitionTable,
    build_seed,
    compute_safe_set,
    compute_safe_set_sequential,
    discretize,
    make_oracle,
)
from .governor import (
    ActionDistance,
    Branch,
    GovernorOutcome,
    GovernorState,
    SafeSetOracle,
    TransitionPolicyModel,
    adjust_action,
    backup_reference,
    govern,
)
from .lp import LpResult, LpStatus, Sense
from .moas import LinearMoasOracle, Moas, build_moas, feasible_action_set, linear_ag_step
from .safe_learning import (
    KoopmanEnv,
    KoopmanModel,
    ObservableMap,
    QTable,
    ReplayBuffer,
    SafeQEnv,
    batch_fit,
    epsilon_greedy,
    identity_observables,
    koopman_control,
    modified_reward,
    prediction_residual,
    q_target,
    rls_update,
    run_safe_koopman,
    run_safe_q,
)
from .simlab import (
    ScenarioConfig,
    average_cost,
    disturbance,
    disturbance_bound,
    example_initial_koopman,
    example_observables,
    example_system,
    simulate,
    step_cost,
)
from .trajectory import Trajectory, TrajectoryStep

__version__ = "0.1.0"
