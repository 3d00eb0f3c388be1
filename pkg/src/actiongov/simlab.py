"""Worked double-integrator scenario: system definition, configuration,
supervised/unsupervised simulation, learning-environment builders, and
running-cost bookkeeping.

The true system is nonlinear through a state-dependent disturbance; all
safety machinery treats that disturbance as a bounded set, which is what
makes supervision robust while the simulation itself stays deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .control_linalg import (
    ClosedLoop,
    LinearPlant,
    NominalGain,
    OutputMap,
    closed_loop,
)
from .convexset import HPolytope, rejection_sample
from .discrete_safeset import (
    GridSpec,
    build_seed,
    compute_safe_set,
    discretize,
    make_oracle,
)
from .governor import ActionDistance, GovernorState, TransitionPolicyModel, govern
from .moas import LinearMoasOracle, Moas, build_moas
from .safe_learning import (
    KoopmanEnv,
    KoopmanModel,
    ObservableMap,
    QTable,
    SafeQEnv,
    koopman_control,
)
from .trajectory import Trajectory

X1_BOUNDS = (-20.0, 20.0)
X2_BOUNDS = (-4.0, 10.0)
U_BOUNDS = (-6.0, 6.0)
_GUARD = 1e-9  # floating-point guard on the binary violation checks


def example_system():
    """Double-integrator plant, its box constraints as an output map, the
    stabilizing reference-parameterized gain, and the true disturbance law."""
    plant = LinearPlant([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]], [[0.0], [1.0]])
    C = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    D = np.array([[0.0], [0.0], [1.0]])
    H = np.array(
        [
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]
    )
    h = np.array([X1_BOUNDS[1], -X1_BOUNDS[0], X2_BOUNDS[1], -X2_BOUNDS[0],
                  U_BOUNDS[1], -U_BOUNDS[0]])
    out = OutputMap(C, D, HPolytope(H, h))
    gain = NominalGain([[-0.2054, -0.7835]], [[0.2054]])
    return plant, out, gain, disturbance


def disturbance(x) -> float:
    """True state-dependent disturbance; always inside the unit interval."""
    return float(np.sin(10.0 * np.asarray(x, dtype=float).ravel()[0]))


def disturbance_bound() -> HPolytope:
    return HPolytope.from_bounds([-1.0], [1.0])


def example_observables() -> ObservableMap:
    """State plus the disturbance-shaped sinusoids of the worked example."""

    def lift(x):
        x1, x2 = float(x[0]), float(x[1])
        return np.array([x1, x2, math.sin(10.0 * x1), math.sin(10.0 * x1 + 10.0 * x2)])

    return ObservableMap(fn=lift, n_z=4, name="double_integrator_lift")


def example_initial_koopman(lam: float = 1.0, delta: float = 1e3) -> KoopmanModel:
    """Lifted model that matches the linear part and ignores the sinusoids."""
    plant, _, _, _ = example_system()
    A0 = np.zeros((4, 4))
    A0[:2, :2] = plant.A
    B0 = np.zeros((4, 1))
    B0[:2] = plant.B
    return KoopmanModel.initial(A0, B0, example_observables(), lam=lam, delta=delta)


_OBSERVABLE_REGISTRY = {
    "double_integrator_lift": example_observables,
}


def koopman_model_from_dict(data: dict) -> KoopmanModel:
    name = data["observables"]
    if name in _OBSERVABLE_REGISTRY:
        obs = _OBSERVABLE_REGISTRY[name]()
    elif name == "identity":
        from .safe_learning import identity_observables

        obs = identity_observables(int(data["n_z"]))
    else:
        raise ValueError(f"unknown observable map {name!r}")
    return KoopmanModel(
        np.asarray(data["A"], dtype=float),
        np.asarray(data["B"], dtype=float),
        np.asarray(data["gamma_cov"], dtype=float),
        float(data["lam"]),
        obs,
    )


def step_cost(x, u) -> float:
    """Single-step quadratic cost ||x||^2 + 10 |u|^2."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(x @ x + 10.0 * float(u @ u))


def is_violated(x, u) -> bool:
    """Hard-bound check on state and action (1e-9 floating-point guard)."""
    x = np.asarray(x, dtype=float).ravel()
    u = float(np.atleast_1d(np.asarray(u, dtype=float))[0])
    return not (
        X1_BOUNDS[0] - _GUARD <= x[0] <= X1_BOUNDS[1] + _GUARD
        and X2_BOUNDS[0] - _GUARD <= x[1] <= X2_BOUNDS[1] + _GUARD
        and U_BOUNDS[0] - _GUARD <= u <= U_BOUNDS[1] + _GUARD
    )


def average_cost(traj: Trajectory) -> np.ndarray:
    """Running mean of the per-step costs."""
    costs = traj.costs
    if costs.size == 0:
        raise ValueError("cannot average an empty trajectory")
    return np.cumsum(costs) / (np.arange(costs.size) + 1.0)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    """Flat run configuration; every tunable default is explicit here so a
    shipped config file documents the complete parameter set."""

    seed: int
    steps: int = 500
    initial_state: tuple = (12.0, 6.0)
    governor: str = "moas"          # moas | grid | none
    controller: str = "nominal"     # nominal | qlearning | koopman
    norm: str = "l1"
    moas_epsilon: float = 0.01
    moas_t_cap: int = 500
    v_bound: float = 25.0
    grid_x1_lo: float = -25.0
    grid_x1_hi: float = 25.0
    grid_x2_lo: float = -10.0
    grid_x2_hi: float = 15.0
    grid_dx1: float = 0.5
    grid_dx2: float = 0.5
    grid_v_lo: float = -25.0
    grid_v_hi: float = 25.0
    grid_dv: float = 0.5
    grid_w_lo: float = -1.0
    grid_w_hi: float = 1.0
    grid_dw: float = 0.1
    alpha: float = 0.75
    k_max_factor: int = 50
    action_lo: float = -6.0
    action_hi: float = 6.0
    action_du: float = 0.5
    q_gamma: float = 0.95
    q_alpha: float = 0.5
    q_epsilon: float = 0.1
    q_penalty: float = 100.0
    q_tmax: int = 1
    q_batches: int = 20000
    koopman_lambda: float = 1.0
    koopman_delta: float = 1000.0
    koopman_q_diag: tuple = (1.0, 1.0, 0.0, 0.0)
    koopman_r: float = 10.0
    learn_steps: int = 20000
    reset_every: int = 20
    model_path: Optional[str] = None
    out_dir: str = "."

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.governor not in ("moas", "grid", "none"):
            raise ValueError(f"unknown governor backend {self.governor!r}")
        if self.controller not in ("nominal", "qlearning", "koopman"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        self.initial_state = tuple(float(v) for v in self.initial_state)
        self.koopman_q_diag = tuple(float(v) for v in self.koopman_q_diag)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "seed" not in data:
            raise ValueError("config must set a seed")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            (self.grid_x1_lo, self.grid_x2_lo),
            (self.grid_x1_hi, self.grid_x2_hi),
            (self.grid_dx1, self.grid_dx2),
            self.grid_v_lo,
            self.grid_v_hi,
            self.grid_dv,
            self.grid_w_lo,
            self.grid_w_hi,
            self.grid_dw,
        )

    def action_values(self) -> np.ndarray:
        n = int(round((self.action_hi - self.action_lo) / self.action_du)) + 1
        return self.action_lo + self.action_du * np.arange(n)


# ---------------------------------------------------------------------------
# backend assembly


@dataclass
class ExampleRig:
    """Prebuilt pieces of the worked example shared across runs."""

    plant: LinearPlant
    out: OutputMap
    gain: NominalGain
    cl: ClosedLoop
    w_set: HPolytope
    dist: ActionDistance


def build_rig(cfg: ScenarioConfig) -> ExampleRig:
    plant, out, gain, _ = example_system()
    cl = closed_loop(plant, out, gain)
    return ExampleRig(plant, out, gain, cl, disturbance_bound(), ActionDistance(cfg.norm))


def build_moas_backend(cfg: ScenarioConfig, rig: ExampleRig):
    moas = build_moas(
        rig.cl,
        rig.out,
        rig.w_set,
        epsilon=cfg.moas_epsilon,
        t_cap=cfg.moas_t_cap,
        v_bounds=HPolytope.from_bounds([-cfg.v_bound], [cfg.v_bound]),
    )
    return LinearMoasOracle(moas, rig.cl, rig.out, rig.w_set), moas


def build_grid_backend(cfg: ScenarioConfig, rig: ExampleRig):
    grid = cfg.grid_spec()
    tt = discretize(rig.cl, grid)
    seed = build_seed(rig.cl, rig.out, grid, cfg.alpha)
    dss = compute_safe_set(seed, tt, rig.out, rig.gain, grid,
                           k_max=cfg.k_max_factor * grid.n_pairs)
    oracle = make_oracle(dss, tt, rig.out, rig.gain, grid, cfg.action_values())
    return oracle, dss, tt, grid


def transition_model(rig: ExampleRig) -> TransitionPolicyModel:
    return TransitionPolicyModel(
        f=lambda x, u, w: rig.plant.step(x, u, w),
        pi0=lambda x, v: rig.gain.policy(x, v),
        disturbances=rig.w_set,
    )


# ---------------------------------------------------------------------------
# simulation


def _nominal_controller(rig: ExampleRig):
    K = rig.gain.K

    def control(x):
        return K @ np.asarray(x, dtype=float).ravel()

    return control


def _koopman_controller(cfg: ScenarioConfig, km: KoopmanModel):
    q_z = np.diag(cfg.koopman_q_diag)
    r_u = np.array([[cfg.koopman_r]])

    def control(x):
        return koopman_control(km, x, q_z, r_u)

    return control


def _qtable_controller(cfg: ScenarioConfig, qtable: QTable, grid: GridSpec):
    actions = cfg.action_values()

    def control(x):
        idx = int(grid.snap_x(np.atleast_2d(np.ravel(x)))[0])
        if idx < 0:
            raise ValueError("state left the learning grid")
        return np.atleast_1d(actions[int(np.argmax(qtable.values[idx]))])

    return control


def run_supervised(rig: ExampleRig, controller, oracle, x0, steps: int,
                   dist: ActionDistance) -> Trajectory:
    """Step the true system under a controller with optional supervision."""
    model = transition_model(rig)
    gs = GovernorState()
    traj = Trajectory()
    x = np.asarray(x0, dtype=float).copy()
    for t in range(steps):
        u1 = np.atleast_1d(np.asarray(controller(x), dtype=float))
        if oracle is not None:
            try:
                outcome, gs = govern(x, u1, gs, oracle, model, dist)
            except Exception as exc:
                raise type(exc)(f"step {t}: {exc}") from exc
            u = outcome.u
            branch = outcome.branch.value
            v_hat = gs.v_hat
        else:
            u = u1
            branch = "none"
            v_hat = None
        w = disturbance(x)
        traj.append(t, x, u1, u, branch, v_hat, w, step_cost(x, u), is_violated(x, u))
        x = rig.plant.step(x, u, [w])
    return traj


def simulate(cfg: ScenarioConfig) -> Trajectory:
    """Run one configured scenario on the true system."""
    rig = build_rig(cfg)
    oracle = None
    grid = None
    if cfg.governor == "moas":
        oracle, _ = build_moas_backend(cfg, rig)
    elif cfg.governor == "grid":
        oracle, _, _, grid = build_grid_backend(cfg, rig)

    if cfg.controller == "nominal":
        controller = _nominal_controller(rig)
    elif cfg.controller == "koopman":
        if cfg.model_path:
            with open(cfg.model_path) as fh:
                km = koopman_model_from_dict(json.load(fh))
        else:
            km = example_initial_koopman(cfg.koopman_lambda, cfg.koopman_delta)
        controller = _koopman_controller(cfg, km)
    else:
        if grid is None:
            grid = cfg.grid_spec()
        if cfg.model_path:
            with open(cfg.model_path) as fh:
                qtable = QTable.from_dict(json.load(fh))
        else:
            qtable = QTable.zeros(grid.n_xpairs, cfg.action_values().size,
                                  cfg.q_gamma, cfg.q_alpha, cfg.q_epsilon, cfg.q_penalty)
        controller = _qtable_controller(cfg, qtable, grid)
    return run_supervised(rig, controller, oracle, cfg.initial_state, cfg.steps, rig.dist)


# ---------------------------------------------------------------------------
# learning environments on the worked example


def make_koopman_env(cfg: ScenarioConfig, rig: ExampleRig, oracle, moas: Moas) -> KoopmanEnv:
    """Supervised Koopman learning environment on the true system.

    Resets sample uniformly inside the safe projection (rejection sampling
    from its bounding box), so supervision stays feasible after each reset.
    """

    def step(x, u):
        w = disturbance(x)
        return rig.plant.step(x, u, [w]), w

    def sample_reset(rng):
        return rejection_sample(moas.proj_x, rng, 1)[0]

    return KoopmanEnv(
        initial_state=np.asarray(cfg.initial_state, dtype=float),
        step=step,
        q_z=np.diag(cfg.koopman_q_diag),
        r_u=np.array([[cfg.koopman_r]]),
        oracle=oracle,
        model=transition_model(rig),
        dist=rig.dist,
        sample_reset=sample_reset,
        cost=step_cost,
        violated=is_violated,
    )


def make_grid_q_env(cfg: ScenarioConfig, rig: ExampleRig, oracle, grid: GridSpec) -> SafeQEnv:
    """Supervised Q-learning environment on the grid abstraction.

    The state lives on the grid (each true successor is snapped back), so
    the grid supervisor's guarantees apply verbatim; the disturbance is
    still the true state-dependent law.
    """
    pts = grid.x_points()

    def snap_state(x):
        idx = int(grid.snap_x(np.atleast_2d(np.ravel(x)))[0])
        if idx < 0:
            raise ValueError("state left the learning grid")
        return pts[idx]

    def step(x, u, rng):
        w = disturbance(x)
        return snap_state(rig.plant.step(x, u, [w])), w

    def reward(x, u):
        return -step_cost(x, u)

    return SafeQEnv(
        n_states=grid.n_xpairs,
        n_actions=cfg.action_values().size,
        actions=cfg.action_values(),
        initial_state=snap_state(np.asarray(cfg.initial_state, dtype=float)),
        state_index=lambda x: int(grid.snap_x(np.atleast_2d(np.ravel(x)))[0]),
        step=step,
        reward=reward,
        cost=step_cost,
        violated=is_violated,
        oracle=oracle,
        model=transition_model(rig),
        dist=rig.dist,
    )


def make_example_qtable(cfg: ScenarioConfig, grid: GridSpec) -> QTable:
    return QTable.zeros(
        grid.n_xpairs,
        cfg.action_values().size,
        cfg.q_gamma,
        cfg.q_alpha,
        cfg.q_epsilon,
        cfg.q_penalty,
    )
