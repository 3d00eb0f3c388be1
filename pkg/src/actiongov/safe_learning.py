"""Supervised online learning loops: tabular Q-learning and data-driven
Koopman control, both run through the action supervisor.

The Q-learning loop penalizes proposals by how far the supervisor had to
move them, so the table learns to stay inside the safe action set while
the applied trajectory never violates constraints.  The Koopman loop fits
a lifted linear model recursively from the pre-adjustment actions and
re-solves a regulator on the lifted state every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .control_linalg import dare_solve, riccati_finite
from .errors import NoStabilizingSolutionError, NumericalError
from .governor import ActionDistance, GovernorState, TransitionPolicyModel, govern
from .trajectory import Trajectory


# ---------------------------------------------------------------------------
# tabular Q-learning


@dataclass
class QTable:
    """Lookup-table Q estimate with its learning hyperparameters."""

    values: np.ndarray
    gamma: float
    alpha: float
    epsilon: float
    penalty_m: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be (n_states, n_actions)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Q values must be finite")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.penalty_m <= 0.0:
            raise ValueError("penalty coefficient must be positive")

    @classmethod
    def zeros(cls, n_states, n_actions, gamma=0.95, alpha=0.5, epsilon=0.1, penalty_m=100.0):
        return cls(np.zeros((n_states, n_actions)), gamma, alpha, epsilon, penalty_m)

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.gamma, self.alpha, self.epsilon, self.penalty_m)

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "gamma": self.gamma,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "penalty_m": self.penalty_m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QTable":
        return cls(
            np.asarray(data["values"], dtype=float),
            data["gamma"],
            data["alpha"],
            data["epsilon"],
            data["penalty_m"],
        )


class ReplayBuffer:
    """Batch of pending table writes, emptied on every batch apply."""

    def __init__(self):
        self._entries: list[tuple[int, int, float]] = []

    def add(self, state_idx: int, action_idx: int, q_value: float):
        self._entries.append((int(state_idx), int(action_idx), float(q_value)))

    def __len__(self):
        return len(self._entries)

    def drain(self):
        entries = self._entries
        self._entries = []
        return entries


def epsilon_greedy(q: QTable, state_idx: int, rng) -> int:
    """Greedy action with probability 1 - epsilon, else uniform.

    Greedy ties resolve to the lowest action index.
    """
    if rng.random() < q.epsilon:
        return int(rng.integers(q.values.shape[1]))
    return int(np.argmax(q.values[state_idx]))


def modified_reward(r_applied: float, u1, u, m: float, dist: ActionDistance) -> float:
    """Applied-action reward minus the adjustment penalty."""
    return float(r_applied) - m * dist(u1, u)


def q_target(q: QTable, state_idx: int, action_idx: int, r_tilde: float, next_idx: int) -> float:
    """Blend of the stored estimate and the one-step bootstrapped return."""
    best_next = float(np.max(q.values[next_idx]))
    return (1.0 - q.alpha) * float(q.values[state_idx, action_idx]) + q.alpha * (
        float(r_tilde) + q.gamma * best_next
    )


@dataclass
class SafeQEnv:
    """Environment bundle for the supervised Q-learning loop.

    ``step(x, u, rng) -> (x_next, w)``; ``actions`` maps action indices to
    the action values proposed to the supervisor.  When ``oracle`` is None
    the loop runs unsupervised (plain Q-learning).
    """

    n_states: int
    n_actions: int
    actions: np.ndarray
    initial_state: object
    state_index: Callable
    step: Callable
    reward: Callable
    cost: Callable = None
    violated: Callable = None
    oracle: object = None
    model: Optional[TransitionPolicyModel] = None
    dist: ActionDistance = field(default_factory=ActionDistance)


def run_safe_q(env: SafeQEnv, q: QTable, t_max: int, big_t_max: int, rng):
    """Run the supervised Q-learning loop for ``big_t_max`` batches of
    ``t_max`` steps; returns the updated table and the trajectory.

    Targets are computed against the table as of the last batch apply and
    written under the pre-adjustment action.  ``t_max = 1`` (immediate
    apply) is the intended setting for lookup tables.
    """
    if t_max < 1 or big_t_max < 1:
        raise ValueError("t_max and big_t_max must be positive")
    q = q.copy()
    buffer = ReplayBuffer()
    gs = GovernorState()
    traj = Trajectory()
    x = env.initial_state
    t = 0
    for _ in range(big_t_max):
        for _ in range(t_max):
            s = env.state_index(x)
            a = epsilon_greedy(q, s, rng)
            u1 = np.atleast_1d(np.asarray(env.actions[a], dtype=float))
            if env.oracle is not None:
                outcome, gs = govern(x, u1, gs, env.oracle, env.model, env.dist)
                u = outcome.u
                branch = outcome.branch.value
                v_hat = gs.v_hat
            else:
                u = u1
                branch = "none"
                v_hat = None
            x_next, w = env.step(x, u, rng)
            r = env.reward(x, u)
            r_tilde = modified_reward(r, u1, u, q.penalty_m, env.dist)
            buffer.add(s, a, q_target(q, s, a, r_tilde, env.state_index(x_next)))
            cost = env.cost(x, u) if env.cost is not None else -r
            violated = env.violated(x, u) if env.violated is not None else False
            traj.append(t, _as_state_vec(x), u1, u, branch, v_hat, w, cost, violated)
            x = x_next
            t += 1
        for s, a, val in buffer.drain():
            q.values[s, a] = val
    return q, traj


def _as_state_vec(x):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    return arr if arr.size > 1 else np.array([float(arr[0]), 0.0])


# ---------------------------------------------------------------------------
# data-driven Koopman control


@dataclass(frozen=True)
class ObservableMap:
    """Named lifting of the state into observable space.

    The original state coordinates are expected to lead the lifted vector,
    which the shipped maps and the regulator penalties rely on.
    """

    fn: Callable
    n_z: int
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        z = np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float).ravel()
        if z.size != self.n_z:
            raise ValueError(f"observable map returned {z.size} values, expected {self.n_z}")
        if not np.all(np.isfinite(z)):
            raise ValueError("observable map produced non-finite values")
        return z


def identity_observables(n: int) -> ObservableMap:
    return ObservableMap(fn=lambda x: x, n_z=n, name="identity")


class KoopmanModel:
    """Lifted-state linear model with its recursive estimator state."""

    __slots__ = ("A", "B", "gamma_cov", "lam", "observables")

    def __init__(self, A, B, gamma_cov, lam: float, observables: ObservableMap):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        nz = observables.n_z
        if self.A.shape != (nz, nz):
            raise ValueError("A must be n_z x n_z")
        if self.B.shape[0] != nz:
            raise ValueError("B must have n_z rows")
        p = nz + self.B.shape[1]
        gamma_cov = np.atleast_2d(np.asarray(gamma_cov, dtype=float))
        if gamma_cov.shape != (p, p):
            raise ValueError("covariance must be (n_z + m) square")
        if np.max(np.abs(gamma_cov - gamma_cov.T)) > 1e-9:
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(gamma_cov)) <= 0.0:
            raise ValueError("covariance must be positive definite")
        if not (0.0 < lam <= 1.0):
            raise ValueError("forgetting factor must lie in (0, 1]")
        self.gamma_cov = gamma_cov
        self.lam = float(lam)
        self.observables = observables

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @classmethod
    def initial(cls, A0, B0, observables: ObservableMap, lam: float = 1.0, delta: float = 1e3):
        nz = observables.n_z
        m = np.atleast_2d(np.asarray(B0, dtype=float)).shape[1]
        return cls(A0, B0, delta * np.eye(nz + m), lam, observables)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "gamma_cov": self.gamma_cov.tolist(),
            "lam": self.lam,
            "observables": self.observables.name,
            "n_z": self.observables.n_z,
        }


def batch_fit(z_plus, z, u1, ridge: float = 0.0):
    """Least-squares fit of ``z+ ~ A z + B u`` from column-sample matrices.

    Uses the pseudoinverse, so rank-deficient data yields the minimum-norm
    solution; a ridge term is available when explicit regularization is
    preferred.
    """
    z_plus = np.atleast_2d(np.asarray(z_plus, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u1 = np.atleast_2d(np.asarray(u1, dtype=float))
    if not (z_plus.shape[1] == z.shape[1] == u1.shape[1]):
        raise ValueError("sample counts must agree across z+, z and u")
    g = np.vstack([z, u1])
    if ridge > 0.0:
        gram = g @ g.T + ridge * np.eye(g.shape[0])
        theta = z_plus @ g.T @ np.linalg.inv(gram)
    else:
        theta = z_plus @ np.linalg.pinv(g)
    nz = z.shape[0]
    return theta[:, :nz], theta[:, nz:]


def prediction_residual(A, B, z_plus, z, u1) -> float:
    """Frobenius-norm fit diagnostic for a lifted linear model."""
    return float(np.linalg.norm(z_plus - A @ z - B @ u1, "fro"))


def rls_update(km: KoopmanModel, x_prev, u1_prev, x_now) -> KoopmanModel:
    """One recursive least-squares step on a new transition sample.

    The correction pairs the prediction error with a gain row built from
    the covariance; the covariance is deflated by the forgetting factor and
    re-symmetrized every step.
    """
    g = km.observables
    z_prev = g(x_prev)
    z_now = g(x_now)
    u1_prev = np.atleast_1d(np.asarray(u1_prev, dtype=float))
    phi = np.concatenate([z_prev, u1_prev])
    gamma_phi = km.gamma_cov @ phi
    denom = float(phi @ gamma_phi) + km.lam
    if abs(denom) < 1e-14:
        raise NumericalError("vanishing denominator in the recursive update")
    gain_row = gamma_phi / denom
    err = z_now - km.A @ z_prev - km.B @ u1_prev
    theta = np.hstack([km.A, km.B]) + np.outer(err, gain_row)
    new_cov = (km.gamma_cov - np.outer(gamma_phi, gain_row)) / km.lam
    new_cov = 0.5 * (new_cov + new_cov.T)
    nz = g.n_z
    return KoopmanModel(theta[:, :nz], theta[:, nz:], new_cov, km.lam, g)


def koopman_control(km: KoopmanModel, x, q_z, r_u, q_f=None, n_horizon: Optional[int] = None):
    """First action of the lifted-state regulator at ``x``.

    ``n_horizon = None`` requests the infinite-horizon gain; when the
    current model admits no stabilizing solution the controller falls back
    to a 50-step horizon with the state penalty as terminal cost.
    """
    z = km.observables(x)
    if n_horizon is None:
        try:
            _, K = dare_solve(km.A, km.B, q_z, r_u)
        except (NoStabilizingSolutionError, NumericalError):
            K = riccati_finite(km.A, km.B, q_z, r_u, q_z, 50)
    else:
        terminal = q_z if q_f is None else q_f
        K = riccati_finite(km.A, km.B, q_z, r_u, terminal, n_horizon)
    return K @ z


@dataclass
class KoopmanEnv:
    """Environment bundle for the supervised Koopman learning loop.

    ``step(x, u) -> (x_next, w)`` advances the true system; ``sample_reset``
    draws a state inside the safe projection so supervision stays feasible
    after every reset.
    """

    initial_state: np.ndarray
    step: Callable
    q_z: np.ndarray
    r_u: np.ndarray
    oracle: object = None
    model: Optional[TransitionPolicyModel] = None
    dist: ActionDistance = field(default_factory=ActionDistance)
    sample_reset: Callable = None
    cost: Callable = None
    violated: Callable = None
    n_horizon: Optional[int] = None


def run_safe_koopman(env: KoopmanEnv, km: KoopmanModel, steps: int, reset_every, rng):
    """Supervised control-and-identify loop; returns the final model and
    the trajectory.

    Model updates always pair the pre-adjustment action with the observed
    transition of the supervised system, so the estimator learns the
    dynamics as seen through the supervisor.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    no_resets = reset_every is None or not np.isfinite(reset_every)
    if not no_resets and reset_every < 1:
        raise ValueError("reset period must be positive")
    gs = GovernorState()
    traj = Trajectory()
    x = np.asarray(env.initial_state, dtype=float).copy()
    for t in range(steps):
        if not no_resets and t > 0 and t % int(reset_every) == 0:
            x = np.asarray(env.sample_reset(rng), dtype=float)
        u1 = np.atleast_1d(koopman_control(km, x, env.q_z, env.r_u, n_horizon=env.n_horizon))
        if env.oracle is not None:
            outcome, gs = govern(x, u1, gs, env.oracle, env.model, env.dist)
            u = outcome.u
            branch = outcome.branch.value
            v_hat = gs.v_hat
        else:
            u = u1
            branch = "none"
            v_hat = None
        x_next, w = env.step(x, u)
        cost = env.cost(x, u) if env.cost is not None else float("nan")
        violated = env.violated(x, u) if env.violated is not None else False
        traj.append(t, x, u1, u, branch, v_hat, w, cost, violated)
        km = rls_update(km, x, u1, x_next)
        x = np.asarray(x_next, dtype=float)
    return km, traj
