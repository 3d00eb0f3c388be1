import numpy as np
import pytest

from actiongov.control_linalg import LinearPlant, NominalGain, OutputMap, closed_loop
from actiongov.convexset import HPolytope, lp_solve, rejection_sample
from actiongov.errors import InfeasibleStateError, MoasNotDeterminedError
from actiongov.lp import LpStatus, Sense
from actiongov.moas import (
    Moas,
    build_moas,
    feasible_action_set,
    linear_ag_step,
)
from actiongov.simlab import disturbance_bound


def scalar_toy():
    """Stable scalar loop At = 0.5, Bt = 0.5 with |x| <= 1 constraints."""
    plant = LinearPlant([[1.0]], [[1.0]], [[1.0]])
    out = OutputMap([[1.0]], [[0.0]], HPolytope([[1.0], [-1.0]], [1.0, 1.0]))
    gain = NominalGain([[-0.5]], [[0.5]])
    return plant, out, gain, closed_loop(plant, out, gain)


class TestBuild:
    def test_example_terminates_and_is_nonempty(self, moas_bundle):
        _, moas = moas_bundle
        assert 0 < moas.t_star <= 500
        assert not moas.set_xv.is_empty
        assert not moas.proj_x.is_empty
        assert not moas.proj_x_shrunk.is_empty

    def test_example_geometry(self, moas_bundle):
        # the binding face near the shipped start combines the action bound
        # at the first step with the position bound two steps ahead; the
        # start (14, 6) sits just outside it while (12, 6) is inside
        _, moas = moas_bundle
        assert moas.proj_x.contains([12.0, 6.0])
        assert moas.proj_x.contains([0.0, 0.0])
        assert not moas.proj_x.contains([14.0, 6.0])

    def test_zero_disturbance_leaves_offsets_unshrunk(self):
        plant, out, gain, cl = scalar_toy()
        w_zero = HPolytope([[1.0], [-1.0]], [0.0, 0.0])
        moas = build_moas(cl, out, w_zero, epsilon=0.01,
                          v_bounds=HPolytope.from_bounds([-2.0], [2.0]))
        # every constraint offset still carries the original bound 1
        # (modulo the steady-state tightening rows at (1 - eps))
        normals, offsets = moas.set_xv.normals, moas.set_xv.offsets
        x_rows = np.abs(normals[:, 1]) < 1e-12
        assert np.all(offsets[~x_rows] >= 1.0 - 0.011)

    def test_first_layer_rows_present_in_scalar_toy(self):
        plant, out, gain, cl = scalar_toy()
        w_zero = HPolytope([[1.0], [-1.0]], [0.0, 0.0])
        moas = build_moas(cl, out, w_zero, epsilon=0.01,
                          v_bounds=HPolytope.from_bounds([-2.0], [2.0]))
        rows = np.column_stack([moas.set_xv.normals, moas.set_xv.offsets])
        # |x| <= 1 rows survive reduction (normalized form (+-1, 0 | 1))
        assert any(np.allclose(r, [1.0, 0.0, 1.0], atol=1e-9) for r in rows)
        assert any(np.allclose(r, [-1.0, 0.0, 1.0], atol=1e-9) for r in rows)

    def test_output_tightening_is_monotone(self, rig):
        # direct-arithmetic oracle for the per-layer shrink of an interval
        # disturbance: support reduces offsets by |H Ct At^k E| each layer
        cl, out = rig.cl, rig.out
        H = out.constraint_set.normals
        offsets = out.constraint_set.offsets.copy()
        a_pow = np.eye(2)
        prev = offsets.copy()
        for _ in range(40):
            shrink = np.abs(H @ cl.Ct @ a_pow @ rig.plant.E).ravel()
            nxt = prev - shrink
            assert np.all(nxt <= prev + 1e-12)
            prev = nxt
            a_pow = a_pow @ cl.At

    def test_determination_index_is_minimal(self, base_cfg, rig, moas_bundle):
        _, moas = moas_bundle
        with pytest.raises(MoasNotDeterminedError):
            build_moas(rig.cl, rig.out, rig.w_set, epsilon=base_cfg.moas_epsilon,
                       t_cap=moas.t_star,
                       v_bounds=HPolytope.from_bounds([-25.0], [25.0]))

    def test_positive_invariance_sampled(self, rig, moas_bundle):
        _, moas = moas_bundle
        rng = np.random.default_rng(17)
        pts = rejection_sample(moas.set_xv, rng, 300, margin=1e-9)
        for z in pts:
            x, v = z[:2], z[2:]
            for w in (-1.0, 1.0):
                succ = np.concatenate([rig.cl.step(x, v, [w]), v])
                assert moas.set_xv.contains(succ, tol=1e-7)

    def test_projection_consistency(self, moas_bundle):
        # membership in the projection agrees with lift-LP feasibility
        _, moas = moas_bundle
        rng = np.random.default_rng(23)
        n = moas.n_states
        a_v = moas.set_xv.normals[:, n:]
        for _ in range(200):
            x = rng.uniform([-22, -6], [22, 12])
            rhs = moas.set_xv.offsets - moas.set_xv.normals[:, :n] @ x
            lift = lp_solve(np.zeros(1), HPolytope(a_v, rhs), Sense.MIN)
            feasible = lift.status is not LpStatus.INFEASIBLE
            member = moas.proj_x.contains(x, tol=1e-7)
            if feasible != member:
                slack = np.max(moas.proj_x.normals @ x - moas.proj_x.offsets)
                assert abs(slack) < 1e-6


class TestActionStep:
    def test_origin_passthrough(self, rig, moas_bundle):
        _, moas = moas_bundle
        u, adjusted = linear_ag_step(moas, rig.plant, rig.out, rig.w_set,
                                     [0.0, 0.0], [0.0])
        assert not adjusted
        assert u[0] == 0.0

    def test_scalar_clamp(self):
        # feasible action interval [-1, 1]: proposals clamp to the boundary
        plant = LinearPlant([[0.0]], [[1.0]], [[1.0]])
        out = OutputMap([[0.0]], [[1.0]], HPolytope([[1.0], [-1.0]], [1.0, 1.0]))
        big = HPolytope.from_bounds([-100.0], [100.0])
        moas = Moas(0, HPolytope.from_bounds([-100.0, -100.0], [100.0, 100.0]),
                    big, big, 0.01, 1, 1)
        u, adjusted = linear_ag_step(moas, plant, out, disturbance_bound(),
                                     [0.0], [3.0])
        assert adjusted
        assert u[0] == pytest.approx(1.0, abs=1e-9)

    def test_adjusted_action_satisfies_both_constraints(self, rig, moas_bundle):
        _, moas = moas_bundle
        x = np.array([12.0, 6.0])
        u1 = rig.gain.K @ x
        u, adjusted = linear_ag_step(moas, rig.plant, rig.out, rig.w_set, x, u1)
        assert adjusted
        # membership oracle on the returned action
        y = rig.out.C @ x + rig.out.D @ u
        assert rig.out.constraint_set.contains(y, tol=1e-7)
        succ = rig.plant.A @ x + rig.plant.B @ u
        assert moas.proj_x_shrunk.contains(succ, tol=1e-7)

    def test_infeasible_state_raises(self, rig, moas_bundle):
        # (14, 6) admits no action keeping the successor inside the robust
        # projection: the position constraint two steps ahead is already
        # committed by the current position and velocity
        _, moas = moas_bundle
        with pytest.raises(InfeasibleStateError):
            linear_ag_step(moas, rig.plant, rig.out, rig.w_set, [14.0, 6.0], [0.0])

    def test_recursive_feasibility_sampled(self, rig, moas_bundle):
        _, moas = moas_bundle
        rng = np.random.default_rng(29)
        xs = rejection_sample(moas.proj_x, rng, 200, margin=1e-9)
        for x in xs:
            u1 = rng.uniform(-8.0, 8.0, size=1)
            u, _ = linear_ag_step(moas, rig.plant, rig.out, rig.w_set, x, u1)
            for w in (-1.0, 1.0):
                succ = rig.plant.step(x, u, [w])
                assert not feasible_action_set(moas, rig.plant, rig.out, succ).is_empty

    def test_norm_variants_agree_for_scalar_actions(self, rig, moas_bundle):
        _, moas = moas_bundle
        x = np.array([10.0, 5.0])
        for u1 in ([-9.0], [2.0], [7.5]):
            ul1, _ = linear_ag_step(moas, rig.plant, rig.out, rig.w_set, x, u1, "l1")
            uli, _ = linear_ag_step(moas, rig.plant, rig.out, rig.w_set, x, u1, "linf")
            assert ul1[0] == pytest.approx(uli[0], abs=1e-9)

    def test_any_action_stream_stays_safe_for_500_steps(self, rig, moas_bundle):
        # arbitrary pre-adjustment proposals, supervision keeps the true
        # closed loop admissible for the whole run
        from actiongov.simlab import disturbance, is_violated

        _, moas = moas_bundle
        rng = np.random.default_rng(31)
        x = np.array([12.0, 6.0])
        for _ in range(500):
            u1 = rng.uniform(-10.0, 10.0, size=1)
            u, _ = linear_ag_step(moas, rig.plant, rig.out, rig.w_set, x, u1)
            assert not is_violated(x, u)
            x = rig.plant.step(x, u, [disturbance(x)])


class TestGovernWithLinearOracle:
    def test_interior_safe_proposal_passes_through(self, rig, moas_bundle):
        from actiongov.governor import Branch, GovernorState, govern
        from actiongov.simlab import transition_model

        oracle, _ = moas_bundle
        gs = GovernorState()
        outcome, gs = govern(np.zeros(2), np.array([0.3]), gs, oracle,
                             transition_model(rig), rig.dist)
        assert outcome.branch is Branch.ADJUSTED
        assert outcome.u[0] == pytest.approx(0.3, abs=1e-12)
        assert gs.v_hat is None  # the backup reference was never touched

    def test_backup_reference_polytope_route(self, rig, moas_bundle):
        # the reference slice at a member state is nonempty and the backup
        # selection lands inside it
        from actiongov.governor import backup_reference

        oracle, moas = moas_bundle
        x = np.array([5.0, 2.0])
        assert oracle.proj_member(x)
        v = backup_reference(x, np.array([0.0]), oracle, None, rig.dist)
        assert v is not None
        assert oracle.member(x, v)
