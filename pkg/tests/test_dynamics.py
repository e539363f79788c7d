import numpy as np
import pytest

from coalitionflow import (
    FeasibilityError,
    FiniteSupportProcess,
    FlowDynamics,
    FlowState,
    GameBox,
    KahanSum,
    SimConfig,
    SystemMatrices,
    generate_support,
    make_full,
    make_partial,
    run_discrete,
    run_trajectory,
    sample_indices,
    stationary_control,
    trial_rng,
)
from coalitionflow.coalitions import AllocationBounds

U_NOM = np.array([2.5, 3, 4.5, 1.5, 1, 1.5, 1.5, 2, 1.5])
V_NOM = np.array([1, 2, 3, 4, 5, 6, 10.0])
BOX = GameBox(lower=np.zeros(7), upper=np.array([4, 4, 4, 5, 6, 7, 12.0]))
BOUNDS = AllocationBounds(a_min=np.zeros(3), a_max=np.full(3, 10.0))
X0 = np.array([4, -3, 2, 6, -4, 3, 0.0])


@pytest.fixture(scope="module")
def mats():
    return SystemMatrices.for_players(3)


@pytest.fixture(scope="module")
def dyn(mats):
    return FlowDynamics(mats=mats, u_nom=U_NOM)


def degenerate_source():
    support = np.tile(V_NOM[:, None], (1, 7))
    weights = np.full(7, 1.0 / 7.0)
    return FiniteSupportProcess(support=support, weights=weights, box=BOX)


class TestStepContinuous:
    def test_nominal_pair_is_fixed_point(self, dyn):
        state = FlowState(x=X0.copy(), y=np.zeros(2), t=0.0, x0=X0.copy())
        out = dyn.step(state, U_NOM, V_NOM, dt=0.05)
        np.testing.assert_array_equal(out.x, X0)
        np.testing.assert_array_equal(out.y, 0.0)
        assert out.t == 0.05

    def test_constant_inputs_linear(self, dyn, mats):
        rng = trial_rng(1)
        u = U_NOM + 0.1 * rng.normal(size=9)
        v = V_NOM + rng.normal(size=7)
        state = FlowState(x=np.zeros(7), y=np.zeros(2), t=0.0, x0=np.zeros(7))
        for _ in range(20):
            state = dyn.step(state, u, v, dt=0.1)
        np.testing.assert_allclose(state.x, 2.0 * (mats.B @ u - v), atol=1e-12)

    def test_z_increment_matches_reduced_dynamics(self, dyn, mats):
        rng = trial_rng(2)
        for _ in range(200):
            state = FlowState(
                x=rng.normal(size=7), y=rng.normal(size=2), t=0.0, x0=np.zeros(7)
            )
            u = U_NOM + rng.normal(size=9)
            v = V_NOM + rng.normal(size=7)
            out = dyn.step(state, u, v, dt=0.05)
            dz = mats.z_from(out.x, out.y) - mats.z_from(state.x, state.y)
            expected = 0.05 * ((u - U_NOM) - mats.B_dag @ (v - V_NOM))
            np.testing.assert_allclose(dz, expected, atol=1e-7)

    def test_feasibility_guard(self, mats):
        guarded = FlowDynamics(
            mats=mats,
            u_nom=U_NOM,
            u_lo=np.zeros(9),
            u_hi=np.full(9, 10.0),
        )
        state = FlowState(x=np.zeros(7), y=np.zeros(2), t=0.0, x0=np.zeros(7))
        bad = U_NOM.copy()
        bad[5] = -0.5
        with pytest.raises(FeasibilityError):
            guarded.step(state, bad, V_NOM, dt=0.05)


class TestStepDiscrete:
    def test_matched_deviations_fixed(self, dyn):
        x = np.array([1.0, -1, 0, 2, 0, 0, 1])
        x_next, inc = dyn.step_discrete(x, U_NOM, V_NOM)
        np.testing.assert_array_equal(x_next, x)
        np.testing.assert_array_equal(inc, 0.0)

    def test_matched_disturbance(self, dyn, mats):
        rng = trial_rng(3)
        du = rng.normal(size=9) * 0.1
        dv = mats.B @ du
        x = rng.normal(size=7)
        x_next, _ = dyn.step_discrete(x, U_NOM + du, V_NOM + dv)
        np.testing.assert_allclose(x_next, x, atol=1e-12)

    def test_running_mean_telescopes(self, dyn):
        rng = trial_rng(4)
        x = rng.normal(size=7)
        x0 = x.copy()
        increments = []
        for _ in range(100):
            u = U_NOM + rng.normal(size=9) * 0.2
            v = V_NOM + rng.normal(size=7) * 0.5
            x, inc = dyn.step_discrete(x, u, v)
            increments.append(inc)
        k = len(increments)
        np.testing.assert_allclose((x - x0) / k, np.mean(increments, axis=0), atol=1e-12)

    def test_agrees_with_unit_step_continuous(self, dyn, mats):
        # stationary control: both paths see bitwise-equal increments
        state = FlowState(x=X0.copy(), y=np.zeros(2), t=0.0, x0=X0.copy())
        xd = X0.copy()
        rng = trial_rng(5)
        for _ in range(50):
            v = V_NOM + rng.normal(size=7)
            state = dyn.step(state, U_NOM, v, dt=1.0)
            xd, _ = dyn.step_discrete(xd, U_NOM, v)
            np.testing.assert_array_equal(state.x, xd)

    def test_agrees_for_general_controls(self, dyn):
        state_x = X0.copy()
        xd = X0.copy()
        rng = trial_rng(6)
        for _ in range(100):
            u = U_NOM + rng.normal(size=9) * 0.3
            v = V_NOM + rng.normal(size=7)
            state_x = state_x + 1.0 * (dyn.mats.B @ u - v)
            xd, _ = dyn.step_discrete(xd, u, v)
            np.testing.assert_allclose(state_x, xd, atol=1e-10)


class TestRunTrajectory:
    def test_stationary_degenerate_source_freezes_state(self, dyn):
        cfg = SimConfig(dt=0.05, steps=500, seed=1, x0=X0, stride=50)
        rec = run_trajectory(cfg, stationary_control(U_NOM), degenerate_source(), dyn)
        np.testing.assert_array_equal(rec.x_final, X0)
        np.testing.assert_array_equal(rec.xs[-1], X0)
        assert np.abs(rec.ratios[1:]).max() == 0.0

    def test_row_count_and_round_trip(self, mats, dyn):
        cfg = SimConfig(dt=0.05, steps=730, seed=2, x0=X0, stride=100)
        ctrl = make_full(U_NOM, V_NOM, BOUNDS, 10.0, mats)
        src = generate_support(BOX, V_NOM, trial_rng(20))
        rec = run_trajectory(cfg, ctrl, src, dyn, rng=trial_rng(21))
        assert rec.times.size == -(-730 // 100)
        for row in range(rec.times.size):
            stacked = np.concatenate([rec.xs[row], np.zeros(0)])
            z = rec.zs[row]
            np.testing.assert_allclose(mats.B @ z, rec.xs[row], atol=1e-7)

    def test_integral_consistency(self, mats, dyn):
        cfg = SimConfig(dt=0.05, steps=2000, seed=3, x0=X0, stride=100)
        ctrl = make_partial(U_NOM, 0.4, V_NOM, BOUNDS, 10.0, mats)
        src = generate_support(BOX, V_NOM, trial_rng(22))
        rec = run_trajectory(cfg, ctrl, src, dyn, rng=trial_rng(23))
        lhs = rec.eps_final - rec.eps0
        rhs = mats.incidence @ rec.int_a - rec.int_v
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_half_step_rerun_first_order(self, mats):
        # same piecewise-constant value path, dt and dt/2
        ctrl = make_full(U_NOM, V_NOM, BOUNDS, 10.0, mats)
        src = generate_support(BOX, V_NOM, trial_rng(24))
        steps, dt = 500, 0.05
        vpath = src.support[:, sample_indices(src, trial_rng(25), steps)]

        def integrate(substeps):
            x = X0.copy()
            y = np.zeros(2)
            eps = np.zeros(7)
            h = dt / substeps
            for k in range(steps):
                v = vpath[:, k]
                for _ in range(substeps):
                    u = ctrl.act(x, y)
                    x = x + h * (mats.B @ u - v)
                    y = y + h * (mats.C @ (u - U_NOM))
                    eps = eps + h * (mats.incidence @ u[:3] - v)
            return eps

        gap = np.abs(integrate(1) - integrate(2)).max()
        assert gap <= 0.5 * dt * (steps * dt)

    def test_running_average_consistency(self, mats, dyn):
        cfg = SimConfig(dt=0.05, steps=1500, seed=4, x0=X0, stride=100)
        ctrl = make_full(U_NOM, V_NOM, BOUNDS, 10.0, mats)
        src = generate_support(BOX, V_NOM, trial_rng(26))
        rec = run_trajectory(cfg, ctrl, src, dyn, rng=trial_rng(27))
        # plain-summation oracle for the allocation integral
        rng = trial_rng(27)
        idx = sample_indices(src, rng, cfg.steps)
        x = X0.copy()
        y = np.zeros(2)
        int_a = np.zeros(3)
        check_rows = {}
        for k in range(cfg.steps):
            if k % cfg.stride == 0 and k > 0:
                check_rows[k] = int_a / (k * cfg.dt)
            v = src.support[:, idx[k]]
            u = ctrl.act(x, y)
            x = x + cfg.dt * (mats.B @ u - v)
            y = y + cfg.dt * (mats.C @ (u - U_NOM))
            int_a = int_a + cfg.dt * u[:3]
        for k, abar in check_rows.items():
            row = k // cfg.stride
            np.testing.assert_allclose(rec.abars[row], abar, rtol=1e-6)

    def test_aborts_on_nonfinite(self, mats):
        # a wildly infeasible fixed control blows the state up linearly, so
        # feed non-finite values instead
        bad_support = np.tile(V_NOM[:, None], (1, 7))
        bad_support[0, 0] = np.inf
        src = FiniteSupportProcess(
            support=bad_support, weights=np.full(7, 1 / 7), box=BOX
        )
        dyn_open = FlowDynamics(mats=mats, u_nom=U_NOM)
        cfg = SimConfig(dt=0.05, steps=200, seed=5, stride=10)
        with pytest.raises((FloatingPointError, ValueError)):
            run_trajectory(cfg, stationary_control(U_NOM), src, dyn_open)


class TestRunDiscrete:
    def test_keeps_full_path_and_ratio_identity(self, mats, dyn):
        from coalitionflow import DiscreteApproachController

        ctrl = DiscreteApproachController(
            inner=make_partial(U_NOM, 1.0, V_NOM, BOUNDS, 10.0, mats)
        )
        cfg = SimConfig(dt=0.05, steps=400, seed=6, x0=X0, stride=40)
        src = generate_support(BOX, V_NOM, trial_rng(30))
        rec = run_discrete(cfg, ctrl, src, dyn, rng=trial_rng(31))
        assert rec.x_full is not None and rec.x_full.shape == (401, 7)
        increments = np.diff(rec.x_full, axis=0)
        k = rec.steps
        np.testing.assert_allclose(
            (rec.x_full[k] - rec.x0) / k, increments.mean(axis=0), atol=1e-12
        )
        assert rec.t_final == 400.0


class TestKahan:
    def test_compensated_sum_beats_plain(self):
        rng = trial_rng(40)
        terms = rng.uniform(0.0, 1.0, size=100_000) * 1e-6
        acc = KahanSum(1)
        for t in terms:
            acc.add(np.array([t]))
        exact = np.sum(terms.astype(np.longdouble))
        assert abs(acc.total[0] - float(exact)) <= 1e-18 * terms.size
