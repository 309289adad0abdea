import numpy as np
import pytest

from formseek.averaging import (assemble_first, assemble_second,
                                assemble_third, averaging_residual, d1_psi,
                                d2_psi, lie_tensors, xm2_xm1_psi_fd,
                                xm3_xm2_xm1_psi_fd, xm_psi_fd, y_psi,
                                _time_factor_series)
from formseek.dither import (SinusoidSchedule, all_m_indices,
                             log_sinusoid_shape, u_eval, uv_tilde, uv_tilde2)
from formseek.dynamics import (SystemDef, Trajectory, default_dither_dt,
                               integrate_closed_loop, lie_bracket_rhs)
from formseek.potential import BodyFrames, FormationSpec, grad_psi
from formseek.rigidity import Graph

RECT_DESIRED = {(1, 2): 3.0, (3, 4): 3.0, (2, 3): 4.0, (1, 4): 4.0,
                (1, 3): 5.0, (2, 4): 5.0}
RECT_INITIAL = np.array([0.0, 0.0, -1.0, 4.0, 5.0, 3.0, 3.0, 0.0])
RECT_TARGET = np.array([0.0, 0.0, 3.0, 0.0, 3.0, 4.0, 0.0, 4.0])


@pytest.fixture(scope="module")
def sysd():
    spec = FormationSpec.from_distances(Graph.complete(4), 2, RECT_DESIRED)
    rng = np.random.default_rng(5)
    frames = BodyFrames(rng.normal(size=(4, 2, 2)))
    return SystemDef(spec, frames, log_sinusoid_shape("tanh"),
                     SinusoidSchedule.from_rule(4, 2, 7.0))


@pytest.fixture(scope="module")
def point(sysd):
    rng = np.random.default_rng(9)
    return RECT_INITIAL + 0.2 * rng.normal(size=8)


class TestClosedForms:
    def test_first_order(self, sysd, point):
        tensors = lie_tensors(sysd, point)
        F = assemble_first(sysd, tensors)
        for a, m in enumerate(all_m_indices(4, 2)):
            assert F[a] == pytest.approx(xm_psi_fd(sysd, m, point), abs=1e-9)

    def test_second_order(self, sysd, point):
        tensors = lie_tensors(sysd, point)
        G = assemble_second(sysd, tensors)
        ms = all_m_indices(4, 2)
        rng = np.random.default_rng(1)
        for a, b in rng.integers(0, len(ms), size=(20, 2)):
            fd = xm2_xm1_psi_fd(sysd, ms[a], ms[b], point)
            assert G[a, b] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_third_order(self, sysd, point):
        tensors = lie_tensors(sysd, point)
        T = assemble_third(sysd, tensors)
        ms = all_m_indices(4, 2)
        rng = np.random.default_rng(2)
        for a, b, c in rng.integers(0, len(ms), size=(15, 3)):
            fd = xm3_xm2_xm1_psi_fd(sysd, ms[a], ms[b], ms[c], point)
            assert T[a, b, c] == pytest.approx(fd, rel=2e-4, abs=1e-3)

    def test_all_zero_at_target(self, sysd):
        tensors = lie_tensors(sysd, RECT_TARGET)
        assert np.all(assemble_first(sysd, tensors) == 0.0)
        # h(0) = 0 kills every term of the second/third assemblies as well
        assert np.all(assemble_second(sysd, tensors) == 0.0)
        assert np.all(assemble_third(sysd, tensors) == 0.0)


class TestYPsi:
    def test_matches_lie_bracket_rhs_direction(self, sysd, point):
        # Y psi is the derivative of psi along the averaged field
        v = lie_bracket_rhs(sysd, point)
        assert y_psi(sysd, point) == pytest.approx(
            np.dot(grad_psi(sysd.spec, point), v), rel=1e-10)

    def test_frame_independent(self, point):
        spec = FormationSpec.from_distances(Graph.complete(4), 2, RECT_DESIRED)
        shape = log_sinusoid_shape("tanh")
        sched = SinusoidSchedule.from_rule(4, 2, 7.0)
        a = SystemDef(spec, BodyFrames.identity(4, 2), shape, sched)
        rng = np.random.default_rng(17)
        b = SystemDef(spec, BodyFrames(rng.normal(size=(4, 2, 2))), shape,
                      sched)
        assert y_psi(a, point) == pytest.approx(y_psi(b, point), abs=1e-10)

    def test_zero_at_target(self, sysd):
        assert y_psi(sysd, RECT_TARGET) == 0.0


class TestTimeFactors:
    def test_series_matches_scalar(self, sysd):
        ts = np.array([0.0, 0.21, 1.9])
        ms = all_m_indices(4, 2)
        u, uv, uv2 = _time_factor_series(sysd, ts)
        sched = sysd.schedule
        for s, t in enumerate(ts):
            for a, m in enumerate(ms):
                assert u[s, a] == pytest.approx(u_eval(sched, m, t), abs=1e-12)
                assert uv[s, a] == pytest.approx(uv_tilde(sched, m, t),
                                                 abs=1e-12)
            for a in range(0, len(ms), 5):
                for b in range(0, len(ms), 5):
                    assert uv2[s, a, b] == pytest.approx(
                        uv_tilde2(sched, ms[a], ms[b], t), abs=1e-12)


class TestResidual:
    def test_rectangle_window(self, sysd):
        dt = default_dither_dt(sysd.schedule)
        traj = integrate_closed_loop(sysd, RECT_INITIAL, 0.0, 2.0, dt=dt)
        rep = averaging_residual(sysd, traj)
        assert rep["max_rel_residual"] < 1e-3
        assert np.isfinite(rep["c1_hat"]) and np.isfinite(rep["c2_hat"])
        assert rep["psi_start"] == pytest.approx(175.0)

    def test_resting_at_target(self, sysd):
        S = 64
        dt = default_dither_dt(sysd.schedule)
        states = np.tile(RECT_TARGET, (S, 1))
        traj = Trajectory(0.0, dt, states, np.zeros(S), np.zeros((S, 4)))
        rep = averaging_residual(sysd, traj)
        assert rep["max_abs_residual"] == 0.0
        assert rep["max_abs_d1"] == 0.0
        assert rep["max_abs_d2"] == 0.0

    def test_rejects_coarse_dt(self, sysd):
        states = np.tile(RECT_TARGET, (10, 1))
        traj = Trajectory(0.0, 1.0, states, np.zeros(10), np.zeros((10, 4)))
        with pytest.raises(ValueError, match="enforced"):
            averaging_residual(sysd, traj)

    def test_window_selection(self, sysd):
        dt = default_dither_dt(sysd.schedule)
        traj = integrate_closed_loop(sysd, RECT_INITIAL, 0.0, 1.0, dt=dt)
        rep = averaging_residual(sysd, traj, t_start=0.25, t_end=0.75)
        assert rep["t_window"][0] >= 0.25 - dt
        assert rep["t_window"][1] <= 0.75 + dt

    def test_d_terms_match_scalar_evaluators(self, sysd, point):
        t = 0.42
        ms = all_m_indices(4, 2)
        tensors = lie_tensors(sysd, point)
        F = assemble_first(sysd, tensors)
        G = assemble_second(sysd, tensors)
        sched = sysd.schedule
        d1_direct = -sum(uv_tilde(sched, m, t) * F[a]
                         for a, m in enumerate(ms))
        d1_direct -= sum(uv_tilde2(sched, m2, m1, t) * G[a, b]
                         for a, m2 in enumerate(ms)
                         for b, m1 in enumerate(ms))
        assert d1_psi(sysd, t, point) == pytest.approx(d1_direct, rel=1e-10)
        assert np.isfinite(d2_psi(sysd, t, point))


class TestFrequencyScalingOnTrajectory:
    def test_d1_shrinks_with_omega(self, sysd):
        # at a matched state, |D1 psi| decreases roughly like 1/sqrt(omega)
        spec, frames, shape = sysd.spec, sysd.frames, sysd.shape
        p = RECT_INITIAL
        t = 0.3
        vals = {}
        for omega in (7.0, 20.0, 50.0):
            s = SystemDef(spec, frames, shape,
                          SinusoidSchedule.from_rule(4, 2, omega))
            ts = np.linspace(0.0, 2 * np.pi, 600)
            vals[omega] = max(abs(d1_psi(s, tt, p)) for tt in ts)
        assert vals[20.0] < vals[7.0]
        assert vals[50.0] < vals[20.0]
        ratio = vals[7.0] / vals[50.0]
        assert ratio == pytest.approx(np.sqrt(50.0 / 7.0), rel=0.35)
