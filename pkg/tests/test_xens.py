import math

import numpy as np
import pytest
import scipy.integrate
import scipy.optimize

from jumpctl import liouville, linops, model, sens, xens
from jumpctl.errors import DegeneracyWarning, DivergenceError, RangeError
from jumpctl.model import ControlPolicy, ModelParams

from conftest import policies

I9 = np.eye(9)
RHO0 = liouville.vectorize(np.diag([1.0, 0.0, 0.0]))
TR = liouville.trace_functional()


def all_formulas(dt=3.0, unitary=None):
    return [ControlPolicy.rotate_away(dt, unitary), ControlPolicy.pi_half(dt, unitary),
            ControlPolicy.repeat_reset(dt, 3, unitary), ControlPolicy.repeat_reset(dt, math.inf, unitary)]


class TestNoJumpMap:
    @pytest.mark.parametrize("pol", all_formulas(), ids=str)
    def test_before_first_pulse(self, params, pol):
        R = liouville.no_jump_generator(params)
        np.testing.assert_allclose(xens.no_jump_map(pol, params, 2.5), linops.expm(R, 2.5), atol=1e-15)

    @pytest.mark.parametrize("pol", all_formulas(unitary=np.eye(3)), ids=str)
    def test_identity_pulse(self, params, pol):
        R = liouville.no_jump_generator(params)
        for tau in (3.0, 4.2, 10.0):
            np.testing.assert_allclose(xens.no_jump_map(pol, params, tau), linops.expm(R, tau), atol=1e-13)

    def test_pulse_count_capped(self, params):
        dyn = xens.ControlledDynamics(ControlPolicy.repeat_reset(1.0, 2), params)
        R = liouville.no_jump_generator(params)
        expected = linops.expm(R, 1.5) @ dyn.UB @ dyn.UB
        np.testing.assert_allclose(dyn.no_jump_map(3.5), expected, atol=1e-14)

    def test_rotate_away_suppresses_late_survival(self, params):
        ctl = xens.ControlledDynamics(ControlPolicy.rotate_away(3.0), params)
        free = xens.ControlledDynamics(ControlPolicy.none(), params)
        assert ctl.survival(4.0) < free.survival(4.0)
        for t in (6.0, 10.0, 20.0):
            assert ctl.survival(t) < 0.2 * free.survival(t)

    def test_negative_time(self, params):
        with pytest.raises(ValueError):
            xens.no_jump_map(ControlPolicy.none(), params, -1.0)


class TestLaplace:
    @pytest.mark.parametrize("pol", all_formulas(unitary=np.eye(3)), ids=str)
    def test_identity_pulse_is_resolvent(self, params, pol):
        R = liouville.no_jump_generator(params)
        np.testing.assert_allclose(xens.laplace_no_jump(pol, params, 0.3),
                                   np.linalg.inv(0.3 * I9 - R), atol=1e-12)

    def test_one_fold_equals_single(self, params):
        U = model.control_unitary(ControlPolicy.rotate_away(3.0), params)
        single = xens.laplace_no_jump(ControlPolicy.rotate_away(3.0), params, 0.2)
        folded = xens.ControlledDynamics(ControlPolicy.repeat_reset(3.0, 1, U), params)
        folded._powers = None
        # force the general M-fold sum with a single term
        q = math.exp(-0.6)
        D = (I9 - folded.Us) @ folded.B
        general = folded._resolvent(0.2) @ (I9 - D @ np.tensordot([q], np.array([I9]), axes=1))
        np.testing.assert_allclose(folded.laplace_no_jump(0.2), single, atol=1e-14)
        np.testing.assert_allclose(general, single, atol=1e-14)

    def test_quadrature_oracle(self, params):
        dyn = xens.ControlledDynamics(ControlPolicy.rotate_away(3.0), params)
        x = 0.5
        # Simpson per smooth piece: [0, 3] and [3, 200]
        def simpson(a, b, n):
            t = np.linspace(a, b, n)
            # the map is right-continuous at the pulse: close the first piece from below
            if b == 3.0:
                t[-1] = np.nextafter(3.0, 0.0)
            vals = np.array([math.exp(-x * u) * dyn.no_jump_map(u) for u in t])
            return scipy.integrate.simpson(vals, x=t, axis=0)
        numeric = simpson(0.0, 3.0, 301) + simpson(3.0, 200.0, 8001)
        assert np.abs(numeric - dyn.laplace_no_jump(x)).max() <= 1e-6

    def test_finite_repeats_approach_infinite(self, params):
        inf = xens.laplace_no_jump(ControlPolicy.repeat_reset(3.0), params, 0.1)
        many = xens.laplace_no_jump(ControlPolicy.repeat_reset(3.0, 400), params, 0.1)
        np.testing.assert_allclose(many, inf, atol=1e-10)

    @pytest.mark.parametrize("x", [-0.2, 0.0, 0.1, 1.0])
    def test_infinite_closed_form(self, params, x):
        dyn = xens.ControlledDynamics(ControlPolicy.repeat_reset(3.0), params)
        np.testing.assert_allclose(dyn.laplace_no_jump(x), dyn.laplace_infinite_closed_form(x),
                                   atol=1e-12)

    def test_infinite_divergence(self, params):
        with pytest.raises(DivergenceError) as info:
            xens.laplace_no_jump(ControlPolicy.repeat_reset(3.0), params, -0.3)
        assert info.value.spectral_radius >= 1

    def test_uncontrolled_domain(self, params):
        with pytest.raises(DivergenceError):
            xens.laplace_no_jump(ControlPolicy.none(), params, -0.05)


class TestTiltedMap:
    @pytest.mark.parametrize("name", ["none", "rotate_away", "pi_half", "repeat_reset"])
    def test_probability_conserving(self, params, name):
        F = xens.x_tilted_map(policies()[name], params, 0.0)
        assert np.abs(TR @ F - TR).max() <= 1e-10

    def test_renewal_to_ground(self, params):
        out = xens.x_tilted_map(ControlPolicy.none(), params, 0.0) @ RHO0
        np.testing.assert_allclose(out, RHO0, atol=1e-12)

    def test_inversion_identity(self, params):
        # g = theta^{-1}, so the eigenvalue at x = theta(s) is exp(+s)
        s = scipy.optimize.brentq(lambda v: sens.scgf(params, v) - 0.1, -1.0, 0.0, xtol=1e-14)
        lam = linops.dominant_eig(xens.x_tilted_map(ControlPolicy.none(), params, 0.1),
                                  linops.LARGEST_MODULUS).value
        assert lam.real == pytest.approx(math.exp(s), rel=1e-9)

    @pytest.mark.parametrize("name", ["none", "rotate_away", "pi_half", "repeat_reset"])
    def test_rank_one_eigenvalue(self, params, name):
        dyn = xens.ControlledDynamics(policies()[name], params)
        for x in (-0.03, 0.0, 0.2, 1.5):
            F = dyn.tilted_map(x)
            assert np.linalg.matrix_rank(F, tol=1e-12 * np.abs(F).max()) == 1
            lam = linops.dominant_eig(F, linops.LARGEST_MODULUS).value
            assert dyn.g(x) == pytest.approx(math.log(lam.real), abs=1e-12)


class TestG:
    @pytest.mark.parametrize("name", ["none", "rotate_away", "pi_half", "repeat_reset"])
    def test_zero(self, params, name):
        assert abs(xens.g_of_x(policies()[name], params, 0.0)) < 1e-12

    def test_identity_pulse(self, params):
        x = np.linspace(-0.02, 1.0, 12)
        base = xens.g_curve(ControlPolicy.none(), params, x)
        for pol in all_formulas(unitary=np.eye(3)):
            np.testing.assert_allclose(xens.g_curve(pol, params, x), base, atol=1e-12)

    @pytest.mark.parametrize("name", ["none", "rotate_away", "pi_half", "repeat_reset"])
    def test_decreasing(self, params, name):
        g = xens.g_curve(policies()[name], params, np.linspace(0.0, 2.0, 41))
        assert np.all(np.diff(g) < 0)


class TestControlledScgf:
    @pytest.mark.parametrize("name", ["none", "rotate_away", "pi_half", "repeat_reset"])
    def test_round_trip(self, params, name):
        dyn = xens.ControlledDynamics(policies()[name], params)
        for s in (-0.3, 0.0, 0.2, 1.0):
            theta = dyn.theta(s)
            if s == 0.0:
                assert abs(theta) < 1e-12
            assert dyn.g(theta) == pytest.approx(s, abs=1e-9)

    def test_uncontrolled_equivalence(self, params):
        for s in np.linspace(-0.2, 1.0, 13):
            assert xens.controlled_scgf(ControlPolicy.none(), params, s) == pytest.approx(
                sens.scgf(params, s), abs=1e-8)

    def test_one_fold_is_single(self, params):
        U = model.control_unitary(ControlPolicy.rotate_away(3.0), params)
        for s in (-0.1, 0.4):
            assert xens.controlled_scgf(ControlPolicy.repeat_reset(3.0, 1, U), params, s) == pytest.approx(
                xens.controlled_scgf(ControlPolicy.rotate_away(3.0), params, s), abs=1e-12)

    @pytest.mark.parametrize("make", [ControlPolicy.rotate_away, ControlPolicy.pi_half,
                                      ControlPolicy.repeat_reset])
    def test_late_control_is_harmless(self, params, make):
        # the dark-state shoulder decays slowly (rate ~0.04), so how late is
        # "late enough" depends on s: s > 0 weights long waits more heavily
        assert xens.controlled_scgf(make(50.0), params, -0.3) == pytest.approx(
            sens.scgf(params, -0.3), abs=1e-6)
        assert xens.controlled_scgf(make(200.0), params, -0.1) == pytest.approx(
            sens.scgf(params, -0.1), abs=1e-6)
        err = [abs(xens.controlled_scgf(make(dt), params, 0.5) - sens.scgf(params, 0.5))
               for dt in (50.0, 100.0, 200.0, 400.0)]
        assert all(b < a for a, b in zip(err, err[1:]))

    def test_rotate_away_shifts_peak(self, params):
        grid = np.linspace(-0.2, 1.0, 61)
        base = sens.ld_curve(params, grid).peak()
        moved = xens.controlled_curve(ControlPolicy.rotate_away(3.0), params, grid).peak()
        assert moved > base

    def test_reset_sector_domain(self, params):
        # U' returns the no-jump state to |0>, so after a reset the series only
        # sees the per-period survival S(dt), not the full spectral radius
        pol = ControlPolicy.repeat_reset(3.0)
        dyn = xens.ControlledDynamics(pol, params)
        s_dt = model.no_jump_state(params, 3.0).survival
        assert dyn.abscissa == pytest.approx(math.log(s_dt) / 3.0, abs=1e-10)
        assert dyn.abscissa < dyn.matrix_abscissa
        x = 0.5 * (dyn.abscissa + dyn.matrix_abscissa)
        with pytest.raises(DivergenceError):
            dyn.laplace_no_jump(x)
        assert math.isfinite(dyn.g(x))
        theta = dyn.theta(1.0)
        assert theta < dyn.matrix_abscissa
        assert dyn.g(theta) == pytest.approx(1.0, abs=1e-9)

    def test_range_error(self, params, monkeypatch):
        monkeypatch.setattr(xens, "MAX_BRACKET", 100.0)
        with pytest.raises(RangeError):
            xens.controlled_scgf(ControlPolicy.rotate_away(3.0), params, -1e6)

    def test_no_decay(self):
        assert xens.controlled_scgf(ControlPolicy.rotate_away(3.0), ModelParams(1, 0.1, 0.0), 0.4) == 0.0


class TestRenewalOracle:
    def test_zero(self, params):
        assert abs(xens.renewal_scalar_scgf(params, 0.0)) < 1e-12

    def test_density_normalized(self, params):
        assert xens.WaitingTimeDensity(params).laplace(0.0) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("s", [-0.1, 0.3])
    def test_agrees_with_generator(self, params, s):
        assert xens.renewal_scalar_scgf(params, s) == pytest.approx(sens.scgf(params, s), abs=1e-8)

    def test_no_decay_flagged(self):
        with pytest.warns(DegeneracyWarning):
            assert xens.renewal_scalar_scgf(ModelParams(1.0, 0.1, 0.0), 0.5) == 0.0

    def test_divergent_transform(self, params):
        w = xens.WaitingTimeDensity(params)
        with pytest.raises(DivergenceError):
            w.laplace(w.decay_abscissa - 0.01)


class TestTypicalStatistics:
    def test_uncontrolled(self, params):
        k, chi = xens.typical_statistics(ControlPolicy.none(), params)
        assert k == pytest.approx(sens.activity(params, 0.0), abs=1e-8)
        assert chi == pytest.approx(sens.susceptibility(params, 0.0), rel=1e-6)

    def test_repeated_reset_is_sub_poissonian(self, params):
        k, chi = xens.typical_statistics(ControlPolicy.repeat_reset(3.0), params)
        assert 0.4 < chi / k < 0.6
