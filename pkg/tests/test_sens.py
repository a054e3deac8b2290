import numpy as np
import pytest
import scipy.optimize

from jumpctl import linops, liouville, mcwf, sens, xens
from jumpctl.model import ControlPolicy, ModelParams

S_CHECK = np.linspace(-0.2, 1.0, 61)


@pytest.fixture(scope="module")
def curve():
    return sens.ld_curve(ModelParams(), np.linspace(-0.5, 2.0, 101))


class TestScgf:
    def test_zero_at_origin(self, params):
        assert abs(sens.scgf(params, 0.0)) < 1e-12

    @pytest.mark.parametrize("s", [-1.0, 0.3, 2.0])
    def test_no_decay_no_emissions(self, s):
        assert sens.scgf(ModelParams(1.0, 0.1, 0.0), s) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("s", [-0.05, 0.05])
    def test_renewal_oracle(self, params, s):
        assert sens.scgf(params, s) == pytest.approx(xens.renewal_scalar_scgf(params, s), abs=1e-8)

    def test_x_ensemble_agreement(self, params):
        dyn = xens.ControlledDynamics(ControlPolicy.none(), params)
        for s in S_CHECK[::6]:
            assert sens.scgf(params, s) == pytest.approx(dyn.theta(s), abs=1e-8)


class TestDerivatives:
    def test_derivatives_of_quadratic(self):
        _, k, chi = sens.derivatives(lambda s: 0.5 * s * s - 2 * s, 0.3)
        assert k == pytest.approx(2 - 0.3, abs=1e-10)
        assert chi == pytest.approx(1.0, abs=1e-7)

    def test_no_decay(self):
        p = ModelParams(1.0, 0.1, 0.0)
        assert sens.activity(p, 0.2) == pytest.approx(0.0, abs=1e-12)
        assert sens.susceptibility(p, 0.2) == pytest.approx(0.0, abs=1e-8)

    def test_activity_matches_steady_state(self, params):
        rho = liouville.devectorize(linops.null_state(liouville.lindbladian(params)))
        assert sens.activity(params, 0.0) == pytest.approx(params.gamma * rho[1, 1].real, abs=1e-6)

    def test_single_peak_near_zero(self, params):
        chi = sens.ld_curve(params, S_CHECK).chi
        i = int(np.argmax(chi))
        assert abs(S_CHECK[i]) <= 0.05
        # one pronounced maximum: rises to it and falls after it
        assert np.all(np.diff(chi[:i + 1]) > 0) and np.all(np.diff(chi[i:]) < 0)
        assert chi[i] > 5 * np.median(chi)


class TestCurve:
    def test_invariants(self, curve):
        i0 = int(np.argmin(np.abs(curve.grid)))
        assert curve.grid[i0] == 0.0 and abs(curve.theta[i0]) < 1e-9
        assert np.all(np.diff(curve.theta) <= 0)
        assert np.all(np.diff(curve.theta, 2) >= -1e-6)
        assert np.all(curve.k >= -1e-8)
        assert np.all(curve.chi >= -1e-8)

    def test_parallel_equals_serial(self, params):
        grid = np.linspace(-0.2, 0.6, 9)
        a = sens.ld_curve(params, grid, workers=1)
        b = sens.ld_curve(params, grid, workers=4)
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.chi, b.chi)

    def test_default_grid(self):
        g = sens.default_s_grid()
        assert g[0] == -0.5 and g[-1] == 2.0 and len(g) == 241

    def test_controlled_dispatch(self, params):
        pol = ControlPolicy.rotate_away(3.0)
        th = sens.theta_function(params, pol)
        assert th(0.3) == xens.controlled_scgf(pol, params, 0.3)


class TestRateFunction:
    def test_golden_max(self):
        x, v = sens.golden_max(lambda s: -(s - 0.3) ** 2, -1.0, 2.0, tol=1e-10)
        assert x == pytest.approx(0.3, abs=1e-8) and v == pytest.approx(0.0, abs=1e-15)
        x, _ = sens.golden_max(lambda s: s, -1.0, 2.0)
        assert x == 2.0

    def test_zero_at_typical_rate(self, params):
        k0 = sens.activity(params, 0.0)
        rate = sens.rate_function(params, [k0])
        assert rate.phi[0] == pytest.approx(0.0, abs=1e-6)
        assert abs(rate.s_star[0]) < 1e-3

    def test_non_negative_and_flags(self, params):
        rate = sens.rate_function(params, np.linspace(1e-4, 1.2, 25))
        assert np.all(rate.phi >= -1e-9)
        # rates beyond what s in [-0.5, 2] reaches are flagged as boundary points
        assert rate.at_boundary[0] and rate.at_boundary[-1]
        assert not rate.at_boundary[10]

    def test_no_decay(self):
        rate = sens.rate_function(ModelParams(1.0, 0.1, 0.0), [0.0, 0.2])
        assert rate.phi[0] == pytest.approx(0.0, abs=1e-12)
        assert rate.at_boundary[1]

    def test_duality_round_trip(self, params):
        # maximizers crowd towards k = 0 for s > 0, so sample k geometrically
        k_grid = np.geomspace(2e-4, 0.78, 400)
        rate = sens.rate_function(params, k_grid)
        s_values = np.linspace(-0.4, 1.0, 15)
        back, interior = sens.theta_from_rate(rate, s_values)
        assert interior.all()
        exact = np.array([sens.scgf(params, s) for s in s_values])
        assert np.abs(back - exact).max() <= 1e-4


@pytest.mark.slow
def test_histogram_matches_rate_function_long_time(params):
    """Sampling oracle at t = 2000 with the histogram read as a density of k = K/t.

    P(K) ~ exp(-t phi(K/t)) / t up to subexponential factors, so the
    probability density of k (mass per unit k, spacing 1/t) is compared.
    """
    t, n = 2000.0, 5000
    h = mcwf.emission_histogram(params, ControlPolicy.none(), t, n, seed=2024, start="stationary",
                                workers=4)
    k0, chi0 = sens.activity(params, 0.0), sens.susceptibility(params, 0.0)
    sigma = np.sqrt(chi0 / t)
    k = h.K / t
    central = np.abs(k - k0) <= 2 * sigma
    phi = sens.rate_function(params, k[central]).phi
    density_log = -np.log(h.count[central] * t / n) / t
    dev = np.abs(density_log - phi)
    assert dev.max() <= 2e-3, f"max deviation {dev.max():.2e}"
