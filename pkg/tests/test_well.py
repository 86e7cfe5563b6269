import numpy as np
import pytest
from scipy.integrate import quad

from wavemgt.basis import DomainSpec, SpectralField, build_basis
from wavemgt.errors import ValidationError
from wavemgt.nonlinearity import calibrate, sobolev_constant_bound
from wavemgt.params import ModelParams
from wavemgt.well import (
    NEHARI,
    ORIGIN,
    OUTSIDE,
    STABLE,
    SearchConfig,
    WellDepthEstimate,
    classify,
    functionals,
    functionals_batch,
    local_positivity_radius,
    ray_scale_root,
    well_depth_lower,
    well_depth_sweep,
    well_depth_upper,
)

N = 16


def e(k, amp=1.0):
    return SpectralField.mode(N, k, amp).coeffs


@pytest.fixture(scope="module")
def p3(dom16):
    return ModelParams(tau=1.0, b=2.0, alpha=0.0, gamma=3.0, domain=dom16)


class TestFunctionals:
    def test_origin(self, params16, basis16):
        fn = functionals(np.zeros(N), np.zeros(N), params16, basis16)
        assert (fn.Q, fn.I, fn.J, fn.lgamma_term, fn.gamma_norm) == (0, 0, 0, 0, 0)

    def test_pure_w(self, params16, basis16):
        fn = functionals(np.zeros(N), e(1), params16, basis16)
        assert (fn.Q, fn.I, fn.J) == pytest.approx((1.0, 1.0, 0.5))

    def test_single_mode_quadrature(self, dom16):
        dom = DomainSpec(np.pi, N, n_grid=16 * N)
        b = build_basis(dom)
        p = ModelParams(tau=1.0, b=2.0, alpha=0.3, gamma=3.0, domain=dom)
        c = 0.7
        fn = functionals(e(1, c), np.zeros(N), p, b)
        u = lambda x: c * np.sqrt(2 / np.pi) * np.sin(x)
        lg = quad(lambda x: abs(u(x)) ** 3 * np.log(abs(u(x))), 0, np.pi, limit=200)[0]
        gn = quad(lambda x: abs(u(x)) ** 3, 0, np.pi)[0]
        assert fn.lgamma_term == pytest.approx(lg, abs=1e-9)
        assert fn.gamma_norm == pytest.approx(gn, abs=1e-9)
        identity = (1 / 6) * fn.Q + fn.I / 3 + fn.gamma_norm / 9
        assert abs(fn.J - identity) <= 1e-9 * max(1.0, abs(fn.J))

    def test_batch_matches_scalar(self, params16, basis16, rng):
        U, W = rng.standard_normal((2, 10, N))
        fb = functionals_batch(U, W, params16, basis16)
        for i in range(10):
            fn = functionals(U[i], W[i], params16, basis16)
            assert fb["J"][i] == pytest.approx(fn.J, rel=1e-13)

    def test_coercivity_and_identity(self, basis16, dom16, rng):
        k = np.arange(1, N + 1)
        for _ in range(200):
            alpha = rng.uniform(-0.999, 0.999)
            p = ModelParams(tau=1.0, b=2.0, alpha=alpha, gamma=2.5, domain=dom16)
            u, w = rng.standard_normal((2, N)) / k
            fn = functionals(u, w, p, basis16)
            grad = basis16.eigenvalues @ (u * u + w * w)
            assert fn.Q >= p.c_alpha * grad - 1e-10
            ident = 0.1 * fn.Q + fn.I / 2.5 + fn.gamma_norm / 6.25
            assert abs(fn.J - ident) <= 1e-9 * max(1.0, abs(fn.J))


class TestRayRoot:
    def test_e1_dense_scan(self, p3, basis16):
        r = ray_scale_root(e(1), np.zeros(N), p3, basis16)
        lam = np.geomspace(1e-3, 1e3, 600_001)
        g = lam**2 * r.Q0 - lam**3 * (r.A * np.log(lam) + r.B)
        i = np.flatnonzero((g[:-1] > 0) & (g[1:] <= 0))
        assert i.size == 1
        assert r.lam == pytest.approx(lam[i[0]], rel=2e-5)
        assert len(r.crossings) == 1

    def test_root_is_on_nehari(self, params16, basis16, rng):
        for _ in range(20):
            phi, psi = rng.standard_normal((2, N)) / np.arange(1, N + 1)
            r = ray_scale_root(phi, psi, params16, basis16)
            fn = functionals(r.lam * phi, r.lam * psi, params16, basis16)
            assert abs(fn.I) <= 1e-9 * max(1.0, fn.Q)

    def test_positive_then_negative(self, params16, basis16):
        r = ray_scale_root(e(2), e(1), params16, basis16)
        lo = functionals(0.5 * r.lam * e(2), 0.5 * r.lam * e(1), params16, basis16)
        hi = functionals(2 * r.lam * e(2), 2 * r.lam * e(1), params16, basis16)
        assert lo.I > 0 > hi.I

    def test_zero_phi_rejected(self, params16, basis16):
        with pytest.raises(ValidationError):
            ray_scale_root(np.zeros(N), e(1), params16, basis16)


class TestWellDepth:
    def test_single_mode_closed_form(self, p3, basis16):
        est = well_depth_upper(p3, basis16, SearchConfig(n_modes=1, restarts=1))
        r = ray_scale_root(e(1), np.zeros(N), p3, basis16)
        fn = functionals(r.lam * e(1), np.zeros(N), p3, basis16)
        assert est.upper == pytest.approx(fn.J, rel=1e-10)
        assert est.upper == pytest.approx((1 / 6) * r.lam**2 * r.Q0 + r.lam**3 * r.A / 9, rel=1e-10)

    def test_restricted_search_is_not_lower(self, params16, basis16):
        full = well_depth_upper(params16, basis16, SearchConfig(n_modes=4, restarts=5))
        restricted = well_depth_upper(params16, basis16,
                                      SearchConfig(n_modes=4, restarts=5, coupled=False))
        assert restricted.upper >= full.upper - 1e-9

    def test_sweep_monotone_and_deterministic(self, params16, basis16):
        cfg = SearchConfig(restarts=4, seed=3)
        a = [x.upper for x in well_depth_sweep(params16, basis16, (1, 2, 4), cfg)]
        b = [x.upper for x in well_depth_sweep(params16, basis16, (1, 2, 4), cfg)]
        assert a == b
        assert all(y <= x + 1e-6 for x, y in zip(a, a[1:]))

    def test_witnesses_on_nehari(self, params16, basis16):
        est = well_depth_upper(params16, basis16, SearchConfig(n_modes=2, restarts=3))
        w = est.witnesses[0]
        phi, psi = np.zeros(N), np.zeros(N)
        phi[:2], psi[:2] = w["phi"], w["psi"]
        fn = functionals(w["lam"] * phi, w["lam"] * psi, params16, basis16)
        assert abs(fn.I) <= 1e-9 * max(1.0, fn.Q)
        assert fn.J == pytest.approx(est.upper, rel=1e-10)


@pytest.fixture(scope="module")
def consts(params16, basis16):
    return calibrate(0.25, 0.5, 2.5, C_S_eta=sobolev_constant_bound(3.0, basis16))


class TestLowerBounds:
    def test_lower_positive_and_below_upper(self, params16, basis16, consts):
        lower = well_depth_lower(consts, params16)
        upper = well_depth_upper(params16, basis16, SearchConfig(n_modes=2, restarts=3)).upper
        assert 0 < lower <= upper

    def test_lower_decreases_with_constant(self, params16, consts):
        bigger = type(consts)(eta=consts.eta, eps=consts.eps, C_eps=2 * consts.C_eps,
                              C_S_eta=consts.C_S_eta)
        assert well_depth_lower(bigger, params16) < well_depth_lower(consts, params16)

    def test_smallness_message(self, params16):
        c = calibrate(0.4, 0.5, 2.5)
        with pytest.raises(ValidationError, match="recalibrate with eps <= 0.25"):
            well_depth_lower(c, params16)

    def test_rho0_ball(self, params16, basis16, rng):
        c = calibrate(0.125, 0.5, 2.5, C_S_eta=sobolev_constant_bound(3.0, basis16))
        rho0 = local_positivity_radius(c, params16)
        k = np.arange(1, N + 1)
        for _ in range(100):
            u, w = rng.standard_normal((2, N)) / k
            s = np.sqrt(rho0 * rng.uniform() / functionals(u, w, params16, basis16).Q)
            fn = functionals(s * u, s * w, params16, basis16)
            assert fn.I >= 0.25 * fn.Q - 1e-12 * fn.Q
        z = functionals(np.zeros(N), np.zeros(N), params16, basis16)
        assert z.I == 0.25 * z.Q == 0


@pytest.fixture(scope="module")
def est():
    return WellDepthEstimate(upper=1.8865)


class TestClassify:
    def test_origin(self, params16, basis16, est):
        assert classify(np.zeros(N), np.zeros(N), None, est, params16, basis16) == ORIGIN

    def test_small_is_stable(self, params16, basis16, est):
        assert classify(e(1, 1e-3), e(2, 1e-3), None, est, params16, basis16) == STABLE

    def test_ray_point_is_boundary(self, params16, basis16, est):
        r = ray_scale_root(e(1), e(2, 0.3), params16, basis16)
        lab = classify(r.lam * e(1), r.lam * e(2, 0.3), None, est, params16, basis16)
        assert lab == NEHARI

    def test_large_is_outside(self, params16, basis16, est):
        assert classify(e(1, 10.0), np.zeros(N), None, est, params16, basis16) == OUTSIDE
