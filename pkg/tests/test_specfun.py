import math

import numpy as np
import pytest

from enzspec.specfun import (
    HarmonicIndex,
    SpecFunError,
    SurfacePoint,
    bessel_zeros,
    cylinder_bessel,
    cylinder_bessel_zeros,
    real_spherical_harmonic,
    spherical_bessel,
    spherical_bessel_complex,
    spherical_neumann_complex,
    sphere_quadrature,
    vector_harmonics,
)


def j1_closed(x):
    return math.sin(x) / x**2 - math.cos(x) / x


def bisect(f, lo, hi, tol=1e-14):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


class TestSphericalBessel:
    def test_j0_at_pi(self):
        val, dval = spherical_bessel(0, math.pi)
        assert abs(val) < 1e-14
        assert abs(dval - (-1.0 / math.pi)) < 1e-14

    def test_j1_small_argument(self):
        for x in (1e-3, 1e-2, 0.05):
            val, _ = spherical_bessel(1, x)
            # j_1(x)/x = 1/3 - x^2/30 + ...
            assert abs(val / x - 1.0 / 3.0) < x * x / 20.0

    def test_j1_first_zero(self):
        # oracle: bisection on the closed-form j_1
        z = bisect(j1_closed, 4.0, 5.0)
        assert abs(z - 4.493409457909064) < 1e-12
        val, dval = spherical_bessel(1, z)
        assert abs(val) < 1e-13
        assert abs(dval) > 0.01

    def test_closed_forms_low_order(self):
        for x in (0.3, 1.7, 9.2, 41.0):
            j0 = math.sin(x) / x
            j1 = j1_closed(x)
            j2 = (3.0 / x**2 - 1.0) * math.sin(x) / x - 3.0 * math.cos(x) / x**2
            assert abs(spherical_bessel(0, x)[0] - j0) < 1e-13 * max(1, abs(j0))
            assert abs(spherical_bessel(1, x)[0] - j1) < 1e-13
            assert abs(spherical_bessel(2, x)[0] - j2) < 1e-13

    def test_high_order_small_argument(self):
        # downward recurrence regime; compare with ascending series partial sum
        n, x = 12, 3.0
        dfact = 1.0
        for i in range(1, 2 * n + 2, 2):
            dfact *= i
        term = x**n / dfact
        ref = 0.0
        for k in range(0, 40):
            ref += term
            term *= -x * x / (2.0 * (k + 1) * (2.0 * (n + k + 1) + 1.0))
        val, _ = spherical_bessel(n, x)
        assert abs(val - ref) < 1e-12 * abs(ref)

    def test_ode_residual(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(0, 15))
            x = float(rng.uniform(0.5, 60.0))
            j, jp = spherical_bessel(n, x)
            # j'' from the ODE-independent recurrence route:
            # j_n' = j_{n-1} - (n+1)/x j_n and j_{n-1}' = j_{n-2} - n/x j_{n-1}
            if n == 0:
                jm1 = math.cos(x) / x
                jm1p = -math.sin(x) / x - math.cos(x) / x**2
            else:
                jm1 = spherical_bessel(n - 1, x)[0]
                jm1p = spherical_bessel(n - 1, x)[1]
            jpp = jm1p + (n + 1.0) / x**2 * j - (n + 1.0) / x * jp
            res = jpp + 2.0 / x * jp + (1.0 - n * (n + 1.0) / x**2) * j
            assert abs(res) < 1e-10

    def test_domain_errors(self):
        with pytest.raises(SpecFunError):
            spherical_bessel(-1, 1.0)
        with pytest.raises(SpecFunError):
            spherical_bessel(0, -1.0)

    def test_x_zero_limits(self):
        assert spherical_bessel(0, 0.0) == (1.0, 0.0)
        assert spherical_bessel(1, 0.0)[1] == pytest.approx(1.0 / 3.0)
        assert spherical_bessel(5, 0.0) == (0.0, 0.0)

    def test_complex_argument_matches_real(self):
        for n in (0, 1, 3, 6):
            for x in (0.4, 2.5, 11.0):
                zc = spherical_bessel_complex(n, complex(x))
                zr = spherical_bessel(n, x)[0]
                assert abs(zc - zr) < 1e-11 * max(1.0, abs(zr))

    def test_neumann_closed_form(self):
        for x in (0.7, 3.1, 12.0):
            y0 = -math.cos(x) / x
            y1 = -math.cos(x) / x**2 - math.sin(x) / x
            assert abs(spherical_neumann_complex(0, complex(x)) - y0) < 1e-12
            assert abs(spherical_neumann_complex(1, complex(x)) - y1) < 1e-12

    def test_wronskian_complex(self):
        # j_n(x) y_{n-1}(x) - j_{n-1}(x) y_n(x) = 1/x^2
        for n in (1, 2, 4):
            for x in (1.5 + 0.3j, 4.0 - 1.0j):
                w = spherical_bessel_complex(n, x) * spherical_neumann_complex(n - 1, x) - \
                    spherical_bessel_complex(n - 1, x) * spherical_neumann_complex(n, x)
                assert abs(w - 1.0 / x**2) < 1e-10


class TestBesselZeros:
    def test_j0_zeros_are_multiples_of_pi(self):
        z = bessel_zeros(0, 5)
        ref = math.pi * np.arange(1, 6)
        assert np.max(np.abs(z - ref)) < 1e-12

    def test_j1_first_zero(self):
        z = bessel_zeros(1, 1)[0]
        oracle = bisect(j1_closed, 4.0, 5.0)
        assert abs(z - oracle) < 1e-10

    def test_increasing_and_small_residual(self):
        for n in range(0, 6):
            z = bessel_zeros(n, 4)
            assert np.all(np.diff(z) > 0)
            for k in z:
                assert abs(spherical_bessel(n, k)[0]) < 1e-12

    def test_interlacing(self):
        prev = bessel_zeros(0, 11)
        for n in range(1, 11):
            cur = bessel_zeros(n, 11)
            for i in range(10):
                assert prev[i] < cur[i] < prev[i + 1]
            prev = cur


class TestCylinderBessel:
    def test_values_at_zero(self):
        assert cylinder_bessel(0, 0.0) == (1.0, 0.0)
        assert cylinder_bessel(1, 0.0) == (0.0, 0.5)

    def test_j1_zero(self):
        # oracle: bisection on ascending series for J_1
        def J1_series(x):
            term = x / 2.0
            s = term
            for k in range(1, 60):
                term *= -(x * x / 4.0) / (k * (k + 1.0))
                s += term
            return s

        oracle = bisect(J1_series, 3.5, 4.0)
        assert abs(oracle - 3.831705970207512) < 1e-12
        val, _ = cylinder_bessel(1, oracle)
        assert abs(val) < 1e-12
        z = cylinder_bessel_zeros(1, 1)[0]
        assert abs(z - oracle) < 1e-11

    def test_derivative_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = float(rng.uniform(0.1, 40.0))
            _, d0 = cylinder_bessel(0, x)
            j1 = cylinder_bessel(1, x)[0]
            assert abs(d0 + j1) < 1e-12

    def test_accuracy_vs_scipy(self):
        from scipy.special import jv

        rng = np.random.default_rng(11)
        for _ in range(60):
            m = int(rng.integers(0, 21))
            x = float(rng.uniform(0.05, 100.0))
            val, dval = cylinder_bessel(m, x)
            ref = jv(m, x)
            assert abs(val - ref) <= 1e-12 * max(1.0, abs(ref)) + 1e-14
            refd = 0.5 * (jv(m - 1, x) - jv(m + 1, x))
            assert abs(dval - refd) <= 1e-11


class TestSphericalHarmonics:
    def test_constant_harmonic(self):
        idx = HarmonicIndex(0, 0)
        p = SurfacePoint(1.1, 2.3)
        y, g = real_spherical_harmonic(idx, p)
        assert abs(y - 1.0 / math.sqrt(4.0 * math.pi)) < 1e-14
        assert np.linalg.norm(g) < 1e-14

    def test_index_validation(self):
        with pytest.raises(SpecFunError):
            HarmonicIndex(2, 3)
        with pytest.raises(SpecFunError):
            HarmonicIndex(-1, 0)

    def test_gradient_tangency(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(-n, n + 1))
            p = SurfacePoint(float(rng.uniform(0.01, math.pi - 0.01)), float(rng.uniform(0, 2 * math.pi)))
            _, g = real_spherical_harmonic(HarmonicIndex(n, m), p)
            assert abs(np.dot(p.omega, g)) < 1e-12 * max(1.0, np.linalg.norm(g))

    def test_orthonormality(self):
        pts, wts = sphere_quadrature(24, 48)
        idxs = [HarmonicIndex(n, m) for n in range(0, 9) for m in range(-n, n + 1)]
        vals = np.array([[real_spherical_harmonic(i, p)[0] for p in pts] for i in idxs])
        gram = vals @ (wts[:, None] * vals.T)
        assert np.max(np.abs(gram - np.eye(len(idxs)))) < 1e-8

    def test_gradient_eigen_relation(self):
        pts, wts = sphere_quadrature(24, 48)
        for (n, m) in [(1, 0), (2, 1), (3, -2), (5, 4), (8, -8)]:
            grads = np.array([real_spherical_harmonic(HarmonicIndex(n, m), p)[1] for p in pts])
            energy = float(np.sum(wts * np.sum(grads * grads, axis=1)))
            assert abs(energy - n * (n + 1.0)) < 1e-8 * n * (n + 1.0)

    def test_gradient_vs_finite_difference(self):
        eps = 1e-6
        for (n, m) in [(1, 1), (2, -1), (4, 3), (6, 0)]:
            idx = HarmonicIndex(n, m)
            p = SurfacePoint(0.9, 1.7)
            _, g = real_spherical_harmonic(idx, p)
            dth = (real_spherical_harmonic(idx, SurfacePoint(p.theta + eps, p.phi))[0]
                   - real_spherical_harmonic(idx, SurfacePoint(p.theta - eps, p.phi))[0]) / (2 * eps)
            dph = (real_spherical_harmonic(idx, SurfacePoint(p.theta, p.phi + eps))[0]
                   - real_spherical_harmonic(idx, SurfacePoint(p.theta, p.phi - eps))[0]) / (2 * eps)
            fd = dth * p.theta_hat + dph / math.sin(p.theta) * p.phi_hat
            assert np.linalg.norm(g - fd) < 1e-5 * max(1.0, np.linalg.norm(g))

    def test_pole_limits(self):
        # continuity of value and gradient approaching both poles
        for n in range(1, 5):
            for m in range(-n, n + 1):
                idx = HarmonicIndex(n, m)
                for pole, near in ((0.0, 1e-7), (math.pi, math.pi - 1e-7)):
                    for phi in (0.0, 0.7, 2.9):
                        yp, gp = real_spherical_harmonic(idx, SurfacePoint(pole, phi))
                        yn, gn = real_spherical_harmonic(idx, SurfacePoint(near, phi))
                        assert abs(yp - yn) < 1e-6
                        assert np.linalg.norm(gp - gn) < 1e-5 * (1.0 + np.linalg.norm(gn))


class TestVectorHarmonics:
    def test_rejects_n0(self):
        with pytest.raises(SpecFunError):
            vector_harmonics(HarmonicIndex(0, 0), SurfacePoint(1.0, 1.0))

    def test_tangency_and_orthogonality(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            m = int(rng.integers(-n, n + 1))
            p = SurfacePoint(float(rng.uniform(0.01, math.pi - 0.01)), float(rng.uniform(0, 2 * math.pi)))
            u, v = vector_harmonics(HarmonicIndex(n, m), p)
            s = max(1.0, np.linalg.norm(u))
            assert abs(np.dot(p.omega, u)) < 1e-12 * s
            assert abs(np.dot(p.omega, v)) < 1e-12 * s
            assert abs(np.dot(u, v)) < 1e-12 * s * s

    def test_frame_orthonormality(self):
        pts, wts = sphere_quadrature(24, 48)
        idxs = [HarmonicIndex(n, m) for n in range(1, 5) for m in range(-n, n + 1)]
        us, vs = [], []
        for i in idxs:
            uv = [vector_harmonics(i, p) for p in pts]
            us.append(np.array([x[0] for x in uv]))
            vs.append(np.array([x[1] for x in uv]))
        for a, ia in enumerate(idxs):
            for b in range(a, len(idxs)):
                uu = float(np.sum(wts * np.sum(us[a] * us[b], axis=1)))
                vv = float(np.sum(wts * np.sum(vs[a] * vs[b], axis=1)))
                uv = float(np.sum(wts * np.sum(us[a] * vs[b], axis=1)))
                expect = 1.0 if a == b else 0.0
                assert abs(uu - expect) < 1e-8
                assert abs(vv - expect) < 1e-8
                assert abs(uv) < 1e-8
