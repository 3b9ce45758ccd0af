"""Spherical and cylinder Bessel functions, real spherical harmonics and the
tangent vector harmonics U, V.

Everything here is evaluated by stable recurrences and ascending series; no
external special-function library is used.  The spherical harmonics are real
valued and normalized to unit L2 norm on the unit sphere, so that

    integral over S2 of Y[n,m] * Y[n',m']  =  delta_{nn'} delta_{mm'} .

The tangent frame is

    U[n,m] = grad_S2 Y[n,m] / sqrt(n(n+1)),     V[n,m] = omega x U[n,m],

which is orthonormal in L2(S2) for n >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HarmonicIndex",
    "SurfacePoint",
    "spherical_bessel",
    "spherical_bessel_complex",
    "spherical_neumann_complex",
    "bessel_zeros",
    "cylinder_bessel",
    "cylinder_bessel_zeros",
    "real_spherical_harmonic",
    "vector_harmonics",
    "sphere_quadrature",
]


class SpecFunError(ValueError):
    """Domain or argument error in special-function evaluation."""


@dataclass(frozen=True)
class HarmonicIndex:
    """Degree/order pair (n, m) with n >= 0 and |m| <= n."""

    n: int
    m: int

    def __post_init__(self):
        if self.n < 0:
            raise SpecFunError(f"harmonic degree must be >= 0, got n={self.n}")
        if abs(self.m) > self.n:
            raise SpecFunError(f"harmonic order must satisfy |m| <= n, got (n,m)=({self.n},{self.m})")


@dataclass(frozen=True)
class SurfacePoint:
    """Point on the unit sphere given by polar angle theta and azimuth phi."""

    theta: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise SpecFunError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def omega(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    @property
    def theta_hat(self) -> np.ndarray:
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return np.array([ct * math.cos(self.phi), ct * math.sin(self.phi), -st])

    @property
    def phi_hat(self) -> np.ndarray:
        return np.array([-math.sin(self.phi), math.cos(self.phi), 0.0])

    @classmethod
    def from_vector(cls, x) -> "SurfacePoint":
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r == 0.0:
            raise SpecFunError("cannot project the origin onto the sphere")
        theta = math.acos(min(1.0, max(-1.0, x[2] / r)))
        phi = math.atan2(x[1], x[0]) % (2.0 * math.pi)
        return cls(theta, phi)


# ---------------------------------------------------------------------------
# spherical Bessel functions of the first kind, real argument
# ---------------------------------------------------------------------------

def _sph_j_series(n: int, x: float) -> tuple[float, float]:
    # ascending series about x = 0; used for small arguments only
    dfact = 1.0
    for i in range(1, 2 * n + 2, 2):
        dfact *= i
    term = x**n / dfact
    val = term
    dval = n * x ** (n - 1) / dfact if n >= 1 else 0.0
    x2 = x * x
    k = 0
    while True:
        k += 1
        term *= -x2 / (2.0 * k * (2.0 * (n + k) + 1.0))
        val += term
        if x > 0:
            dval += term * (n + 2 * k) / x
        if abs(term) < 1e-18 * (abs(val) + 1e-300):
            break
        if k > 60:
            break
    return val, dval


def _sph_j_upward(n: int, x: float) -> tuple[float, float]:
    jm = math.sin(x) / x
    if n == 0:
        return jm, math.cos(x) / x - jm / x
    jc = jm / x - math.cos(x) / x
    for k in range(1, n):
        jm, jc = jc, (2.0 * k + 1.0) / x * jc - jm
    return jc, jm - (n + 1.0) / x * jc


def _sph_j_downward(n: int, x: float) -> tuple[float, float]:
    # Miller's algorithm: downward recurrence with renormalization
    start = n + 20 + int(math.sqrt(40.0 * (n + 1)))
    fp, fc = 0.0, 1e-300
    jn = jn1 = 0.0
    for k in range(start, 0, -1):
        fm = (2.0 * k + 1.0) / x * fc - fp
        fp, fc = fc, fm
        if k - 1 == n:
            jn = fc
        if k - 1 == n - 1:
            jn1 = fc
        if abs(fc) > 1e250:
            fp, fc, jn, jn1 = fp * 1e-250, fc * 1e-250, jn * 1e-250, jn1 * 1e-250
    j0, j1 = math.sin(x) / x, math.sin(x) / x**2 - math.cos(x) / x
    # normalize against whichever low-order value is better conditioned
    scale = j0 / fc if abs(j0) >= abs(j1) * 0.1 or abs(fp) == 0.0 else j1 / fp
    jn *= scale
    jn1 *= scale
    if n == 0:
        return jn, math.cos(x) / x - jn / x
    return jn, jn1 - (n + 1.0) / x * jn


def spherical_bessel(n: int, x: float) -> tuple[float, float]:
    """Return (j_n(x), j_n'(x)) for real x > 0.

    The analytic limit at x = 0 is returned when x == 0 exactly; negative
    arguments are rejected.
    """
    if n < 0:
        raise SpecFunError(f"order must be >= 0, got {n}")
    if x < 0.0:
        raise SpecFunError(f"argument must be >= 0, got {x}")
    if x == 0.0:
        val = 1.0 if n == 0 else 0.0
        dval = 1.0 / 3.0 if n == 1 else 0.0
        return val, dval
    if x < 0.1:
        return _sph_j_series(n, x)
    if n <= 1 or x >= n:
        return _sph_j_upward(n, x)
    return _sph_j_downward(n, x)


def _complex_sph_jy0(x: complex) -> tuple[complex, complex]:
    return np.sin(x) / x, -np.cos(x) / x


def spherical_bessel_complex(n: int, x: complex) -> complex:
    """j_n at complex argument (ascending series for small |x|, else upward)."""
    x = complex(x)
    if abs(x) == 0.0:
        return 1.0 + 0.0j if n == 0 else 0.0j
    if abs(x) < max(1.0, n):
        dfact = 1.0
        for i in range(1, 2 * n + 2, 2):
            dfact *= i
        term = x**n / dfact
        val = term
        for k in range(1, 80):
            term *= -x * x / (2.0 * k * (2.0 * (n + k) + 1.0))
            val += term
            if abs(term) < 1e-18 * (abs(val) + 1e-300):
                break
        return val
    jm = np.sin(x) / x
    if n == 0:
        return jm
    jc = jm / x - np.cos(x) / x
    for k in range(1, n):
        jm, jc = jc, (2.0 * k + 1.0) / x * jc - jm
    return jc


def spherical_neumann_complex(n: int, x: complex) -> complex:
    """y_n at complex argument via the (stable) upward recurrence."""
    x = complex(x)
    ym = -np.cos(x) / x
    if n == 0:
        return ym
    yc = ym / x - np.sin(x) / x
    for k in range(1, n):
        ym, yc = yc, (2.0 * k + 1.0) / x * yc - ym
    return yc


def bessel_zeros(n: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of j_n, strictly increasing."""
    if count < 1:
        raise SpecFunError("count must be >= 1")
    zeros = []
    step = min(1.0, math.pi / 4.0)
    x = 0.25
    fx = spherical_bessel(n, x)[0]
    while len(zeros) < count:
        xn = x + step
        fn = spherical_bessel(n, xn)[0]
        if fx == 0.0:
            zeros.append(x)
        elif fx * fn < 0.0:
            lo, hi = x, xn
            flo = fx
            while hi - lo > 1e-13:
                mid = 0.5 * (lo + hi)
                fm = spherical_bessel(n, mid)[0]
                if flo * fm <= 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            zeros.append(0.5 * (lo + hi))
        x, fx = xn, fn
    return np.array(zeros)


# ---------------------------------------------------------------------------
# cylinder Bessel functions J_m
# ---------------------------------------------------------------------------

def cylinder_bessel(m: int, x: float) -> tuple[float, float]:
    """Return (J_m(x), J_m'(x)) for x >= 0 by Miller's backward recurrence."""
    if m < 0:
        raise SpecFunError(f"order must be >= 0, got {m}")
    if x < 0.0:
        raise SpecFunError(f"argument must be >= 0, got {x}")
    if x == 0.0:
        if m == 0:
            return 1.0, 0.0
        return 0.0, 0.5 if m == 1 else 0.0
    top = int(max(m, x)) + 20 + int(2.0 * math.sqrt(40.0 * (max(m, x) + 1)))
    top += top % 2  # even start keeps the normalization sum aligned
    fp, fc = 0.0, 1e-300
    jm = jm1 = 0.0
    norm = 0.0
    for k in range(top, 0, -1):
        fm = 2.0 * k / x * fc - fp
        fp, fc = fc, fm
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * fc
        if k - 1 == m:
            jm = fc
        if k - 1 == m - 1:
            jm1 = fc
        if abs(fc) > 1e250:
            fp, fc, jm, jm1, norm = (v * 1e-250 for v in (fp, fc, jm, jm1, norm))
    norm += fc  # J_0 + 2*sum_{k even >0} J_k = 1
    jm /= norm
    jm1 /= norm
    if m == 0:
        # J_0' = -J_1; recover J_1 from the same pass (it sits above J_0)
        j1 = cylinder_bessel(1, x)[0]
        return jm, -j1
    return jm, jm1 - m / x * jm


def cylinder_bessel_zeros(m: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of J_m by scan plus bisection."""
    zeros = []
    step = min(1.0, math.pi / 4.0)
    x = 0.25
    fx = cylinder_bessel(m, x)[0]
    while len(zeros) < count:
        xn = x + step
        fn = cylinder_bessel(m, xn)[0]
        if fx * fn < 0.0:
            lo, hi = x, xn
            flo = fx
            while hi - lo > 1e-13:
                mid = 0.5 * (lo + hi)
                fm = cylinder_bessel(m, mid)[0]
                if flo * fm <= 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            zeros.append(0.5 * (lo + hi))
        x, fx = xn, fn
    return np.array(zeros)


# ---------------------------------------------------------------------------
# real spherical harmonics and the tangent frame
# ---------------------------------------------------------------------------

def _assoc_legendre(n: int, m: int, ct: float, st: float) -> tuple[float, float]:
    """P_n^m(cos theta) and P_{n-1}^m(cos theta), no Condon-Shortley phase."""
    pmm = 1.0
    for i in range(1, m + 1):
        pmm *= (2.0 * i - 1.0) * st
    if n == m:
        return pmm, 0.0
    pmm1 = ct * (2.0 * m + 1.0) * pmm
    if n == m + 1:
        return pmm1, pmm
    pnm2, pnm1 = pmm, pmm1
    pnm = 0.0
    for k in range(m + 2, n + 1):
        pnm = ((2.0 * k - 1.0) * ct * pnm1 - (k - 1.0 + m) * pnm2) / (k - m)
        pnm2, pnm1 = pnm1, pnm
    return pnm, pnm2


def _y_normalization(n: int, m: int) -> float:
    am = abs(m)
    logfac = 0.0
    for i in range(n - am + 1, n + am + 1):
        logfac += math.log(i)
    return math.sqrt((2.0 * n + 1.0) / (4.0 * math.pi) * math.exp(-logfac))


_POLE_TOL = 1e-12


def real_spherical_harmonic(idx: HarmonicIndex, p: SurfacePoint) -> tuple[float, np.ndarray]:
    """Value and surface gradient of the real spherical harmonic Y[n,m].

    The gradient is returned as a Cartesian 3-vector tangent to the sphere.
    Evaluation at the poles uses the analytic limits (only m = 0 contributes
    a value there, only |m| = 1 a gradient).
    """
    n, m = idx.n, idx.m
    am = abs(m)
    ct, st = math.cos(p.theta), math.sin(p.theta)
    norm = _y_normalization(n, am)

    if st < _POLE_TOL:
        sgn = 1.0 if ct > 0 else (-1.0) ** n
        value = norm * sgn if m == 0 else 0.0
        grad = np.zeros(3)
        if am == 1:
            cn = 0.5 * n * (n + 1.0)
            norm1 = _y_normalization(n, 1)
            if m == 1:
                f, fp = math.sqrt(2.0) * math.cos(p.phi), -math.sqrt(2.0) * math.sin(p.phi)
            else:
                f, fp = math.sqrt(2.0) * math.sin(p.phi), math.sqrt(2.0) * math.cos(p.phi)
            if ct > 0:
                grad = norm1 * cn * (f * p.theta_hat + fp * p.phi_hat)
            else:
                par = (-1.0) ** n
                grad = norm1 * cn * (par * f * p.theta_hat - par * fp * p.phi_hat)
        return value, grad

    pnm, pn1m = _assoc_legendre(n, am, ct, st)
    if m == 0:
        f, fp = 1.0, 0.0
    elif m > 0:
        f, fp = math.sqrt(2.0) * math.cos(m * p.phi), -m * math.sqrt(2.0) * math.sin(m * p.phi)
    else:
        f, fp = math.sqrt(2.0) * math.sin(am * p.phi), am * math.sqrt(2.0) * math.cos(am * p.phi)

    value = norm * pnm * f
    dp_dtheta = (n * ct * pnm - (n + am) * pn1m) / st
    grad = norm * (dp_dtheta * f * p.theta_hat + pnm / st * fp * p.phi_hat)
    return value, grad


def vector_harmonics(idx: HarmonicIndex, p: SurfacePoint) -> tuple[np.ndarray, np.ndarray]:
    """The orthonormal tangent pair (U, V) at p; requires n >= 1."""
    if idx.n < 1:
        raise SpecFunError("vector harmonics vanish identically for n = 0")
    _, grad = real_spherical_harmonic(idx, p)
    u = grad / math.sqrt(idx.n * (idx.n + 1.0))
    v = np.cross(p.omega, u)
    return u, v


def sphere_quadrature(n_theta: int = 40, n_phi: int = 80):
    """Product Gauss-Legendre x trapezoid quadrature on S2.

    Returns (points, weights) with points a list of SurfacePoint.  Exact for
    spherical polynomials well beyond the degrees exercised here.
    """
    xs, ws = np.polynomial.legendre.leggauss(n_theta)
    thetas = np.arccos(xs)
    phis = 2.0 * math.pi * np.arange(n_phi) / n_phi
    wphi = 2.0 * math.pi / n_phi
    pts, wts = [], []
    for th, w in zip(thetas, ws):
        for ph in phis:
            pts.append(SurfacePoint(float(th), float(ph)))
            wts.append(w * wphi)
    return pts, np.array(wts)
