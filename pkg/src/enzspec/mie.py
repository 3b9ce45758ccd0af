"""Exact spherical resonances of a unit-ball core inside a spherical shell.

Two closed-form families on D = B_1, Omega = B_R:

* electrostatic: interior Maxwell field with trace V[n,m], wavenumber at a
  zero of j_n; the shell field is a pure gradient (A r^n + B r^{-n-1}) Y
  and the shell magnetic field vanishes identically.
* nonelectrostatic: interior trace U[p,q]; the shell electric field is
  tangential (C r^p + D r^{-p-1}) V with a nonvanishing shell magnetic
  field; the wavenumber is selected by tangential-H matching across r = 1,
  located by bisection between consecutive zeros of j_p.

Also provided: the general single-mode interior Maxwell solver on B_1, a
finite-difference residual checker, and a concentric two-sphere dispersion
relation for nonzero shell permittivity delta.

All magnetic fields follow the convention curl E = -i k H, curl H = i k
eps E, so H is purely imaginary for the real electric profiles used here.
The curl of a tangential profile g(r) V[n,m] is
sqrt(n(n+1)) (g/r) Y omega + ((r g)'/r) U, which fixes every radial factor
below; in particular the interior factor is j_n(kr) + k r j_n'(kr).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .specfun import (
    HarmonicIndex,
    SurfacePoint,
    bessel_zeros,
    real_spherical_harmonic,
    spherical_bessel,
    spherical_bessel_complex,
    spherical_neumann_complex,
    sphere_quadrature,
    vector_harmonics,
)

__all__ = [
    "MieError",
    "MieMode",
    "FieldSample",
    "CORE",
    "SHELL",
    "ELECTROSTATIC",
    "NONELECTROSTATIC",
    "FAMILY_E",
    "FAMILY_H",
    "electrostatic_mode",
    "nonelectrostatic_mode",
    "matching_constants",
    "interior_solution",
    "evaluate_fields",
    "interface_residuals",
    "residual_checks",
    "concentric_dispersion",
    "save_mode",
]

ELECTROSTATIC = "electrostatic"
NONELECTROSTATIC = "nonelectrostatic"
CORE = "core"
SHELL = "shell"
# polarization families of the concentric dispersion relation: the letter
# names which field is tangential-only (proportional to V)
FAMILY_E = "electric"
FAMILY_H = "magnetic"

_DENOM_TOL = 1e-12


class MieError(RuntimeError):
    pass


@dataclass(frozen=True)
class MieMode:
    """One exact resonance of the core-shell sphere.

    outer_coeffs holds (A, B) of the electrostatic shell potential
    (A r^n + B r^{-n-1}) Y, or (C, D) of the nonelectrostatic shell field
    (C r^p + D r^{-p-1}) V / sqrt(p(p+1)).
    """

    family: str
    idx: HarmonicIndex
    k: float
    R: float
    outer_coeffs: tuple

    def __post_init__(self):
        if self.family not in (ELECTROSTATIC, NONELECTROSTATIC):
            raise MieError(f"unknown family {self.family!r}")
        if self.R <= 1.0:
            raise MieError(f"outer radius must exceed 1, got {self.R}")
        if self.k <= 0.0:
            raise MieError(f"wavenumber must be positive, got {self.k}")

    @property
    def lam(self) -> float:
        return self.k * self.k


@dataclass
class FieldSample:
    point: np.ndarray
    E: np.ndarray
    H: np.ndarray
    region: str


def _outer_system(n: int, R: float, rhs0: float) -> tuple:
    """Solve a + b = rhs0, a R^n + b R^{-n-1} = 0."""
    mat = np.array([[1.0, 1.0], [R**n, R ** (-n - 1)]])
    a, b = np.linalg.solve(mat, np.array([rhs0, 0.0]))
    return float(a), float(b)


def electrostatic_mode(n: int, m: int, root_index: int, R: float) -> MieMode:
    """Resonance with vanishing shell magnetic field.

    k is the root_index-th zero of j_n; the shell potential coefficients
    make the tangential field continuous at r = 1 and vanish at r = R.
    """
    if n < 1:
        raise MieError(f"degree must be >= 1, got {n}")
    if root_index < 1:
        raise MieError(f"root index must be >= 1, got {root_index}")
    idx = HarmonicIndex(n, m)
    k = float(bessel_zeros(n, root_index)[-1])
    a, b = _outer_system(n, R, 1.0 / math.sqrt(n * (n + 1.0)))
    return MieMode(ELECTROSTATIC, idx, k, R, (a, b))


def _h_matching_gap(p: int, k: float, shell_const: float) -> float:
    """Tangential-H mismatch at r = 1: shell coefficient minus the interior
    coefficient 1 + k j_p'(k) / j_p(k) (both on the i k H scale)."""
    j, jp = spherical_bessel(p, k)
    return shell_const - (1.0 + k * jp / j)


def nonelectrostatic_mode(p: int, q: int, R: float, interval_index: int) -> MieMode:
    """Resonance whose shell magnetic field does not vanish.

    (C, D) depend only on (p, R); k is then located by bisection of the
    tangential-H mismatch over the interval between consecutive zeros of
    j_p selected by interval_index (1-based).
    """
    if p < 1:
        raise MieError(f"degree must be >= 1, got {p}")
    if interval_index < 1:
        raise MieError(f"interval index must be >= 1, got {interval_index}")
    idx = HarmonicIndex(p, q)
    c, d = _outer_system(p, R, -math.sqrt(p * (p + 1.0)))
    shell_const = -((p + 1.0) * c - p * d) / math.sqrt(p * (p + 1.0))
    zeros = bessel_zeros(p, interval_index + 1)
    lo, hi = float(zeros[-2]), float(zeros[-1])
    eps = 1e-9 * (1.0 + hi)
    a, b = lo + eps, hi - eps
    fa = _h_matching_gap(p, a, shell_const)
    fb = _h_matching_gap(p, b, shell_const)
    if fa == 0.0 or fb == 0.0 or (fa < 0.0) == (fb < 0.0):
        raise MieError(
            f"no sign change of the tangential-H mismatch on ({lo:.6g}, {hi:.6g}): "
            f"endpoint values {fa:.6g}, {fb:.6g} (implementation fault)")
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = _h_matching_gap(p, mid, shell_const)
        if fm == 0.0:
            a = b = mid
            break
        if (fm < 0.0) == (fa < 0.0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if b - a <= 1e-15 * (1.0 + b):
            break
    k = 0.5 * (a + b)
    gap = abs(_h_matching_gap(p, k, shell_const)) / (1.0 + abs(shell_const))
    if gap > 1e-10:
        raise MieError(f"matching residual {gap:.3e} exceeds 1e-10")
    return MieMode(NONELECTROSTATIC, idx, k, R, (c, d))


def matching_constants(mode: MieMode) -> dict:
    """The interface constant of a nonelectrostatic mode under the three
    circulating readings, plus the interior value it must match.

    'field' is the coefficient of U in i k H on the shell side of r = 1
    derived from the explicit fields; 'coeff_p' and 'coeff_plain' are the
    unnormalized variants -((p+1)C - pD) and -((p+1)C - D) that appear
    when the 1/sqrt(p(p+1)) field normalization is dropped (they coincide
    at p = 1).  'interior' is 1 + k j_p'(k) / j_p(k) at the mode's k.
    """
    if mode.family != NONELECTROSTATIC:
        raise MieError("matching constants are defined for nonelectrostatic modes")
    p = mode.idx.n
    c, d = mode.outer_coeffs
    j, jp = spherical_bessel(p, mode.k)
    return {
        "field": -((p + 1.0) * c - p * d) / math.sqrt(p * (p + 1.0)),
        "coeff_p": -((p + 1.0) * c - p * d),
        "coeff_plain": -((p + 1.0) * c - d),
        "interior": 1.0 + mode.k * jp / j,
    }


def _frame(point) -> tuple:
    """(r, omega, SurfacePoint) of a 3D point away from the origin."""
    x = np.asarray(point, dtype=float)
    r = float(np.linalg.norm(x))
    if r < 1e-12:
        raise MieError("field evaluation at the origin is not supported")
    omega = x / r
    theta = math.acos(min(1.0, max(-1.0, omega[2])))
    phi = math.atan2(omega[1], omega[0])
    return r, omega, SurfacePoint(theta, phi % (2.0 * math.pi))


def _mode_fields_at(mode: MieMode, point) -> FieldSample:
    r, omega, sp = _frame(point)
    n = mode.idx.n
    root = math.sqrt(n * (n + 1.0))
    y, _ = real_spherical_harmonic(mode.idx, sp)
    u, v = vector_harmonics(mode.idx, sp)
    k = mode.k
    region = CORE if r <= 1.0 else SHELL
    if mode.family == ELECTROSTATIC:
        a, b = mode.outer_coeffs
        if region == CORE:
            j, jp = spherical_bessel(n, k * r)
            jk, jkp = spherical_bessel(n, k)
            den = jk + k * jkp
            e = (root * j / (r * den)) * y * omega + ((j + k * r * jp) / (r * den)) * u
            h = (1j * k * j / den) * v
        else:
            e = ((n * a * r ** (n - 1) - (n + 1.0) * b * r ** (-n - 2)) * y * omega
                 + root * (a * r**n + b * r ** (-n - 1)) / r * u)
            h = np.zeros(3, dtype=complex)
    else:
        c, d = mode.outer_coeffs
        if region == CORE:
            j, jp = spherical_bessel(n, k * r)
            jk, _ = spherical_bessel(n, k)
            e = -(j / jk) * v + 0j
            h = (1.0 / (1j * k)) * (root * j / (r * jk) * y * omega
                                    + (j + k * r * jp) / (r * jk) * u)
        else:
            e = (c * r**n + d * r ** (-n - 1)) / root * v + 0j
            h = -(1.0 / (1j * k)) * (
                (c * r ** (n - 1) + d * r ** (-n - 2)) * y * omega
                + ((n + 1.0) * c * r ** (n - 1) - n * d * r ** (-n - 2)) / root * u)
    return FieldSample(np.asarray(point, dtype=float), np.asarray(e, dtype=complex),
                       np.asarray(h, dtype=complex), region)


def evaluate_fields(mode: MieMode, points) -> list:
    """FieldSamples of the mode at 3D points (core/shell chosen by |x|)."""
    samples = [_mode_fields_at(mode, pt) for pt in points]
    for s in samples:
        if not (np.all(np.isfinite(s.E)) and np.all(np.isfinite(s.H))):
            raise MieError(f"non-finite field components at {s.point}")
    return samples


def interior_solution(f_coeffs, k: float):
    """Interior Maxwell evaluator on B_1 from a tangential-trace expansion.

    f_coeffs: iterable of (HarmonicIndex, u_component, v_component) giving
    the expansion of f = nu x E on the unit sphere over the (U, V) frame.
    Returns evaluate(points) -> list of (E, H) pairs.  Wavenumbers at
    which any active denominator j_n(k) or j_n(k) + k j_n'(k) vanishes
    are rejected (these are the interior resonance conditions).
    """
    active = []
    for idx, uc, vc in f_coeffs:
        if uc == 0.0 and vc == 0.0:
            continue
        jk, jkp = spherical_bessel(idx.n, k)
        den = jk + k * jkp
        if abs(jk) <= _DENOM_TOL:
            raise MieError(f"j_{idx.n}(k) vanishes at k = {k!r} for index "
                           f"(n={idx.n}, m={idx.m})")
        if abs(den) <= _DENOM_TOL:
            raise MieError(f"j_{idx.n}(k) + k j_{idx.n}'(k) vanishes at k = {k!r} "
                           f"for index (n={idx.n}, m={idx.m})")
        active.append((idx, complex(uc), complex(vc), jk, den))

    def evaluate(points):
        out = []
        for pt in points:
            r, omega, sp = _frame(pt)
            e = np.zeros(3, dtype=complex)
            ikh = np.zeros(3, dtype=complex)
            for idx, uc, vc, jk, den in active:
                n = idx.n
                root = math.sqrt(n * (n + 1.0))
                y, _ = real_spherical_harmonic(idx, sp)
                u, v = vector_harmonics(idx, sp)
                j, jp = spherical_bessel(n, k * r)
                radial = (j + k * r * jp) / r
                e += vc * (root * j / (r * den) * y * omega + radial / den * u)
                e -= uc * (j / jk) * v
                ikh += uc * (root * j / (r * jk) * y * omega + radial / jk * u)
                ikh -= vc * k * k * (j / den) * v
            out.append((e, ikh / (1j * k)))
        return out

    return evaluate


def _fibonacci_directions(count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors (golden-angle spiral)."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def interface_residuals(mode: MieMode, n_quad: int = 24) -> dict:
    """Boundary/interface defects of a mode, measured by evaluation.

    Electrostatic keys: normal_e_interface, h_interface, tangential_e_jump,
    tangential_e_outer, net_flux_outer.  Nonelectrostatic keys:
    tangential_e_jump, tangential_h_jump, normal_h_jump, shell_h_scale.
    """
    dirs = _fibonacci_directions(32)
    inner = evaluate_fields(mode, (1.0 - 1e-12) * dirs)
    outer = evaluate_fields(mode, (1.0 + 1e-12) * dirs)

    def tangential(vec, w):
        return vec - (vec @ w) * w

    e_jump = max(np.linalg.norm(tangential(a.E - b.E, w))
                 for a, b, w in zip(inner, outer, dirs))
    if mode.family == ELECTROSTATIC:
        res = {
            "normal_e_interface": max(abs(s.E @ w) for s, w in zip(inner, dirs)),
            "h_interface": max(np.linalg.norm(s.H) for s in inner),
            "tangential_e_jump": e_jump,
        }
        rim = evaluate_fields(mode, mode.R * dirs)
        res["tangential_e_outer"] = max(np.linalg.norm(tangential(s.E, w))
                                        for s, w in zip(rim, dirs))
        pts, wts = sphere_quadrature(n_quad, 2 * n_quad)
        flux = 0.0
        for p, wq in zip(pts, wts):
            s = _mode_fields_at(mode, mode.R * p.omega)
            flux += wq * float(np.real(s.E @ p.omega))
        res["net_flux_outer"] = abs(flux) * mode.R**2
    else:
        h_scale = max(np.linalg.norm(s.H) for s in inner)
        res = {
            "tangential_e_jump": e_jump,
            "tangential_h_jump": max(np.linalg.norm(tangential(a.H - b.H, w))
                                     for a, b, w in zip(inner, outer, dirs)),
            "normal_h_jump": max(abs((a.H - b.H) @ w)
                                 for a, b, w in zip(inner, outer, dirs)),
            "shell_h_scale": max(np.linalg.norm(s.H) for s in outer) / h_scale,
        }
    return res


def _fd_curl(evaluate_e, x: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(3, dtype=complex)
    cols = []
    for a in range(3):
        step = np.zeros(3)
        step[a] = h
        cols.append((evaluate_e(x + step) - evaluate_e(x - step)) / (2.0 * h))
    out[0] = cols[1][2] - cols[2][1]
    out[1] = cols[2][0] - cols[0][2]
    out[2] = cols[0][1] - cols[1][0]
    return out


def _fd_div(evaluate_e, x: np.ndarray, h: float) -> complex:
    out = 0.0 + 0.0j
    for a in range(3):
        step = np.zeros(3)
        step[a] = h
        out += (evaluate_e(x + step)[a] - evaluate_e(x - step)[a]) / (2.0 * h)
    return out


def residual_checks(mode: MieMode, sample_count: int = 20, step: float = 1e-4,
                    margin: float = 0.05) -> dict:
    """Finite-difference PDE residuals at interior sample points.

    Checks curl curl E = lam 1_core E and div E = 0 in both regions, plus
    curl E = 0 in the shell for the electrostatic family, at deterministic
    sample points kept at least `margin` away from the interface (the
    fields are only piecewise smooth).
    """
    dirs = _fibonacci_directions(sample_count)
    radii_core = np.linspace(0.25, 1.0 - margin - 2.0 * step, sample_count)
    hi = mode.R - 2.0 * step
    radii_shell = np.linspace(1.0 + margin + 2.0 * step, hi, sample_count)

    def e_at(x):
        return _mode_fields_at(mode, x).E

    lam = mode.lam
    scale = 0.0
    points = [(r * w, True) for r, w in zip(radii_core, dirs)]
    points += [(r * w, False) for r, w in zip(radii_shell, dirs)]
    scale = max(np.linalg.norm(e_at(x)) for x, _ in points)
    worst_cc = worst_div = worst_shell_curl = 0.0
    for x, in_core in points:
        curlcurl = _fd_curl(lambda z: _fd_curl(e_at, z, step), x, step)
        target = lam * e_at(x) if in_core else 0.0
        worst_cc = max(worst_cc, np.linalg.norm(curlcurl - target))
        worst_div = max(worst_div, abs(_fd_div(e_at, x, step)))
        if mode.family == ELECTROSTATIC and not in_core:
            worst_shell_curl = max(worst_shell_curl,
                                   np.linalg.norm(_fd_curl(e_at, x, step)))
    report = {
        "curl_curl": worst_cc / (lam * scale),
        "divergence": worst_div / (mode.k * scale),
    }
    if mode.family == ELECTROSTATIC:
        report["shell_curl"] = worst_shell_curl / (mode.k * scale)
    return report


def _jy_pair(n: int, x: complex, kind) -> tuple:
    """(f_n(x), f_n'(x)) for the complex spherical Bessel (j) or Neumann (y)
    functions via the derivative recurrence f_n' = f_{n-1} - (n+1)/x f_n."""
    f = kind(n, x)
    prev = kind(1, x) if n == 0 else kind(n - 1, x)
    if n == 0:
        return f, -prev
    return f, prev - (n + 1.0) / x * f


def concentric_dispersion(family: str, n: int, R: float, delta: complex,
                          k_seed: complex, tol: float = 1e-12,
                          max_iter: int = 80) -> complex:
    """Eigenvalue lambda = k^2 of the concentric core-shell resonator with
    shell permittivity delta, by complex Newton on the transfer-matching
    determinant from the seed wavenumber.

    family 'electric': E = g(r) V with g and (r g)' continuous at r = 1
    and g(R) = 0; at delta = 1 this reduces to j_n(kR) = 0.
    family 'magnetic': H = h(r) V with h and (r h)'/eps continuous at
    r = 1 and (r h)'(R) = 0; its delta -> 0 limit is j_n(k) = 0.
    """
    if delta == 0:
        raise MieError("dispersion relation requires delta != 0")
    if family not in (FAMILY_E, FAMILY_H):
        raise MieError(f"unknown polarization family {family!r}")
    if np.imag(delta) == 0 and np.real(delta) < 0:
        warnings.warn("delta on the negative real axis: the principal square "
                      "root branch cut is being evaluated", stacklevel=2)
    s = np.sqrt(complex(delta))

    def det(k: complex) -> complex:
        kappa = s * k
        jR, jRp = _jy_pair(n, kappa * R, spherical_bessel_complex)
        yR, yRp = _jy_pair(n, kappa * R, spherical_neumann_complex)
        j1, j1p = _jy_pair(n, kappa, spherical_bessel_complex)
        y1, y1p = _jy_pair(n, kappa, spherical_neumann_complex)
        jk, jkp = _jy_pair(n, k, spherical_bessel_complex)
        if family == FAMILY_E:
            beta, gamma = yR, -jR
            g1 = beta * j1 + gamma * y1
            rg1 = g1 + kappa * (beta * j1p + gamma * y1p)
            return jk * rg1 - (jk + k * jkp) * g1
        beta = yR + kappa * R * yRp
        gamma = -(jR + kappa * R * jRp)
        h1 = beta * j1 + gamma * y1
        rh1 = h1 + kappa * (beta * j1p + gamma * y1p)
        return jk * rh1 / complex(delta) - (jk + k * jkp) * h1

    k = complex(k_seed)
    for _ in range(max_iter):
        f = det(k)
        dk = 1e-7 * (1.0 + abs(k))
        df = (det(k + dk) - det(k - dk)) / (2.0 * dk)
        if df == 0:
            raise MieError("Newton derivative vanished in the dispersion solve")
        update = f / df
        k = k - update
        if abs(update) <= tol * (1.0 + abs(k)):
            return k * k
    raise MieError(f"dispersion Newton did not converge from seed {k_seed!r} "
                   f"(last update {abs(update):.3e})")


def save_mode(mode: MieMode, path: str) -> None:
    """Structured text export of a mode (17 significant digits)."""
    lines = [
        "mode 1",
        f"family {mode.family}",
        f"n {mode.idx.n}",
        f"m {mode.idx.m}",
        f"k {mode.k:.17g}",
        f"R {mode.R:.17g}",
    ]
    names = ("A", "B") if mode.family == ELECTROSTATIC else ("C", "D")
    for name, value in zip(names, mode.outer_coeffs):
        lines.append(f"coeff {name} {value:.17g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
