"""Analyticity diagnostics for eigenvalue branches.

Taylor coefficients are recovered from equispaced samples on a circle
|delta| = r by the discrete Cauchy integral (a plain DFT), guarded against
aliasing by reporting only the first quarter of the sample count.  Reports
bundle coefficient decay, interior prediction errors against direct
solves, the reality defect on the real axis and the circle-closure defect.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .eig import Branch

__all__ = [
    "Branch",
    "AnalyticityReport",
    "NonClosedBranchError",
    "circle_path",
    "taylor_from_circle",
    "analyticity_report",
    "cluster_series",
]


class NonClosedBranchError(RuntimeError):
    """First and last circle samples disagree: the branch permuted
    (a cluster was crossed); only symmetric functions are single-valued."""

    def __init__(self, defect: float):
        super().__init__(f"branch does not close on the circle: defect {defect:.3e}")
        self.defect = defect


def circle_path(r: float, n_samples: int = 32, ramp: int = 4):
    """Path from delta = 0 onto the circle |delta| = r and once around.

    Returns (path, circle_start): path[circle_start:] are the n_samples + 1
    equispaced circle points with the closing sample duplicated.
    """
    if r <= 0:
        raise ValueError("circle radius must be positive")
    lead = [0.0] + [r * (j + 1) / (ramp + 1) for j in range(ramp)]
    circle = [r * np.exp(2j * np.pi * j / n_samples) for j in range(n_samples + 1)]
    return lead + circle, len(lead)


def _circle_samples(values, closure_tol: float):
    values = np.asarray(values, dtype=complex)
    n = len(values) - 1
    if n < 4 or n & (n - 1):
        raise ValueError("need a power-of-two sample count plus the closing duplicate")
    defect = abs(values[-1] - values[0])
    if defect > closure_tol * (1.0 + abs(values[0])):
        raise NonClosedBranchError(defect)
    return values[:n], n, defect


def taylor_from_circle(samples, radius: float, order: int,
                       closure_tol: float = 1e-9) -> np.ndarray:
    """Coefficients a_0..a_order of lambda(delta) = sum a_k delta^k from
    N + 1 equispaced samples on |delta| = radius (closing sample repeated).

    a_k = (1/N) sum_j lambda(delta_j) exp(-2 pi i j k / N) / radius^k.
    """
    if isinstance(samples, Branch):
        samples = samples.lambda_samples
    vals, n, _ = _circle_samples(samples, closure_tol)
    if order > n // 4:
        raise ValueError(f"order {order} exceeds the aliasing guard N/4 = {n // 4}")
    coeffs = np.fft.fft(vals) / n
    k = np.arange(order + 1)
    return coeffs[: order + 1] / radius**k


@dataclass
class AnalyticityReport:
    a_coeffs: np.ndarray
    decay_ratios: np.ndarray
    prediction_errors: np.ndarray
    reality_defect: float
    closure_defect: float

    def to_json(self) -> str:
        payload = {
            "a_coeffs": [[float(c.real), float(c.imag)] for c in self.a_coeffs],
            "decay_ratios": [float(x) for x in self.decay_ratios],
            "prediction_errors": [float(x) for x in self.prediction_errors],
            "reality_defect": float(self.reality_defect),
            "closure_defect": float(self.closure_defect),
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _evaluate_series(coeffs: np.ndarray, delta: complex) -> complex:
    out = 0.0 + 0.0j
    for c in reversed(coeffs):
        out = out * delta + c
    return out


def analyticity_report(samples, radius: float, order: int,
                       held_out=(), real_axis_samples=(),
                       closure_tol: float = 1e-9) -> AnalyticityReport:
    """Diagnostics for one branch sampled on a circle.

    held_out: iterable of (delta, lambda_direct) pairs strictly inside the
    circle; real_axis_samples: iterable of lambda values computed at real
    delta (their imaginary parts measure the reality defect).
    """
    if isinstance(samples, Branch):
        samples = samples.lambda_samples
    vals, _, defect = _circle_samples(samples, closure_tol)
    coeffs = taylor_from_circle(np.append(vals, vals[0]), radius, order, closure_tol)
    mags = np.abs(coeffs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(mags[:-1] > 0, mags[1:] * radius / np.maximum(mags[:-1], 1e-300), np.inf)
    pred_errs = np.array([
        abs(_evaluate_series(coeffs, d) - lam) / max(abs(lam), 1e-300)
        for d, lam in held_out])
    reality = 0.0
    for lam in real_axis_samples:
        reality = max(reality, abs(np.imag(lam)) / (1.0 + abs(lam)))
    return AnalyticityReport(coeffs, ratios, pred_errs, reality, defect)


def cluster_series(sym_functions: dict, radius: float, order: int,
                   closure_tol: float = 1e-8) -> dict:
    """Taylor coefficients of each symmetric function s_p sampled on a
    circle (N + 1 samples each, closing duplicate included)."""
    return {p: taylor_from_circle(vals, radius, order, closure_tol)
            for p, vals in sym_functions.items()}
