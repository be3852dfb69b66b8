"""Finite-n bounds on the compressed-sensing MI and MMSE.

The sandwich bounds replace the measurement matrix by chi-square distributed
effective SNRs, so each bound is an expectation ``E[f(chi2_k / n)]`` of a
single-letter function.  These are computed by deterministic quadrature.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import chi2

from .channel import evaluate
from .errors import DomainError, OutOfRange, QuadratureFailure
from .prior import Prior, moments

__all__ = [
    "SandwichBound",
    "chi2_expect",
    "mi_sandwich",
    "mmse_sandwich",
    "gap_bounds",
    "boundary_bound",
    "bounds_report",
    "BOUNDARY_CONSTANT",
]

BOUNDARY_CONSTANT = 4.0 + math.sqrt(2.0)


@dataclass(frozen=True)
class SandwichBound:
    n: int
    m: int
    lower: float
    upper: float
    kind: str  # "mi_nats_total" or "mmse_per_coordinate"

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def _resolve(p: Prior, f) -> Callable[[np.ndarray], np.ndarray]:
    if callable(f):
        return f
    if f == "i_x":
        return lambda s: evaluate(p, s)[0]
    if f == "mmse_x":
        return lambda s: evaluate(p, s)[1]
    raise ValueError(f"f must be 'i_x', 'mmse_x' or a callable, got {f!r}")


def chi2_expect(p: Prior, k: int, n: int, f: Union[str, Callable] = "i_x",
                rtol: float = 1e-8, nodes: int = 16) -> float:
    """``E[f(chi2_k / n)]`` by Gauss-Legendre quadrature.

    The substitution ``x = u^2`` removes the ``x^(k/2-1)`` singularity at 0 for
    small ``k``.  The upper limit is ``k + 12 sqrt(2k)`` or the ``1 - 1e-17``
    quantile, whichever is larger.  ``k = 0`` gives ``f(0)``.
    """
    if k < 0 or n < 1:
        raise OutOfRange("need k >= 0 and n >= 1")
    fn = _resolve(p, f)
    if k == 0:
        return float(fn(np.array([0.0]))[0])
    x_max = max(k + 12.0 * math.sqrt(2.0 * k), float(chi2.isf(1e-17, k)))
    u_max = math.sqrt(x_max)
    t, tw = leggauss(nodes)
    prev = None
    panels = 4
    while panels <= 4096:
        edges = np.linspace(0.0, u_max, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * t).ravel()
        wu = (half[:, None] * tw).ravel()
        dens = 2.0 * u * np.exp(chi2.logpdf(u * u, k))
        val = float(np.sum(wu * dens * fn(u * u / n)))
        if prev is not None and abs(val - prev) <= rtol * abs(val) + 1e-300:
            return val
        prev = val
        panels *= 2
    raise QuadratureFailure(f"chi-square expectation did not converge (k={k}, n={n})")


def mi_sandwich(p: Prior, n: int, m: int) -> SandwichBound:
    """Bounds on the total MI ``I(X^n; Y^m | A^m)`` in nats."""
    if n < 1 or m < 0:
        raise OutOfRange("need n >= 1 and m >= 0")
    if m == 0:
        return SandwichBound(n, m, 0.0, 0.0, "mi_nats_total")
    lower = math.fsum(chi2_expect(p, m - k + 1, n, "i_x") for k in range(1, min(n, m) + 1))
    upper = n * chi2_expect(p, m, n, "i_x")
    return SandwichBound(n, m, lower, upper, "mi_nats_total")


def mmse_sandwich(p: Prior, n: int, m: int) -> SandwichBound:
    """Bounds on the per-coordinate MMSE.

    The upper bound only holds for ``m >= n``; below that the universal bound
    ``Var(X)`` is reported instead.
    """
    if n < 1 or m < 0:
        raise OutOfRange("need n >= 1 and m >= 0")
    var_x = moments(p)[1]
    lower = chi2_expect(p, m, n, "mmse_x")
    upper = chi2_expect(p, m - n + 1, n, "mmse_x") if m >= n else var_x
    return SandwichBound(n, m, lower, upper, "mmse_per_coordinate")


def gap_bounds(p: Prior | None, n: int, m: int) -> tuple[float, float]:
    """Bounds on ``|I_{m,n}/n - I_X(m/n)|`` and ``|M_{m,n} - mmse_X(m/n)|`` for ``m >= n + 2``.

    The values do not depend on the prior; ``p`` is accepted so all bound
    functions share one calling convention and may be ``None``.
    """
    if n < 1 or m < n + 2:
        raise DomainError(f"gap bounds need m >= n + 2 (got n={n}, m={m})")
    core = (n + 1) / (m - n - 1) + math.sqrt(2.0 / (m - 2))
    return 0.5 * core, 12.0 * n / m * core


def boundary_bound(delta: float) -> float:
    """``(4 + sqrt 2) / sqrt(delta)``, bounding ``|I_n(delta) - I_RS(delta)|`` for ``delta >= 4``."""
    if delta < 4:
        raise DomainError(f"boundary bound needs delta >= 4, got {delta!r}")
    return BOUNDARY_CONSTANT / math.sqrt(delta)


def bounds_report(p: Prior, n: int, m: int) -> dict:
    mi = mi_sandwich(p, n, m)
    mm = mmse_sandwich(p, n, m)
    try:
        mi_gap, mmse_gap = gap_bounds(p, n, m)
    except DomainError:
        mi_gap = mmse_gap = None
    delta = m / n
    return {
        "schema": 1,
        "n": n,
        "m": m,
        "mi_lower": mi.lower,
        "mi_upper": mi.upper,
        "mmse_lower": mm.lower,
        "mmse_upper": mm.upper,
        "mi_gap": mi_gap,
        "mmse_gap": mmse_gap,
        "boundary_bound": boundary_bound(delta) if delta >= 4 else None,
        "boundary_constant": "4+sqrt(2)",
        "boundary_constant_note": (
            "the large-ratio bound holds with an absolute constant; "
            "4+sqrt(2) is an explicit admissible value"
        ),
    }


def sandwich_dict(b: SandwichBound) -> dict:
    return asdict(b)
