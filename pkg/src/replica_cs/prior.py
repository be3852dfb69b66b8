"""Signal priors as finite mixtures of point masses and Gaussians.

A component with variance 0 is a point mass, so every prior goes through the
same channel code path.  Priors are immutable and hashable, which lets the
replica module cache per-prior tables.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegeneratePrior, InvalidWeight, OutOfRange

__all__ = [
    "MixtureComponent",
    "Prior",
    "make_prior",
    "moments",
    "figure1_prior",
    "gaussian_prior",
    "bpsk_prior",
    "bernoulli_gaussian_prior",
    "parse_prior",
    "prior_to_dict",
    "prior_from_dict",
    "load_prior",
    "save_prior",
    "prior_hash",
]

INPUT_WEIGHT_TOL = 1e-9
NORMALIZED_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    variance: float

    def __post_init__(self):
        for name in ("weight", "mean", "variance"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"component {name} must be finite, got {value!r}")
        if self.variance < 0:
            raise ValueError(f"component variance must be >= 0, got {self.variance!r}")

    @property
    def is_point_mass(self) -> bool:
        return self.variance == 0.0


@dataclass(frozen=True)
class Prior:
    """A validated mixture prior.  Build it with :func:`make_prior`."""

    components: tuple[MixtureComponent, ...]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    @property
    def is_discrete(self) -> bool:
        return all(c.is_point_mass for c in self.components)

    @property
    def is_gaussian(self) -> bool:
        return len(self.components) == 1 and self.components[0].variance > 0

    @property
    def variance(self) -> float:
        return moments(self)[1]

    def __len__(self):
        return len(self.components)


def _as_component(c) -> MixtureComponent:
    if isinstance(c, MixtureComponent):
        return c
    if isinstance(c, dict):
        return MixtureComponent(float(c["weight"]), float(c["mean"]), float(c["variance"]))
    weight, mean, variance = c
    return MixtureComponent(float(weight), float(mean), float(variance))


def make_prior(components: Iterable) -> Prior:
    """Validate and normalize a list of components.

    Items may be :class:`MixtureComponent`, ``(weight, mean, variance)`` tuples or
    ``{"weight", "mean", "variance"}`` dicts.  Components with weight exactly 0 are
    dropped.  Weights summing within 1e-9 of one are renormalized; an already
    normalized list (within 1e-12) is kept bit-for-bit.
    """
    comps = [_as_component(c) for c in components]
    if not comps:
        raise InvalidWeight("prior needs at least one component")
    for c in comps:
        if c.weight < 0:
            raise InvalidWeight(f"negative weight {c.weight!r}")
    comps = [c for c in comps if c.weight != 0.0]
    if not comps:
        raise InvalidWeight("all weights are zero")

    total = math.fsum(c.weight for c in comps)
    if abs(total - 1.0) > INPUT_WEIGHT_TOL:
        raise InvalidWeight(f"weights sum to {total!r}, not 1")
    if abs(total - 1.0) > NORMALIZED_WEIGHT_TOL:
        comps = [MixtureComponent(c.weight / total, c.mean, c.variance) for c in comps]

    prior = Prior(tuple(comps))
    _, var, _ = moments(prior)
    if not var > 0:
        raise DegeneratePrior("prior has zero variance")
    return prior


def moments(p: Prior) -> tuple[float, float, float]:
    """Return ``(mean, variance, E[X^4])`` of the mixture in closed form.

    The fourth moment is the raw moment
    ``sum_k w_k (mu_k^4 + 6 mu_k^2 s_k^2 + 3 s_k^4)``.
    """
    w, mu, var = p.weights, p.means, p.variances
    mean = math.fsum(w * mu)
    # centred form avoids cancellation for priors with large means
    variance = math.fsum(w * (var + (mu - mean) ** 2))
    fourth = math.fsum(w * (mu**4 + 6 * mu**2 * var + 3 * var**2))
    return mean, variance, fourth


def gaussian_prior(variance: float = 1.0, mean: float = 0.0) -> Prior:
    return make_prior([(1.0, mean, variance)])


def bpsk_prior() -> Prior:
    return make_prior([(0.5, -1.0, 0.0), (0.5, 1.0, 0.0)])


def bernoulli_gaussian_prior(rho: float, variance: float) -> Prior:
    """``(1 - rho) * delta_0 + rho * N(0, variance)``."""
    if not 0 < rho <= 1:
        raise OutOfRange(f"rho must lie in (0, 1], got {rho!r}")
    return make_prior([(1.0 - rho, 0.0, 0.0), (rho, 0.0, variance)])


def figure1_prior(alpha: float) -> Prior:
    """Three-component mixture ``0.4 N(0,5) + alpha N(40,5) + (0.6-alpha) N(220,5)``."""
    if not 0.0 <= alpha <= 0.6:
        raise OutOfRange(f"alpha must lie in [0, 0.6], got {alpha!r}")
    return make_prior([(0.4, 0.0, 5.0), (alpha, 40.0, 5.0), (0.6 - alpha, 220.0, 5.0)])


def parse_prior(source: str | Path) -> Prior:
    """Resolve a preset string or a path to a prior file.

    Presets: ``gaussian``, ``gaussian:<var>``, ``bpsk``, ``fig1:<alpha>``,
    ``bernoulli-gaussian:<rho>:<var>``.
    """
    text = str(source)
    name, *args = text.split(":")
    try:
        if name == "gaussian" and len(args) <= 1:
            return gaussian_prior(float(args[0]) if args else 1.0)
        if name == "bpsk" and not args:
            return bpsk_prior()
        if name == "fig1" and len(args) == 1:
            return figure1_prior(float(args[0]))
        if name == "bernoulli-gaussian" and len(args) == 2:
            return bernoulli_gaussian_prior(float(args[0]), float(args[1]))
    except ValueError as exc:
        raise ValueError(f"bad prior preset {text!r}: {exc}") from exc
    path = Path(text)
    if path.is_file():
        return load_prior(path)
    raise ValueError(f"unknown prior preset or missing file: {text!r}")


def prior_to_dict(p: Prior) -> dict:
    return {
        "schema": 1,
        "components": [
            {"weight": c.weight, "mean": c.mean, "variance": c.variance} for c in p.components
        ],
    }


def prior_from_dict(doc: dict) -> Prior:
    if "components" not in doc:
        raise ValueError("prior document needs a 'components' list")
    return make_prior(doc["components"])


def save_prior(p: Prior, path: str | Path) -> None:
    Path(path).write_text(json.dumps(prior_to_dict(p), indent=2) + "\n")


def load_prior(path: str | Path) -> Prior:
    return prior_from_dict(json.loads(Path(path).read_text()))


def prior_hash(p: Prior) -> str:
    """Short stable digest of the prior, used in output headers."""
    canon = json.dumps(prior_to_dict(p), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def sample(p: Prior, size: int | Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. samples from the mixture."""
    cdf = np.cumsum(p.weights)
    labels = np.minimum(np.searchsorted(cdf, rng.random(size=size), side="right"), len(cdf) - 1)
    z = rng.standard_normal(size=size)
    return p.means[labels] + np.sqrt(p.variances[labels]) * z
