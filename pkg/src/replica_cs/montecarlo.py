"""Exact-posterior Monte Carlo for the finite-n measurement model.

Each trial draws ``x`` from the prior, ``a`` with i.i.d. ``N(0, 1/n)`` entries
and unit-variance noise ``w``, and forms ``y = a x + w``.  The posterior is
computed exactly by enumerating either the atoms of a discrete prior or the
component assignments of a Gaussian mixture.

Random numbers come from a Philox generator keyed by ``(seed, trial)``, with
separate substreams for ``x``, ``a`` and ``w``.  Rows of ``a`` and ``w`` are
drawn in order, so the instance with ``m`` measurements is a prefix of the
one with ``m + 1``.  That gives common random numbers across ``m`` for free.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EnumerationTooLarge, OutOfRange
from .prior import Prior, moments, sample

__all__ = [
    "Instance",
    "McEstimate",
    "MiProfile",
    "MAX_STATES",
    "sample_instance",
    "exact_posterior_mean",
    "mi_density",
    "estimate",
    "mi_difference_profile",
    "trial_statistics",
]

MAX_STATES = 2**24
ESTIMATORS = ("posterior_var_avg", "error_avg")

# budget for the largest intermediate array, in float64 entries
_WORK_ENTRIES = 2**22


@dataclass(frozen=True, eq=False)
class Instance:
    x: np.ndarray  # (n,)
    a: np.ndarray  # (m, n)
    w: np.ndarray  # (m,)
    y: np.ndarray  # (m,)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.y.shape[0]

    def truncate(self, m: int) -> "Instance":
        return Instance(self.x, self.a[:m], self.w[:m], self.y[:m])


@dataclass(frozen=True)
class McEstimate:
    n: int
    m: int
    trials: int
    mmse_hat: float
    mmse_se: float
    mi_hat: float
    mi_se: float
    seed: int
    estimator: str

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "n": self.n,
            "m": self.m,
            "trials": self.trials,
            "mmse_hat": self.mmse_hat,
            "mmse_se": _json_float(self.mmse_se),
            "mi_hat_nats": self.mi_hat,
            "mi_se_nats": _json_float(self.mi_se),
            "seed": self.seed,
            "estimator": self.estimator,
        }


@dataclass(frozen=True, eq=False)
class MiProfile:
    """Per-m estimates from one set of trials shared across all ``m``.

    Differences are averaged trial by trial, so their standard errors are the
    paired ones and are much smaller than those of the levels.
    """

    n: int
    trials: int
    seed: int
    estimator: str
    m: np.ndarray  # 0..m_max
    mi_hat: np.ndarray
    mi_se: np.ndarray
    mmse_hat: np.ndarray
    mmse_se: np.ndarray
    i_prime_hat: np.ndarray  # I_{m+1} - I_m, m = 0..m_max-1
    i_prime_se: np.ndarray
    i_second_hat: np.ndarray  # I'_{m+1} - I'_m, m = 0..m_max-2
    i_second_se: np.ndarray
    mmse_diff_hat: np.ndarray  # M_{m+1} - M_m
    mmse_diff_se: np.ndarray

    def rows(self) -> list[tuple[int, float, float]]:
        """``(m, i_prime_hat, mmse_hat)`` for ``m = 0..m_max-1``."""
        return [
            (int(m), float(ip), float(mm))
            for m, ip, mm in zip(self.m[:-1], self.i_prime_hat, self.mmse_hat[:-1])
        ]


def _json_float(v: float):
    return v if math.isfinite(v) else None


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise OutOfRange(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _streams(seed: int, trial: int):
    # substream j starts at counter j * 2**128, the same state as jumped(j)
    key = _check_seed(seed) | (int(trial) << 64)
    return tuple(
        np.random.Generator(np.random.Philox(counter=[0, 0, j, 0], key=key)) for j in range(3)
    )


def sample_instance(p: Prior, n: int, m: int, seed: int, trial: int = 0) -> Instance:
    """Deterministic draw of one measurement instance for ``(seed, trial)``."""
    if n < 1 or m < 0:
        raise OutOfRange("need n >= 1 and m >= 0")
    gx, ga, gw = _streams(seed, trial)
    x = sample(p, n, gx)
    a = ga.standard_normal(m * n).reshape(m, n) / math.sqrt(n)
    w = gw.standard_normal(m)
    return Instance(x, a, w, a @ x + w)


def _state_count(p: Prior, n: int, max_states: int) -> int:
    count = len(p) ** n
    if count > max_states:
        raise EnumerationTooLarge(
            f"{len(p)}^{n} = {count} posterior states exceed the limit {max_states}"
        )
    return count


def _digits(start: int, stop: int, base: int, n: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return (idx[:, None] // base ** np.arange(n, dtype=np.int64)) % base


class _Accumulator:
    """Streaming log-sum-exp with weighted first and second moments."""

    def __init__(self, shape, n):
        self.mx = np.full(shape, -np.inf)
        self.s0 = np.zeros(shape)
        self.s1 = np.zeros(shape + (n,))
        self.s2 = np.zeros(shape + (n,))

    def add(self, logw, m1, m2):
        # logw (..., S); m1, m2 (..., S, n) or (S, n)
        new = np.maximum(self.mx, logw.max(axis=-1))
        scale = np.exp(self.mx - new)
        e = np.exp(logw - new[..., None])
        self.s0 = self.s0 * scale + e.sum(axis=-1)
        if m1.ndim == 2:
            s1, s2 = e @ m1, e @ m2
        else:
            s1 = np.einsum("...s,...si->...i", e, m1)
            s2 = np.einsum("...s,...si->...i", e, m2)
        self.s1 = self.s1 * scale[..., None] + s1
        self.s2 = self.s2 * scale[..., None] + s2
        self.mx = new

    def result(self):
        mean = self.s1 / self.s0[..., None]
        var = np.maximum(self.s2 / self.s0[..., None] - mean**2, 0.0)
        return mean, var, self.mx + np.log(self.s0)


def _posterior_discrete(p, a, y, ms, max_states):
    """Atom enumeration with cumulative residuals, so all ``ms`` share one pass."""
    t, _, n = a.shape
    k = len(p)
    total = _state_count(p, n, max_states)
    center = moments(p)[0]
    atoms = p.means - center
    logw = np.log(p.weights)
    m_top = max(ms)
    rows = np.asarray(ms)
    acc = _Accumulator((t, len(ms)), n)
    chunk = max(1, min(total, _WORK_ENTRIES // max(1, t * max(m_top, 1))))
    a_top, y_top = a[:, :m_top], y[:, :m_top] - a[:, :m_top] @ np.full(n, center)
    for start in range(0, total, chunk):
        d = _digits(start, min(total, start + chunk), k, n)
        c = atoms[d]
        lp = logw[d].sum(axis=1)
        # measurement axis last keeps the cumulative sum contiguous
        resid = (y_top[:, None, :] - c @ np.swapaxes(a_top, 1, 2)) ** 2
        energy = np.concatenate([np.zeros((t, c.shape[0], 1)), np.cumsum(resid, axis=2)], axis=2)
        acc.add(lp - 0.5 * np.swapaxes(energy[:, :, rows], 1, 2), c, c * c)
    mean, var, lse = acc.result()
    return mean + center, var, lse


def _posterior_mixture(p, a, y, ms, max_states):
    """Assignment enumeration; each assignment is a Gaussian prior with a conjugate posterior."""
    t, _, n = a.shape
    k = len(p)
    total = _state_count(p, n, max_states)
    center = moments(p)[0]
    mus = p.means - center
    sds = np.sqrt(p.variances)
    logw = np.log(p.weights)
    eye = np.eye(n)
    means = np.empty((t, len(ms), n))
    variances = np.empty((t, len(ms), n))
    lses = np.empty((t, len(ms)))
    for j, m in enumerate(ms):
        am = a[:, :m]
        ym = y[:, :m] - am @ np.full(n, center)
        gram = np.swapaxes(am, 1, 2) @ am
        acc = _Accumulator((t,), n)
        chunk = max(1, min(total, _WORK_ENTRIES // max(1, t * max(n * n, m))))
        for start in range(0, total, chunk):
            d = _digits(start, min(total, start + chunk), k, n)
            mu, sd = mus[d], sds[d]
            lp = logw[d].sum(axis=1)
            r = ym[:, None, :] - np.einsum("tmi,si->tsm", am, mu)
            b = sd * np.einsum("tmi,tsm->tsi", am, r)
            mmat = eye + sd[None, :, :, None] * gram[:, None, :, :] * sd[None, :, None, :]
            minv = np.linalg.inv(mmat)
            _, logdet = np.linalg.slogdet(mmat)
            z = np.einsum("tsij,tsj->tsi", minv, b)
            quad = np.einsum("tsm,tsm->ts", r, r) - np.einsum("tsi,tsi->ts", b, z)
            post_mean = mu + sd * z
            post_var = sd * sd * np.diagonal(minv, axis1=2, axis2=3)
            acc.add(lp - 0.5 * (logdet + quad), post_mean, post_var + post_mean**2)
        mean, var, lse = acc.result()
        means[:, j], variances[:, j], lses[:, j] = mean + center, var, lse
    return means, variances, lses


def _posterior(p, a, y, ms, max_states):
    if p.is_discrete:
        return _posterior_discrete(p, a, y, ms, max_states)
    return _posterior_mixture(p, a, y, ms, max_states)


def _batch_stats(p, x, a, y, ms, max_states):
    """Per-trial squared error, posterior variance and MI density at each ``m`` in ``ms``."""
    t, _, n = a.shape
    mean_x, var_x, _ = moments(p)
    err = np.empty((t, len(ms)))
    pvar = np.empty((t, len(ms)))
    mi = np.empty((t, len(ms)))
    data = [j for j, m in enumerate(ms) if m > 0]
    for j, m in enumerate(ms):
        if m == 0:
            err[:, j] = np.mean((x - mean_x) ** 2, axis=1)
            pvar[:, j] = var_x
            mi[:, j] = 0.0
    if data:
        sub = [ms[j] for j in data]
        mean, var, lse = _posterior(p, a, y, sub, max_states)
        for col, j in enumerate(data):
            m = ms[j]
            resid = y[:, :m] - np.einsum("tmi,ti->tm", a[:, :m], x)
            err[:, j] = np.mean((mean[:, col] - x) ** 2, axis=1)
            pvar[:, j] = var[:, col].mean(axis=1)
            mi[:, j] = -0.5 * np.sum(resid**2, axis=1) - lse[:, col]
    return err, pvar, mi


def exact_posterior_mean(p: Prior, inst: Instance, max_states: int = MAX_STATES):
    """Return ``(E[X | y, a], V)`` where ``V`` is the per-coordinate posterior variance."""
    if inst.m == 0:
        return np.full(inst.n, moments(p)[0]), moments(p)[1]
    mean, var, _ = _posterior(p, inst.a[None], inst.y[None], [inst.m], max_states)
    return mean[0, 0], float(var[0, 0].mean())


def mi_density(p: Prior, inst: Instance, max_states: int = MAX_STATES) -> float:
    """``log f(y | x, a) - log f(y | a)`` in nats."""
    if inst.m == 0:
        return 0.0
    _, _, lse = _posterior(p, inst.a[None], inst.y[None], [inst.m], max_states)
    resid = inst.y - inst.a @ inst.x
    return float(-0.5 * resid @ resid - lse[0, 0])


def trial_statistics(p: Prior, n: int, ms: Sequence[int], trials: int, seed: int,
                     max_states: int = MAX_STATES):
    """Arrays ``(err, post_var, mi)`` of shape ``(trials, len(ms))``.

    Every ``m`` uses the same trials, truncated to their first ``m`` rows.
    """
    ms = [int(m) for m in ms]
    if n < 1 or trials < 1 or min(ms) < 0:
        raise OutOfRange("need n >= 1, trials >= 1 and m >= 0")
    if any(m > 0 for m in ms):
        _state_count(p, n, max_states)
    m_top = max(ms)
    batch = max(1, min(trials, 256, _WORK_ENTRIES // max(1, m_top * min(len(p) ** n, 4096))))
    out = [np.empty((trials, len(ms))) for _ in range(3)]
    for start in range(0, trials, batch):
        stop = min(trials, start + batch)
        insts = [sample_instance(p, n, m_top, seed, t) for t in range(start, stop)]
        x = np.stack([i.x for i in insts])
        a = np.stack([i.a for i in insts])
        y = np.stack([i.y for i in insts])
        for dst, src in zip(out, _batch_stats(p, x, a, y, ms, max_states)):
            dst[start:stop] = src
    return tuple(out)


def _mean_se(v: np.ndarray, axis=0):
    mean = v.mean(axis=axis)
    # a constant column (m = 0 posterior variance) averages to itself exactly
    first = np.take(v, 0, axis=axis)
    mean = np.where(np.all(v == np.expand_dims(first, axis), axis=axis), first, mean)
    count = v.shape[axis]
    if count < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, v.std(axis=axis, ddof=1) / math.sqrt(count)


def estimate(p: Prior, n: int, m: int, trials: int, seed: int,
             estimator: str = "posterior_var_avg", max_states: int = MAX_STATES,
             dump_path: str | Path | None = None) -> McEstimate:
    """Monte Carlo estimates of ``M_{m,n}`` (per coordinate) and ``I_{m,n}`` (total nats)."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    err, pvar, mi = trial_statistics(p, n, [m], trials, seed, max_states)
    per_trial = (pvar if estimator == "posterior_var_avg" else err)[:, 0]
    mmse_hat, mmse_se = _mean_se(per_trial)
    mi_hat, mi_se = _mean_se(mi[:, 0])
    if dump_path is not None:
        with open(dump_path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["trial", "sq_error", "posterior_var", "mi_density_nats"])
            for t in range(trials):
                out.writerow([t, repr(float(err[t, 0])), repr(float(pvar[t, 0])), repr(float(mi[t, 0]))])
    return McEstimate(n, m, trials, float(mmse_hat), float(mmse_se), float(mi_hat),
                      float(mi_se), int(seed), estimator)


def mi_difference_profile(p: Prior, n: int, m_max: int, trials: int, seed: int,
                          estimator: str = "posterior_var_avg",
                          max_states: int = MAX_STATES) -> MiProfile:
    """Estimates of ``I_{m,n}``, ``I'_{m,n}`` and ``M_{m,n}`` for ``m = 0..m_max``."""
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if m_max < 1:
        raise OutOfRange("m_max must be at least 1")
    ms = list(range(m_max + 1))
    err, pvar, mi = trial_statistics(p, n, ms, trials, seed, max_states)
    mm = pvar if estimator == "posterior_var_avg" else err
    d1 = np.diff(mi, axis=1)
    mi_hat, mi_se = _mean_se(mi)
    mmse_hat, mmse_se = _mean_se(mm)
    ip_hat, ip_se = _mean_se(d1)
    i2_hat, i2_se = _mean_se(np.diff(d1, axis=1))
    dm_hat, dm_se = _mean_se(np.diff(mm, axis=1))
    return MiProfile(n, trials, int(seed), estimator, np.array(ms), mi_hat, mi_se,
                     mmse_hat, mmse_se, ip_hat, ip_se, i2_hat, i2_se, dm_hat, dm_se)
