"""Single-letter AWGN channel functions of a mixture prior.

For ``Y = sqrt(s) X + N`` with ``N ~ N(0, 1)`` the output density is the mixture
``f_Y(y) = sum_k w_k N(y; sqrt(s) mu_k, 1 + s var_k)`` and the posterior given
``Y`` is again a mixture with closed-form component weights, means and
variances.  Every quantity here is a one-dimensional integral over ``y``:

* ``mmse_X(s) = E[Var(X | Y)]``
* ``mmse_X'(s) = -E[Var(X | Y)^2]``
* ``I_X(s) = I(X; Y | K) + I(K; Y)`` where ``K`` is the component label, i.e.
  ``sum_k w_k log(1 + s var_k) / 2 + H(K) - E[H(K | Y)]``.  This split keeps the
  integrand bounded and avoids subtracting two large differential entropies.

The integral runs over the union of ``+-half_width`` output standard deviations
around every component centre, cut at all segment ends and centres, with
composite Gauss-Legendre panels doubled until two successive estimates agree.
All information is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import OutOfRange, QuadratureFailure
from .prior import Prior, moments

__all__ = [
    "QuadratureConfig",
    "ChannelEval",
    "evaluate",
    "channel_eval",
    "i_x",
    "mmse_x",
    "mmse_x_prime",
    "mmse_x_inv",
]


@dataclass(frozen=True)
class QuadratureConfig:
    nodes: int = 16
    half_width: float = 8.0
    tol: float = 1e-10
    initial_panels: int = 2
    max_panels: int = 1024

    def __post_init__(self):
        if self.nodes < 8:
            raise ValueError("need at least 8 Gauss-Legendre nodes per panel")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class ChannelEval:
    snr: float
    i_x: float
    mmse_x: float


@lru_cache(maxsize=8)
def _gl_rule(nodes):
    t, w = leggauss(nodes)
    return t, w


@numba.njit(cache=True)
def _panel_sums(w, mu, var, s, t, tw, panels, half_width):
    K = w.shape[0]
    rs = math.sqrt(s)
    centre = np.empty(K)
    outvar = np.empty(K)
    lognorm = np.empty(K)
    gain = np.empty(K)
    postvar = np.empty(K)
    seg_lo = np.empty(K)
    seg_hi = np.empty(K)
    bp = np.empty(3 * K)
    for k in range(K):
        centre[k] = rs * mu[k]
        outvar[k] = 1.0 + s * var[k]
        lognorm[k] = math.log(w[k]) - 0.5 * math.log(2.0 * math.pi * outvar[k])
        gain[k] = rs * var[k] / outvar[k]
        postvar[k] = var[k] / outvar[k]
        sd = math.sqrt(outvar[k])
        seg_lo[k] = centre[k] - half_width * sd
        seg_hi[k] = centre[k] + half_width * sd
        bp[3 * k] = seg_lo[k]
        bp[3 * k + 1] = centre[k]
        bp[3 * k + 2] = seg_hi[k]
    bp.sort()

    lc = np.empty(K)
    pk = np.empty(K)
    mk = np.empty(K)
    acc_h = 0.0
    acc_m = 0.0
    acc_p = 0.0
    n_nodes = t.shape[0]
    for j in range(3 * K - 1):
        a = bp[j]
        b = bp[j + 1]
        if not b > a:
            continue
        mid_ab = 0.5 * (a + b)
        covered = False
        for k in range(K):
            if seg_lo[k] <= mid_ab <= seg_hi[k]:
                covered = True
                break
        if not covered:
            continue
        width = (b - a) / panels
        half = 0.5 * width
        for p in range(panels):
            mid = a + (p + 0.5) * width
            for q in range(n_nodes):
                y = mid + half * t[q]
                mx = -np.inf
                for k in range(K):
                    d = y - centre[k]
                    lc[k] = lognorm[k] - 0.5 * d * d / outvar[k]
                    if lc[k] > mx:
                        mx = lc[k]
                tot = 0.0
                for k in range(K):
                    pk[k] = math.exp(lc[k] - mx)
                    tot += pk[k]
                fy = math.exp(mx) * tot
                if fy == 0.0:
                    continue
                logtot = math.log(tot)
                mbar = 0.0
                for k in range(K):
                    pk[k] /= tot
                    mk[k] = mu[k] + gain[k] * (y - centre[k])
                    mbar += pk[k] * mk[k]
                cv = 0.0
                ent = 0.0
                for k in range(K):
                    if pk[k] > 0.0:
                        dm = mk[k] - mbar
                        cv += pk[k] * (postvar[k] + dm * dm)
                        ent -= pk[k] * (lc[k] - mx - logtot)
                wq = half * tw[q] * fy
                acc_h += wq * ent
                acc_m += wq * cv
                acc_p += wq * cv * cv
    return acc_h, acc_m, acc_p


@numba.njit(cache=True)
def _adaptive_many(w, mu, var, s_arr, t, tw, half_width, tol, p0, pmax):
    n = s_arr.shape[0]
    out = np.empty((n, 3))
    ok = np.ones(n, dtype=np.bool_)
    for i in range(n):
        s = s_arr[i]
        p = p0
        prev = _panel_sums(w, mu, var, s, t, tw, p, half_width)
        done = False
        cur = prev
        while p < pmax:
            p *= 2
            cur = _panel_sums(w, mu, var, s, t, tw, p, half_width)
            done = True
            for j in range(3):
                if abs(cur[j] - prev[j]) > tol * max(1.0, abs(cur[j])):
                    done = False
            if done:
                break
            prev = cur
        out[i, 0] = cur[0]
        out[i, 1] = cur[1]
        out[i, 2] = cur[2]
        ok[i] = done
    return out, ok


def evaluate(p: Prior, s, config: QuadratureConfig | None = None):
    """Return ``(i_x, mmse_x, mmse_x_prime)`` arrays for an array of SNRs.

    Scalar input gives 0-d arrays.  This is the shared engine behind the
    single-quantity functions below; call it directly when more than one
    quantity is needed at the same SNR.
    """
    cfg = config or DEFAULT_QUADRATURE
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0):
        raise OutOfRange("snr must be finite and >= 0")
    shape = s.shape
    flat = s.ravel()
    ix = np.empty_like(flat)
    mm = np.empty_like(flat)
    mp = np.empty_like(flat)
    _, var_x, _ = moments(p)

    zero = flat == 0
    ix[zero] = 0.0
    mm[zero] = var_x
    mp[zero] = -var_x**2
    pos = ~zero
    if np.any(pos):
        sp = flat[pos]
        if p.is_gaussian:
            v = p.components[0].variance
            ix[pos] = 0.5 * np.log1p(sp * v)
            mm[pos] = v / (1.0 + sp * v)
            mp[pos] = -mm[pos] ** 2
        else:
            w, mu, var = p.weights, p.means, p.variances
            t, tw = _gl_rule(cfg.nodes)
            res, ok = _adaptive_many(
                w, mu, var, sp, t, tw, cfg.half_width, cfg.tol,
                cfg.initial_panels, cfg.max_panels,
            )
            if not ok.all():
                bad = sp[~ok][0]
                raise QuadratureFailure(f"quadrature did not converge at snr={bad!r}")
            entropy_k = -math.fsum(w * np.log(w))
            cond_mi = 0.5 * (np.log1p(np.outer(sp, var)) @ w)
            # I(K;Y) >= 0; clip rounding below zero
            ix[pos] = cond_mi + np.maximum(entropy_k - res[:, 0], 0.0)
            mm[pos] = res[:, 1]
            mp[pos] = -res[:, 2]
    return ix.reshape(shape), mm.reshape(shape), mp.reshape(shape)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def i_x(p: Prior, s, config: QuadratureConfig | None = None):
    """Mutual information ``I(X; sqrt(s) X + N)`` in nats."""
    return _out(evaluate(p, s, config)[0])


def mmse_x(p: Prior, s, config: QuadratureConfig | None = None):
    """MMSE of ``X`` from ``sqrt(s) X + N``."""
    return _out(evaluate(p, s, config)[1])


def mmse_x_prime(p: Prior, s, config: QuadratureConfig | None = None):
    """Derivative of :func:`mmse_x` in ``s``, equal to ``-E[Var(X|Y)^2]``."""
    return _out(evaluate(p, s, config)[2])


def channel_eval(p: Prior, s: float, config: QuadratureConfig | None = None) -> ChannelEval:
    ix, mm, _ = evaluate(p, s, config)
    return ChannelEval(float(s), float(ix), float(mm))


def _inverse_many(p: Prior, z: np.ndarray, config: QuadratureConfig | None = None,
                  rtol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Vectorized ``mmse_X^{-1}`` for ``z`` in ``(0, Var(X)]``.

    Starts from brackets read off a coarse SNR table, doubles ``s_hi`` until
    ``mmse_X(s_hi) < z`` when the table runs out, then bisects.  Newton steps
    from the known derivative are taken whenever they land inside the current
    bracket, which cuts the iteration count to a handful.
    """
    _, var_x, _ = moments(p)
    z = np.asarray(z, dtype=float)
    s = np.zeros_like(z)
    at_top = z >= var_x
    todo = ~at_top
    if not np.any(todo):
        return s
    if p.is_gaussian:
        v = p.components[0].variance
        s[todo] = (v - z[todo]) / (z[todo] * v)
        return s

    target = z[todo]
    # coarse log-spaced table gives tight starting brackets
    s_tab = np.concatenate([[0.0], np.logspace(-12, 6, 91)])
    m_tab = evaluate(p, s_tab, config)[1]
    idx = np.searchsorted(-m_tab, -target, side="right")
    lo = s_tab[np.clip(idx - 1, 0, len(s_tab) - 1)]
    hi = np.where(idx < len(s_tab), s_tab[np.minimum(idx, len(s_tab) - 1)], 2.0 * s_tab[-1])
    while True:
        m_hi = evaluate(p, hi, config)[1]
        grow = m_hi >= target
        if not np.any(grow):
            break
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2.0 * hi, hi)
        if np.any(hi > 1e300):
            raise OutOfRange("mmse target too small to invert")

    ftol = rtol * var_x
    x = 0.5 * (lo + hi)
    active = np.arange(target.size)
    for _ in range(max_iter):
        xa, la, ha = x[active], lo[active], hi[active]
        _, m, mp = evaluate(p, xa, config)
        f = m - target[active]
        done = (np.abs(f) < ftol) | (ha - la <= 1e-15 * ha)
        # mmse decreasing: f > 0 means the root lies above x
        la = np.where(f > 0, xa, la)
        ha = np.where(f > 0, ha, xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - f / mp
        inside = np.isfinite(newton) & (newton > la) & (newton < ha)
        step = np.where(inside, newton, 0.5 * (la + ha))
        lo[active], hi[active] = la, ha
        x[active] = np.where(done, xa, step)
        active = active[~done]
        if active.size == 0:
            break
    else:
        raise QuadratureFailure("mmse inverse did not converge")
    s[todo] = x
    return s


def mmse_x_inv(p: Prior, z, config: QuadratureConfig | None = None):
    """SNR ``s`` with ``mmse_X(s) = z`` for ``0 < z <= Var(X)``.

    The residual ``|mmse_X(s) - z|`` is below ``1e-10 * Var(X)``.
    """
    _, var_x, _ = moments(p)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0) or np.any(z_arr > var_x * (1 + 1e-15)):
        raise OutOfRange(f"z must lie in (0, Var(X)={var_x!r}]")
    return _out(_inverse_many(p, z_arr, config))
