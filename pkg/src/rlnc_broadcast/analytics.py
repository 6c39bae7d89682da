"""Closed-form delay and throughput quantities.

All probabilities are computed in the log domain (or through regularised
incomplete beta functions), so block sizes up to 1e5 and user counts up to
1e9 evaluate without overflow.  Block size ``k`` is treated as a real-valued
function of ``n`` inside the bound functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import ChannelParams, inter_success_mgf
from .errors import DomainError

EULER_GAMMA = 0.57721566490153286061
PI = 3.1415926535897932385
GUMBEL_MEAN = EULER_GAMMA
GUMBEL_VARIANCE = PI**2 / 6.0


def _check_p(p):
    if not (0.0 <= p < 1.0):
        raise DomainError(f"erasure probability must lie in [0, 1), got {p}")


# ---------------------------------------------------------------------------
# negative binomial: slot index of the k-th success, success probability 1-p


def negbin_logpmf(t, k: int, p: float):
    t = np.asarray(t, dtype=float)
    _check_p(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            special.gammaln(t)
            - special.gammaln(k)
            - special.gammaln(t - k + 1)
            + special.xlogy(t - k, p)
            + k * math.log1p(-p)
        )
    return np.where(t >= k, out, -np.inf)


def negbin_pmf(t, k: int, p: float):
    return np.exp(negbin_logpmf(t, k, p))


def negbin_cdf(t, k: int, p: float):
    """P(Y <= t) = P(Binomial(t, 1-p) >= k)."""
    _check_p(p)
    t = np.floor(np.asarray(t, dtype=float))
    if p == 0.0:
        return np.where(t >= k, 1.0, 0.0)
    with np.errstate(invalid="ignore"):
        out = special.betaincc(np.maximum(t - k + 1, 1), k, p)
    return np.where(t >= k, out, 0.0)


def negbin_sf(t, k: int, p: float):
    """P(Y > t), accurate deep in the tail."""
    _check_p(p)
    t = np.floor(np.asarray(t, dtype=float))
    if p == 0.0:
        return np.where(t >= k, 0.0, 1.0)
    with np.errstate(invalid="ignore"):
        out = special.betainc(np.maximum(t - k + 1, 1), k, p)
    return np.where(t >= k, out, 1.0)


def negbin_quantile(u: float, k: int, p: float) -> int:
    """Smallest integer t with P(Y <= t) >= u."""
    if not (0.0 <= u < 1.0):
        raise DomainError("quantile level must lie in [0, 1)")
    lo, hi, step = k, k, 1
    while negbin_cdf(hi, k, p) < u:
        lo = hi + 1
        hi += step
        step *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if negbin_cdf(mid, k, p) >= u:
            hi = mid
        else:
            lo = mid + 1
    return int(lo)


# ---------------------------------------------------------------------------
# exact mean delay for the memoryless channel


def exact_mean_delay_invariant(n: int, k: int, p: float, tol: float = 1e-9, full_output: bool = False):
    """E[max of n i.i.d. negative binomials], summed until the tail is certified below ``tol``.

    E[U] = k + sum_{t>=k} (1 - F(t)^n).  Truncation at T is certified by
    1 - F^n <= n (1 - F) and the geometric majorant of the negative binomial
    pmf beyond T, whose ratio (t+1) p / (t-k+2) decreases in t.

    With ``full_output`` returns ``(mean, T)``.
    """
    _check_p(p)
    if n < 1 or k < 1 or tol <= 0:
        raise DomainError("need n >= 1, k >= 1, tol > 0")
    if p == 0.0:
        return (float(k), k) if full_output else float(k)
    total = float(k)
    sd = math.sqrt(k * p) / (1 - p)
    chunk = int(max(256, 8 * sd))
    start = k
    while True:
        t = np.arange(start, start + chunk, dtype=float)
        sf = negbin_sf(t, k, p)
        with np.errstate(divide="ignore"):  # sf rounds to 1 early on when p is large
            terms = -np.expm1(n * np.log1p(-sf))
        rho = (t + 1) * p / (t - k + 2)
        with np.errstate(divide="ignore"):
            cert = n * negbin_pmf(t + 1, k, p) / (1 - rho) ** 2
        ok = (rho < 1) & (cert < tol) & (n * sf < tol * 1e-2)
        hit = np.flatnonzero(ok)
        if hit.size:
            stop = hit[0]
            total += float(np.sum(terms[:stop]))
            T = int(t[stop])
            return (total, T) if full_output else total
        total += float(np.sum(terms))
        start += chunk
        if start > k + 1e9:
            raise DomainError("tail sum failed to converge")


# ---------------------------------------------------------------------------
# fraction of users done by slot t


def fraction_decoded(t, k: int, p: float):
    """Probability that a user has k receptions within t slots (0 when t < k)."""
    return negbin_cdf(t, k, p)


def fraction_decoded_normalized(s, k: int, p: float):
    """Same as :func:`fraction_decoded` on the normalised time axis s = (t - k)/k."""
    t = np.floor(k * (1.0 + np.asarray(s, dtype=float)) + 1e-9)
    return negbin_cdf(t, k, p)


# ---------------------------------------------------------------------------
# extreme-value approximations


@dataclass(frozen=True)
class EvtMoments:
    mean: float
    variance: float
    a_n: float
    b_n: float


def evt_moments(n: int, k: float, alpha: float, beta: float) -> EvtMoments:
    """Gumbel-limit mean and variance of the decoding delay for blocks that
    start with every channel ON.  alpha + beta = 1 is the memoryless case."""
    if n < 2:
        raise DomainError("extreme-value moments need n >= 2")
    s = alpha + beta
    if not (0.0 < s < 2.0):
        raise DomainError(f"alpha + beta must lie in (0, 2), got {s}")
    p = alpha / s
    corr = 2.0 / s - 1.0
    L = math.log(n)
    root = math.sqrt(2.0 * L)
    mean = k / (1 - p) + math.sqrt(k * p) / (1 - p) * math.sqrt(corr) * (root + EULER_GAMMA / root)
    var = k * p * PI**2 / (12.0 * (1 - p) ** 2 * L) * corr
    return EvtMoments(mean, var, 1.0 / root, root)


def evt_moments_invariant(n: int, k: float, p: float) -> EvtMoments:
    return evt_moments(n, k, p, 1.0 - p)


def delay_location_scale(k: float, p: float, corr: float = 1.0) -> tuple[float, float]:
    """mu(k) = k/(1-p) and sigma(k) = sqrt(k p corr)/(1-p) used to standardise delays."""
    return k / (1 - p), math.sqrt(k * p * corr) / (1 - p)


def gumbel_norming(n: int, mode: str = "scaled", p: float | None = None) -> tuple[float, float]:
    """Norming constants (a_n, b_n) for the maximum of n per-user delays.

    ``scaled``  -- k grows faster than ln n: (1/sqrt(2 ln n), sqrt(2 ln n)).
    ``fixed``   -- k held constant: (-1/ln p, ln n); needs ``p``.
    ``refined`` -- as ``scaled`` with the second-order location term of the
                   normal maximum, b_n - (ln ln n + ln 4 pi) / (2 sqrt(2 ln n)).
    """
    if n < 2:
        raise DomainError("norming constants need n >= 2")
    L = math.log(n)
    if mode == "scaled":
        r = math.sqrt(2 * L)
        return 1.0 / r, r
    if mode == "refined":
        r = math.sqrt(2 * L)
        return 1.0 / r, r - (math.log(L) + math.log(4 * PI)) / (2 * r)
    if mode == "fixed":
        if p is None or not (0.0 < p < 1.0):
            raise DomainError("fixed-k norming needs p in (0, 1)")
        return -1.0 / math.log(p), L
    raise ValueError(f"unknown norming mode {mode!r}")


# ---------------------------------------------------------------------------
# throughput and delay bounds for Gilbert-Elliott channels


@dataclass(frozen=True)
class BoundConstants:
    tau0: float  # MGF abscissa for the first-gap term
    mu0: float  # worst-case MGF value at tau0 over the start state
    b: float  # Chernoff slope constant, tau = b sqrt(ln n)
    b_hat: float  # k = b_hat ln n + 1
    lam: float
    gamma: float = EULER_GAMMA


def _params(alpha, beta) -> ChannelParams:
    prm = ChannelParams(alpha, beta)
    prm.require_aperiodic()
    return prm


def max_chernoff_slope(f: float, alpha: float, beta: float) -> float:
    """Supremum of admissible b: b sqrt(ln n) < sigma_hat * lambda with k - 1 = f ln n."""
    prm = _params(alpha, beta)
    return prm.lam * math.sqrt(f * alpha * (2 - alpha - beta)) / beta


def bound_constants(
    n: int, f: float, alpha: float, beta: float, tau0: float | None = None, b: float | None = None
) -> BoundConstants:
    """Constants for the throughput lower bound; defaults are midpoints of the admissible ranges."""
    prm = _params(alpha, beta)
    if n < 2:
        raise DomainError("bounds need n >= 2")
    if f <= 0:
        raise DomainError("f(n) must be positive")
    lam = prm.lam
    if not math.isfinite(lam):
        raise DomainError("beta = 1 leaves no room for an MGF abscissa")
    if tau0 is None:
        tau0 = 0.5 * lam
    if not (0.0 < tau0 < lam):
        raise DomainError(f"tau0 must lie in (0, {lam})")
    mu0 = max(inter_success_mgf(prm, tau0, "on"), inter_success_mgf(prm, tau0, "off"))
    bmax = max_chernoff_slope(f, alpha, beta)
    if b is None:
        b = 0.5 * bmax
    if not (0.0 < b < bmax):
        raise DomainError(f"b must lie in (0, {bmax}) for f={f}")
    return BoundConstants(tau0=tau0, mu0=mu0, b=b, b_hat=f, lam=lam)


def throughput_upper_bound(n: int, k: float, alpha: float, beta: float) -> float:
    """k lambda / (lambda + alpha (ln n + gamma))."""
    prm = _params(alpha, beta)
    lam = prm.lam
    if not math.isfinite(lam):
        return float(k)
    return k * lam / (lam + alpha * (math.log(n) + EULER_GAMMA))


def _log_r(f: float, alpha: float, beta: float, b: float) -> float:
    s = 2.0 - alpha - beta
    x1 = -b * math.sqrt(alpha) / math.sqrt(s) / math.sqrt(f)
    x2 = b * beta / math.sqrt(alpha * s) / math.sqrt(f)
    em = math.expm1(x2)
    if em * (1 - beta) >= beta:
        raise DomainError("Chernoff slope outside the MGF domain")
    return x1 + math.log1p(em * (alpha + beta - 1) / beta) - math.log1p(-em * (1 - beta) / beta)


@dataclass(frozen=True)
class LowerBound:
    value: float
    phi: float
    r_n: float
    limit_ratio: float  # lim phi / (f ln n + 1) when f is held constant
    fraction: float  # 1 / limit_ratio: guaranteed fraction of capacity


def throughput_lower_bound(
    n: int, f: float, alpha: float, beta: float, consts: BoundConstants | None = None
) -> LowerBound:
    """Lower bound (1-p)(f ln n + 1)/phi(n) on the throughput with k = f ln n + 1."""
    prm = _params(alpha, beta)
    if consts is None:
        consts = bound_constants(n, f, alpha, beta)
    if not (0.0 < consts.tau0 < prm.lam) or consts.b <= 0:
        raise DomainError("bound constants outside their domain")
    p = prm.p
    L = math.log(n)
    lr = _log_r(f, alpha, beta, consts.b)
    d3 = math.sqrt(alpha * (2 - alpha - beta)) / (consts.b * beta)
    phi = (
        (1 - p) / consts.tau0 * (L + math.log(consts.mu0))
        + f * L
        + (1 - p) * math.sqrt(f) * d3 * L * (1 + f * lr)
    )
    value = (1 - p) * (f * L + 1) / phi
    limit = 1 + (1 - p) / (consts.tau0 * f) + (1 - p) * d3 / math.sqrt(f) * (1 + f * lr)
    return LowerBound(value=value, phi=phi, r_n=math.exp(lr), limit_ratio=limit, fraction=1.0 / limit)


def lemma_bounds(n: int, consts: BoundConstants, alpha: float, beta: float) -> tuple[float, float]:
    """(upper bound on E[max_i X_ih] for any h, lower bound on E[max_i X_i2])."""
    prm = _params(alpha, beta)
    if not (0.0 < consts.tau0 < prm.lam):
        raise DomainError("tau0 outside the MGF domain")
    L = math.log(n)
    upper = (L + math.log(consts.mu0)) / consts.tau0
    lower = 1 + alpha / prm.lam * (L + EULER_GAMMA)
    return upper, lower


def mean_max_on_gap(n: int, alpha: float, beta: float, tol: float = 1e-13) -> float:
    """Exact E[max of n i.i.d. ON-started reception gaps]: 1 + sum_u [1 - (1 - alpha (1-beta)^(u-1))^n]."""
    total = 1.0
    u = 1
    while True:
        tail = alpha * (1.0 - beta) ** (u - 1)
        total += -math.expm1(n * math.log1p(-tail)) if tail < 1 else 1.0
        if n * tail < tol:
            return total
        u += 1


def dependent_bound_functions(n: int, f: float, p: float, b: float) -> tuple[float, float]:
    """(g(n), h(n)) bounding the delay and throughput when user channels may be dependent.

    With k = f ln n:  E[U] <= g ln n / (1-p)  and  throughput >= h (1-p),  h = f/g.
    """
    if not (0.0 < p < 1.0):
        raise DomainError("p must lie in (0, 1)")
    if n < 2 or f <= 0:
        raise DomainError("need n >= 2 and f > 0")
    bmax = math.sqrt(f * p) * math.log(1 / (1 - p)) / (1 - p)
    if not (0.0 < b <= bmax):
        raise DomainError(f"b must lie in (0, {bmax}]")
    x = b * (1 - p) / math.sqrt(p * f)
    if p * math.exp(x) >= 1.0:
        raise DomainError("Chernoff slope outside the MGF domain")
    log_mgf = math.log1p(-p) - b * math.sqrt(p) / math.sqrt(f) - math.log1p(-p * math.exp(x))
    g = f + math.sqrt(f * p) / b * (1 + f * log_mgf)
    return g, f / g


def lt_throughput_bounds(
    n: int,
    k: int,
    delta: float,
    alpha: float,
    beta: float,
    c: float = 0.1,
    tau0: float | None = None,
    b: float | None = None,
) -> tuple[float, float]:
    """(lower, upper) throughput bounds for LT-style coding.

    Each block needs nu = ceil(k + c sqrt(k) ln^2(k/delta)) receptions per user
    and delivers k packets with probability 1 - delta, so the renewal-interval
    bounds are evaluated at nu while the reward stays k.
    """
    from .coding import lt_threshold

    nu = lt_threshold(k, delta, c)
    prm = _params(alpha, beta)
    f_nu = (nu - 1) / math.log(n)
    lb = throughput_lower_bound(n, f_nu, alpha, beta, bound_constants(n, f_nu, alpha, beta, tau0, b))
    lower = (1 - delta) * k * (1 - prm.p) / lb.phi
    upper = throughput_upper_bound(n, k, alpha, beta)
    return lower, upper
