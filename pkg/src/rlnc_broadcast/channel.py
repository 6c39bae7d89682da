"""Erasure channel models for a single-hop broadcast.

Each user's channel is a two-state ON/OFF Markov chain with transition
probabilities ``alpha`` (ON -> OFF) and ``beta`` (OFF -> ON).  A transmission
in slot t reaches user i iff the user's state in slot t is ON.

Besides slot-by-slot stepping, every independent regime knows how to sample the
*reception gaps* of a block directly: the number of slots from block start to
the first reception, the gap to the second reception, and the sum of the
remaining gaps.  This is exact in distribution and lets large-n sessions run
without touching individual slots.

Random streams
--------------
Everything is driven by :func:`stream`, which maps ``(seed, *key)`` to an
independent ``numpy.random.Generator`` through ``SeedSequence(seed,
spawn_key=key)``.  Replication ``r`` of a session uses ``key=(r,)``; in the
slot engine user ``i`` of that replication uses ``(r, 0, i)`` and the source
(coefficient draws) uses ``(r, 1)``.  Child streams depend only on their key,
never on how many siblings exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError

ChannelState = np.ndarray  # bool vector, True = ON


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed of a child stream; used to label sweep rows."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


class UserStreams:
    """One generator per user, exposed through a ``random(n)`` call that
    returns one uniform from each user's own stream.

    A user's draws do not depend on how many other users exist, which gives
    common random numbers across different n.
    """

    def __init__(self, seed: int, replication: int, n: int, chunk: int = 512):
        self.n = n
        self._gens = [stream(seed, replication, 0, i) for i in range(n)]
        self._chunk = chunk
        self._buf = np.empty((n, chunk))
        self._pos = chunk

    def random(self, size: int) -> np.ndarray:
        if size != self.n:
            raise ValueError(f"UserStreams holds {self.n} users, asked for {size}")
        if self._pos == self._chunk:
            for i, g in enumerate(self._gens):
                self._buf[i] = g.random(self._chunk)
            self._pos = 0
        u = self._buf[:, self._pos]
        self._pos += 1
        return u


@dataclass(frozen=True)
class ChannelParams:
    """Gilbert-Elliott transition pair.  ``alpha`` is P(ON -> OFF), ``beta`` is P(OFF -> ON)."""

    alpha: float
    beta: float

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta)):
            if not (0.0 < v <= 1.0):
                raise DomainError(f"{name} must lie in (0, 1], got {v}")

    @property
    def p(self) -> float:
        return steady_state_erasure(self)

    @property
    def pi_on(self) -> float:
        return self.beta / (self.alpha + self.beta)

    @property
    def lam(self) -> float:
        """Decay rate of the OFF sojourn tail, -ln(1 - beta)."""
        return math.inf if self.beta == 1.0 else -math.log1p(-self.beta)

    @property
    def correlation_factor(self) -> float:
        """2/(alpha+beta) - 1; equals 1 for the memoryless channel."""
        return 2.0 / (self.alpha + self.beta) - 1.0

    def require_aperiodic(self) -> None:
        if self.alpha + self.beta >= 2.0:
            raise DomainError(
                "alpha + beta = 2 makes the channel a deterministic alternation; "
                "the throughput and delay formulas assume alpha + beta != 2"
            )


def steady_state_erasure(params: ChannelParams) -> float:
    return params.alpha / (params.alpha + params.beta)


def inter_success_pmf_from_on(params: ChannelParams, u: int) -> float:
    """P(X = u) for the gap between successive receptions, the previous slot being ON."""
    if u < 1:
        raise DomainError(f"gap length must be >= 1, got {u}")
    a, b = params.alpha, params.beta
    if u == 1:
        return 1.0 - a
    return a * b * (1.0 - b) ** (u - 2)


def inter_success_mgf(params: ChannelParams, tau: float, start: str = "on") -> float:
    """E[exp(tau X)] for the slots until the next reception.

    ``start`` is the channel state in the slot before counting begins.  Finite
    only for ``tau < -ln(1 - beta)``.
    """
    a, b = params.alpha, params.beta
    if tau >= params.lam:
        raise DomainError(f"tau={tau} outside the MGF domain tau < {params.lam}")
    e = math.exp(tau)
    off_part = b * e / (1.0 - (1.0 - b) * e)
    if start == "off":
        return off_part
    if start != "on":
        raise ValueError(f"start must be 'on' or 'off', got {start!r}")
    return (1.0 - a) * e + a * e * off_part


# ---------------------------------------------------------------------------
# regimes


@dataclass
class GapDraw:
    """Per-user reception gaps for one block.

    ``first`` is the first gap, ``second`` the second (0 when only one
    reception is needed) and ``tail`` the sum of gaps 3..c.
    """

    first: np.ndarray
    second: np.ndarray
    tail: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.first + self.second + self.tail


def _negbin_excess(m: np.ndarray, prob, rng: np.random.Generator) -> np.ndarray:
    """Failures before m successes, with m == 0 mapped to 0."""
    out = rng.negative_binomial(np.maximum(m, 1), prob)
    return np.where(m > 0, out, 0)


@dataclass(frozen=True)
class Invariant:
    """Memoryless erasure channel, i.i.d. Bernoulli(p) erasures per user and slot."""

    p: float
    memoryless = True

    def __post_init__(self):
        if not (0.0 <= self.p < 1.0):
            raise DomainError(f"erasure probability must lie in [0, 1), got {self.p}")

    @property
    def q(self):
        return 1.0 - self.p

    @property
    def worst_p(self) -> float:
        return self.p

    def as_correlated(self) -> "Correlated":
        return Correlated(ChannelParams(self.p, 1.0 - self.p))

    def check_users(self, n: int) -> None:
        if n < 1:
            raise ValueError("need at least one user")

    def next_state(self, state: ChannelState, u: np.ndarray) -> ChannelState:
        return u < self.q

    def sample_block(self, start: ChannelState, counts: np.ndarray, rng) -> GapDraw:
        """Gaps for one block (counts of shape (n,)) or a batch of blocks (shape (B, n))."""
        shape = counts.shape
        q = self.q if _is_scalar(self.q) else np.broadcast_to(self.q, shape)
        size = shape if _is_scalar(q) else None
        first = rng.geometric(q, size)
        second = np.where(counts >= 2, rng.geometric(q, size), 0)
        m = np.maximum(counts - 2, 0)
        tail = m + _negbin_excess(m, q, rng)
        return GapDraw(first, second, tail)

    def end_state(self, lag: np.ndarray, rng) -> ChannelState | None:
        return None


def _is_scalar(x) -> bool:
    return np.ndim(x) == 0


@dataclass(frozen=True)
class Asymmetric(Invariant):
    """Independent memoryless channels with per-user erasure probabilities."""

    p: tuple = ()

    def __post_init__(self):
        ps = np.asarray(self.p, dtype=float)
        if ps.ndim != 1 or ps.size == 0:
            raise DomainError("asymmetric regime needs a non-empty list of erasure probabilities")
        if np.any(ps <= 0.0) or np.any(ps >= 1.0):
            raise DomainError("every per-user erasure probability must lie in (0, 1)")
        object.__setattr__(self, "p", tuple(float(x) for x in ps))

    @property
    def q(self):
        return 1.0 - np.asarray(self.p)

    @property
    def worst_p(self) -> float:
        return max(self.p)

    def check_users(self, n: int) -> None:
        if n != len(self.p):
            raise ValueError(f"asymmetric regime has {len(self.p)} users, got n={n}")


@dataclass(frozen=True)
class Correlated:
    """Independent Gilbert-Elliott channels sharing one transition pair."""

    params: ChannelParams
    memoryless = False

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def worst_p(self) -> float:
        return self.params.p

    def check_users(self, n: int) -> None:
        if n < 1:
            raise ValueError("need at least one user")

    def next_state(self, state: ChannelState, u: np.ndarray) -> ChannelState:
        a, b = self.params.alpha, self.params.beta
        return np.where(state, u >= a, u < b)

    def _on_gaps(self, n: int, rng) -> np.ndarray:
        a, b = self.params.alpha, self.params.beta
        u = rng.random(n)
        g = rng.geometric(b, n)
        return 1 + np.where(u < a, g, 0)

    def sample_block(self, start: ChannelState, counts: np.ndarray, rng) -> GapDraw:
        n = counts.shape[0]
        a, b = self.params.alpha, self.params.beta
        u = rng.random(n)
        g = rng.geometric(b, n)
        first = np.where(start, 1 + np.where(u < a, g, 0), g)
        second = np.where(counts >= 2, self._on_gaps(n, rng), 0)
        # m ON-gaps: m slots plus one Geometric(beta) OFF sojourn per ON->OFF departure
        m = np.maximum(counts - 2, 0)
        departures = rng.binomial(m, a)
        tail = m + departures + _negbin_excess(departures, b, rng)
        return GapDraw(first, second, tail)

    def end_state(self, lag: np.ndarray, rng) -> ChannelState:
        """State ``lag`` slots after each user's last reception (which was ON)."""
        a, b = self.params.alpha, self.params.beta
        pi = self.params.pi_on
        p_on = pi + (1.0 - pi) * np.power(1.0 - a - b, lag)
        return rng.random(lag.shape[0]) < p_on


@dataclass(frozen=True)
class PerfectlyDependent:
    """All users share one memoryless channel: identical reception bits every slot."""

    p: float
    memoryless = True

    def __post_init__(self):
        if not (0.0 <= self.p < 1.0):
            raise DomainError(f"erasure probability must lie in [0, 1), got {self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def worst_p(self) -> float:
        return self.p

    def check_users(self, n: int) -> None:
        if n < 1:
            raise ValueError("need at least one user")

    def next_state(self, state: ChannelState, u: np.ndarray) -> ChannelState:
        return np.full(state.shape[0], u[0] < self.q)

    def sample_block(self, start: ChannelState, counts: np.ndarray, rng) -> GapDraw:
        cmax = int(counts.max())
        gaps = rng.geometric(self.q, cmax)
        cum = np.cumsum(gaps)
        n = counts.shape[0]
        first = np.full(n, gaps[0])
        second = np.where(counts >= 2, gaps[1] if cmax >= 2 else 0, 0)
        tail = cum[counts - 1] - first - second
        return GapDraw(first, second, tail)

    def end_state(self, lag, rng):
        return None


@dataclass(frozen=True)
class JointSampler:
    """User-supplied joint channel law.

    ``sampler(prev_state, rng)`` returns the next n-vector of ON/OFF states.
    Only the slot-level engine can drive this regime.
    """

    sampler: Callable[[ChannelState, np.random.Generator], ChannelState]
    n: int
    memoryless = False

    def check_users(self, n: int) -> None:
        if n != self.n:
            raise ValueError(f"joint sampler is defined for {self.n} users, got n={n}")


ChannelRegime = Union[Invariant, Asymmetric, Correlated, PerfectlyDependent, JointSampler]


def all_on(n: int) -> ChannelState:
    return np.ones(n, dtype=bool)


def is_all_on(state: ChannelState) -> bool:
    return bool(state.all())


def step(state: ChannelState, regime: ChannelRegime, rng) -> tuple[ChannelState, np.ndarray]:
    """Advance every user's channel by one slot.

    ``rng`` may be a ``numpy.random.Generator`` or a :class:`UserStreams`.
    Returns the new state and the reception bits (1 iff ON in the new slot).
    """
    n = state.shape[0]
    regime.check_users(n)
    if isinstance(regime, JointSampler):
        new = np.asarray(regime.sampler(state, rng), dtype=bool)
        if new.shape != state.shape:
            raise ValueError("joint sampler returned a state of the wrong length")
    else:
        new = regime.next_state(state, rng.random(n))
    return new, new.astype(np.uint8)
