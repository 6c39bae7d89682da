"""Block-by-block broadcast sessions.

A session transmits consecutive blocks; block j+1 starts in the slot after
every user has finished block j, with each channel in whatever state block j
left it.  Two engines produce the same per-block law:

``fast``
    samples every user's reception gaps in closed form (see
    :meth:`Correlated.sample_block` and friends) and never visits individual
    slots.  Rank-based decoding is modelled by sampling the number of
    receptions each user needs to reach full rank.
``slot``
    steps the channels slot by slot with one random stream per user and, for
    rank-based decoding, runs real GF(2^q) encoding and Gaussian elimination.

Throughput is delivered packets over elapsed slots after the warm-up blocks.
For Gilbert-Elliott channels the renewal ledger also tracks cycles between
block ends where every channel is ON, giving the ratio estimate
k E[M] / E[W].
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .channel import (
    ChannelRegime,
    ChannelState,
    Correlated,
    Invariant,
    JointSampler,
    UserStreams,
    all_on,
    step,
    stream,
)
from .coding import Idealized, LtThreshold, RankBased, RankDecoder, encode
from .errors import DomainError

Z95 = float(norm.ppf(0.975))


@dataclass
class BlockOutcome:
    delay: int
    max_first_gap: int
    max_second_gap: int
    max_tail_sum: int  # max_i of gaps 2..c
    end_state: ChannelState | None = None
    decoded: np.ndarray | None = None  # per-user decode indicator (LT only)
    completion: np.ndarray | None = None
    first_gap: np.ndarray | None = None
    second_gap: np.ndarray | None = None
    tail_gap: np.ndarray | None = None  # gaps 3..c summed

    @property
    def sandwich_ok(self) -> bool:
        return self.max_second_gap <= self.delay <= self.max_first_gap + self.max_tail_sum


def _outcome(first, second, tail, end_state, decoded, record) -> BlockOutcome:
    completion = first + second + tail
    out = BlockOutcome(
        delay=int(completion.max()),
        max_first_gap=int(first.max()),
        max_second_gap=int(second.max()),
        max_tail_sum=int((second + tail).max()),
        end_state=end_state,
        decoded=decoded,
    )
    if record:
        out.completion, out.first_gap, out.second_gap, out.tail_gap = completion, first, second, tail
    return out


def run_block(regime: ChannelRegime, model: Idealized, n: int, rng, start: ChannelState | None = None,
              record: bool = False) -> BlockOutcome:
    """One block with the fast engine.  ``start`` is the channel state in the slot before the block."""
    if isinstance(regime, JointSampler):
        raise DomainError("a user-supplied joint channel sampler needs engine='slot'")
    regime.check_users(n)
    if start is None:
        start = all_on(n)
    counts = model.required(n, rng)
    draw = regime.sample_block(start, counts, rng)
    completion = draw.total
    U = completion.max()
    end = regime.end_state(U - completion, rng)
    decoded = model.decoded(n, rng)
    return _outcome(draw.first, draw.second, draw.tail, end, decoded, record)


def run_block_slots(regime: ChannelRegime, model: Idealized, n: int, user_rng, source_rng,
                    start: ChannelState | None = None, record: bool = False,
                    payload_len: int = 1) -> BlockOutcome:
    """One block simulated slot by slot.

    ``user_rng`` drives the channels (a Generator or :class:`UserStreams`),
    ``source_rng`` draws source data, coding coefficients and LT decode
    outcomes.  Rank-based blocks are decoded for real and checked against the
    source packets.
    """
    regime.check_users(n)
    state = all_on(n) if start is None else np.array(start, dtype=bool)
    rank_based = isinstance(model, RankBased)
    if rank_based:
        k, d = model.k, model.d
        source = source_rng.integers(0, d, size=(k, payload_len), dtype=np.uint8)
        decoders = [RankDecoder(k, d, payload_len) for _ in range(n)]
        need = None
    else:
        need = model.required(n, source_rng)
    got = np.zeros(n, dtype=np.int64)
    t1 = np.zeros(n, dtype=np.int64)
    t2 = np.zeros(n, dtype=np.int64)
    done_at = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    t = 0
    while not done.all():
        t += 1
        state, bits = step(state, regime, user_rng)
        rx = bits.astype(bool) & ~done
        if rank_based:
            pkt = encode(source, source_rng, d)
        got += rx
        t1[rx & (got == 1)] = t
        t2[rx & (got == 2)] = t
        if rank_based:
            for i in np.flatnonzero(rx):
                decoders[i].ingest(pkt)
            finished = rx & np.array([dec.decoded for dec in decoders])
        else:
            finished = rx & (got >= need)
        done_at[finished] = t
        done |= finished
    if rank_based:
        for dec in decoders:
            if not np.array_equal(dec.decode(), source):
                raise RuntimeError("decoded block differs from the source block")
    decoded = model.decoded(n, source_rng)
    first = t1
    second = np.where(got >= 2, t2 - t1, 0)
    tail = np.where(got >= 2, done_at - t2, 0)
    return _outcome(first, second, tail, state, decoded, record)


# ---------------------------------------------------------------------------
# sessions


@dataclass(frozen=True)
class SessionConfig:
    regime: ChannelRegime
    model: Idealized
    n: int
    budget: int = 200  # blocks measured after warm-up
    warmup: int = 0  # blocks discarded first
    seed: int = 0
    block_start: str = "carry"  # "carry" or "all_on"
    initial_state: str = "on"  # channel state before block 1: "on" or "stationary"
    engine: str = "fast"
    record_gaps: bool = False

    def validate(self) -> None:
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.budget < 1 or self.warmup < 0:
            raise DomainError("budget must be >= 1 and warmup >= 0")
        if self.budget <= self.warmup:
            raise DomainError(f"block budget ({self.budget}) must exceed warm-up ({self.warmup})")
        if self.block_start not in ("carry", "all_on"):
            raise DomainError(f"block_start must be 'carry' or 'all_on', got {self.block_start!r}")
        if self.initial_state not in ("on", "stationary"):
            raise DomainError(f"initial_state must be 'on' or 'stationary', got {self.initial_state!r}")
        if self.engine not in ("fast", "slot"):
            raise DomainError(f"engine must be 'fast' or 'slot', got {self.engine!r}")
        self.regime.check_users(self.n)


@dataclass
class RenewalLedger:
    """Cycles between block ends at which every channel is ON."""

    cycle_blocks: list = field(default_factory=list)
    cycle_lengths: list = field(default_factory=list)
    _open: bool = False
    _m: int = 0
    _w: int = 0

    def start(self) -> None:
        self._open, self._m, self._w = True, 0, 0

    def add(self, delay: int, end_all_on: bool) -> None:
        if not self._open:
            if end_all_on:
                self.start()
            return
        self._m += 1
        self._w += delay
        if end_all_on:
            self.cycle_blocks.append(self._m)
            self.cycle_lengths.append(self._w)
            self._m, self._w = 0, 0

    @property
    def cycles(self) -> int:
        return len(self.cycle_blocks)

    @property
    def mean_blocks(self) -> float | None:
        return float(np.mean(self.cycle_blocks)) if self.cycles else None

    @property
    def mean_length(self) -> float | None:
        return float(np.mean(self.cycle_lengths)) if self.cycles else None


@dataclass
class SessionReport:
    n: int
    k: int
    throughput: float
    throughput_hw: float
    mean_delay: float
    var_delay: float
    delay_hw: float
    blocks: int
    slots: int
    delivered: float
    delays: np.ndarray
    reps: int = 1
    throughput_se: float = math.nan
    per_rep_throughput: np.ndarray | None = None
    cycles: int = 0
    total_cycle_blocks: int = 0
    total_cycle_length: int = 0
    eq4_throughput: float | None = None
    decode_fraction: float | None = None
    sandwich_violations: int = 0
    lt_delta: float | None = None
    outcomes: list | None = None

    @property
    def mean_cycle_blocks(self) -> float | None:
        return self.total_cycle_blocks / self.cycles if self.cycles else None

    @property
    def mean_cycle_length(self) -> float | None:
        return self.total_cycle_length / self.cycles if self.cycles else None

    @property
    def renewal_throughput(self) -> float | None:
        """k E[M] / E[W] from completed renewal cycles."""
        if not self.cycles:
            return None
        return self.k * self.total_cycle_blocks / self.total_cycle_length

    @property
    def lt_renewal_bounds(self) -> tuple[float, float] | None:
        """(k (1-delta) E[M]/E[W], k E[M]/E[W]) for LT sessions with a completed cycle."""
        if self.lt_delta is None or not self.cycles:
            return None
        upper = self.renewal_throughput
        return (1 - self.lt_delta) * upper, upper

    def as_dict(self) -> dict:
        d = {
            "n": self.n,
            "k": self.k,
            "reps": self.reps,
            "blocks": self.blocks,
            "slots": self.slots,
            "throughput": self.throughput,
            "throughput_hw": self.throughput_hw,
            "throughput_se": None if math.isnan(self.throughput_se) else self.throughput_se,
            "mean_delay": self.mean_delay,
            "var_delay": self.var_delay,
            "delay_hw": self.delay_hw,
            "cycles": self.cycles,
            "mean_cycle_blocks": self.mean_cycle_blocks,
            "mean_cycle_length": self.mean_cycle_length,
            "renewal_throughput": self.renewal_throughput,
            "eq4_throughput": self.eq4_throughput,
            "decode_fraction": self.decode_fraction,
            "sandwich_violations": self.sandwich_violations,
        }
        if self.lt_renewal_bounds is not None:
            d["lt_renewal_lower"], d["lt_renewal_upper"] = self.lt_renewal_bounds
        return d


def _initial_state(config: SessionConfig, rng) -> ChannelState:
    if config.initial_state == "on" or not isinstance(config.regime, Correlated):
        return all_on(config.n)
    return rng.random(config.n) < config.regime.params.pi_on


BATCH_CELLS = 1 << 18  # user-block cells sampled per batch on the memoryless fast path


def _memoryless_batches(config: SessionConfig, rng):
    """Delays, decode fractions and sandwich violations for i.i.d. blocks.

    Blocks over independent memoryless channels do not depend on the state
    left by earlier blocks, so warm-up is skipped and many blocks are drawn in
    one array of shape (blocks, users).
    """
    regime, model, n = config.regime, config.model, config.n
    delays, fracs = [], []
    violations = 0
    left = config.budget
    while left > 0:
        B = min(left, max(1, BATCH_CELLS // n))
        counts = model.required((B, n), rng)
        draw = regime.sample_block(None, counts, rng)
        total = draw.total
        U = total.max(axis=1)
        lo = draw.second.max(axis=1)
        hi = draw.first.max(axis=1) + (draw.second + draw.tail).max(axis=1)
        violations += int(np.count_nonzero((U < lo) | (U > hi)))
        dec = model.decoded((B, n), rng)
        fracs.append(np.ones(B) if dec is None else dec.mean(axis=1))
        delays.append(U)
        left -= B
    return np.concatenate(delays), np.concatenate(fracs), violations


def run_session(config: SessionConfig, replication: int = 0, keep_outcomes: bool = False) -> SessionReport:
    """Simulate ``warmup + budget`` blocks and estimate throughput and delay."""
    config.validate()
    regime, model, n = config.regime, config.model, config.n
    rng = stream(config.seed, replication)
    if (config.engine == "fast" and isinstance(regime, Invariant) and not keep_outcomes
            and not config.record_gaps):
        U, fr, violations = _memoryless_batches(config, rng)
        cycles = (np.ones(U.size, dtype=np.int64), U)
        return _report(config, U, model.k * fr, fr, violations, cycles, None)
    if config.engine == "slot":
        users = UserStreams(config.seed, replication, n)
        source = stream(config.seed, replication, 1)
    elif isinstance(regime, JointSampler):
        raise DomainError("a user-supplied joint channel sampler needs engine='slot'")

    state = _initial_state(config, rng)
    track_cycles = isinstance(regime, Correlated) and config.block_start == "carry"
    ledger = RenewalLedger()

    delays, rewards, decoded_frac = [], [], []
    violations = 0
    outcomes = [] if keep_outcomes else None
    for j in range(config.warmup + config.budget):
        if j == config.warmup and (not track_cycles or state.all()):
            ledger.start()
        if config.block_start == "all_on":
            state = all_on(n)
        if config.engine == "slot":
            out = run_block_slots(regime, model, n, users, source, state, config.record_gaps)
        else:
            out = run_block(regime, model, n, rng, state, config.record_gaps)
        if out.end_state is not None:
            state = out.end_state
        if j < config.warmup:
            continue
        violations += not out.sandwich_ok
        delays.append(out.delay)
        frac = 1.0 if out.decoded is None else float(out.decoded.mean())
        decoded_frac.append(frac)
        rewards.append(model.k * frac)
        end_on = state.all() if track_cycles else True
        ledger.add(out.delay, end_on)
        if outcomes is not None:
            outcomes.append(out)

    cycles = (ledger.cycle_blocks, ledger.cycle_lengths)
    return _report(config, np.asarray(delays, dtype=np.int64), np.asarray(rewards, dtype=float),
                   np.asarray(decoded_frac), violations, cycles, outcomes)


def _report(config, U, R, decoded_frac, violations, cycles, outcomes) -> SessionReport:
    model, regime, n = config.model, config.regime, config.n
    slots = int(U.sum())
    eta = R.sum() / slots
    N = U.size
    ubar = U.mean()
    resid = R - eta * U
    eta_hw = Z95 * math.sqrt(resid.var(ddof=1) / N) / ubar if N > 1 else math.nan
    var_u = float(U.var(ddof=1)) if N > 1 else 0.0
    is_lt = isinstance(model, LtThreshold)
    report = SessionReport(
        n=n,
        k=model.k,
        throughput=float(eta),
        throughput_hw=float(eta_hw),
        mean_delay=float(ubar),
        var_delay=var_u,
        delay_hw=Z95 * math.sqrt(var_u / N) if N > 1 else math.nan,
        blocks=N,
        slots=slots,
        delivered=float(R.sum()),
        delays=U,
        cycles=len(cycles[0]),
        total_cycle_blocks=int(np.sum(cycles[0])),
        total_cycle_length=int(np.sum(cycles[1])),
        decode_fraction=float(np.mean(decoded_frac)) if is_lt else None,
        sandwich_violations=violations,
        outcomes=outcomes,
    )
    if regime.memoryless and type(model) is Idealized:
        report.eq4_throughput = model.k / float(ubar)
    if is_lt:
        report.lt_delta = model.delta
    return report


def lt_session(config: SessionConfig, replication: int = 0) -> SessionReport:
    """Session under the LT reception-threshold model; reward counts only users that decode."""
    if not isinstance(config.model, LtThreshold):
        raise DomainError("lt_session needs an LtThreshold decode model")
    return run_session(config, replication)


def _run_one(args):
    config, r = args
    return run_session(config, r)


def replicate(config: SessionConfig, reps: int = 30, workers: int = 1) -> SessionReport:
    """Independent replications pooled into one report.

    Replication r uses the stream keyed ``(seed, r)``, so the result depends
    only on the config, never on ``workers`` or completion order.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    jobs = [(config, r) for r in range(reps)]
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    if reps == 1:
        return runs[0]
    return pool(runs)


def pool(runs: list[SessionReport]) -> SessionReport:
    reps = len(runs)
    etas = np.array([r.throughput for r in runs])
    se = float(etas.std(ddof=1) / math.sqrt(reps))
    delays = np.concatenate([r.delays for r in runs])
    var_u = float(delays.var(ddof=1))
    first = runs[0]
    cycles = sum(r.cycles for r in runs)
    out = SessionReport(
        n=first.n,
        k=first.k,
        throughput=float(etas.mean()),
        throughput_hw=Z95 * se,
        mean_delay=float(delays.mean()),
        var_delay=var_u,
        delay_hw=Z95 * math.sqrt(var_u / delays.size),
        blocks=int(delays.size),
        slots=sum(r.slots for r in runs),
        delivered=sum(r.delivered for r in runs),
        delays=delays,
        reps=reps,
        throughput_se=se,
        per_rep_throughput=etas,
        cycles=cycles,
        total_cycle_blocks=sum(r.total_cycle_blocks for r in runs),
        total_cycle_length=sum(r.total_cycle_length for r in runs),
        decode_fraction=None if first.decode_fraction is None else float(np.mean([r.decode_fraction for r in runs])),
        sandwich_violations=sum(r.sandwich_violations for r in runs),
    )
    if first.eq4_throughput is not None:
        out.eq4_throughput = out.k / out.mean_delay
    out.lt_delta = first.lt_delta
    return out
