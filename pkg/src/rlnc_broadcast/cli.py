"""Command-line front end.

Subcommands
-----------
``simulate``  run replicated sessions for one (n, k) and print a JSON report.
``analyze``   tabulate closed-form values (exact delay, extreme-value moments,
              norming constants, throughput bounds) for every requested n.
``sweep``     simulate a schedule of (n, k(n)) points and write one CSV row each.
``example1``  fraction-decoded curves r'(s) for one or more block sizes.

Config files are flat ``key = value`` text; ``#`` starts a comment.  Keys:

=============  ==============================================================
regime         invariant | correlated | dependent | asymmetric
p              erasure probability (invariant, dependent); list allowed
alpha, beta    ON->OFF and OFF->ON probabilities (correlated); paired lists
p_list         per-user erasure probabilities (asymmetric), comma separated
n              user count, or a strictly increasing comma list
k              block size: an integer, ``n``, ``log:C`` (ceil(C ln n)),
               ``log2:C`` (ceil(C ln^2 n)) or ``table:N=K;N=K``; a list for example1
model          idealized | rank | lt
field          field order for rank decoding (power of two, default 256)
delta, lt_c    LT failure probability (``auto`` means 1/ln k) and overhead constant
seed           master seed (unsigned 64-bit)
budget         blocks measured per replication
warmup         blocks discarded before measuring
reps           independent replications
block_start    carry | all_on
initial_state  on | stationary
engine         fast | slot
analytics      yes | no  (simulate: attach closed-form values)
s_min, s_max, s_step   grid for example1
=============  ==============================================================

Exit codes: 0 success, 2 config error, 3 domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics as an
from .channel import Asymmetric, ChannelParams, Correlated, Invariant, PerfectlyDependent, derive_seed
from .coding import Idealized, LtThreshold, RankBased
from .errors import ConfigError, DomainError
from .gf import PRIMITIVE_POLY
from .sim import SessionConfig, replicate

SCHEMA_VERSION = 1
DEFAULT_BUDGET = 200
DEFAULT_REPS = 30

KEYS = {
    "regime", "p", "alpha", "beta", "p_list", "n", "k", "model", "field", "delta", "lt_c",
    "seed", "budget", "warmup", "reps", "block_start", "initial_state", "engine", "analytics",
    "s_min", "s_max", "s_step",
}


# ---------------------------------------------------------------------------
# config parsing


@dataclass
class RawConfig:
    """Key/value pairs with the line each came from."""

    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "RawConfig":
        cfg = cls()
        for no, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"expected 'key = value', got {body!r}", no)
            key, value = (s.strip() for s in body.split("=", 1))
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}", no)
            if key in cfg.values:
                raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.lines[key]})", no)
            if not value:
                raise ConfigError(f"empty value for {key!r}", no)
            cfg.values[key] = value
            cfg.lines[key] = no
        return cfg

    def has(self, key: str) -> bool:
        return key in self.values

    def line(self, key: str) -> int | None:
        return self.lines.get(key)

    def get(self, key: str, conv, default=None):
        if key not in self.values:
            return default
        try:
            return conv(self.values[key])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad value for {key!r}: {e}", self.lines[key]) from None

    def require(self, key: str, conv, needed_by: str):
        if key not in self.values:
            raise ConfigError(f"{needed_by} needs key {key!r}", self.line("regime") or 0)
        return self.get(key, conv)

    def list(self, key: str, conv, default=None):
        if key not in self.values:
            return default
        return [self.get(key, lambda _: conv(x.strip()))
                for x in self.values[key].split(",")]


def _choice(*options):
    def conv(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return conv


def _u64(s):
    v = int(s)
    if not (0 <= v < 2**64):
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _yesno(s):
    if s.lower() in ("yes", "true", "1", "on"):
        return True
    if s.lower() in ("no", "false", "0", "off"):
        return False
    raise ValueError(f"expected yes or no, got {s!r}")


@dataclass(frozen=True)
class KRule:
    """Block size as a function of n."""

    kind: str  # const | n | log | log2 | table
    c: float = 0.0
    table: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "KRule":
        t = text.strip()
        if t in ("n", "linear"):
            return cls("n")
        if t.startswith("log2:"):
            return cls("log2", float(t[5:]))
        if t.startswith("log:"):
            return cls("log", float(t[4:]))
        if t.startswith("table:"):
            pairs = []
            for item in t[6:].split(";"):
                a, b = item.split("=")
                pairs.append((int(a), int(b)))
            return cls("table", table=tuple(pairs))
        if t.startswith("const:"):
            t = t[6:]
        return cls("const", float(int(t)))

    def __call__(self, n: int) -> int:
        if self.kind == "const":
            k = int(self.c)
        elif self.kind == "n":
            k = n
        elif self.kind == "log":
            k = math.ceil(self.c * math.log(n) - 1e-9)
        elif self.kind == "log2":
            k = math.ceil(self.c * math.log(n) ** 2 - 1e-9)
        else:
            lookup = dict(self.table)
            if n not in lookup:
                raise DomainError(f"k table has no entry for n={n}")
            k = lookup[n]
        if k < 1:
            raise DomainError(f"k rule gives k={k} < 1 at n={n}")
        return k

    def describe(self) -> str:
        if self.kind == "const":
            return f"const:{int(self.c)}"
        if self.kind in ("log", "log2"):
            return f"{self.kind}:{self.c:g}"
        if self.kind == "table":
            return "table:" + ";".join(f"{a}={b}" for a, b in self.table)
        return "n"


@dataclass(frozen=True)
class Channel:
    """One channel setting: a regime name plus its parameters."""

    kind: str
    p: float | None = None
    alpha: float | None = None
    beta: float | None = None
    p_list: tuple = ()

    def regime(self):
        if self.kind == "invariant":
            return Invariant(self.p)
        if self.kind == "dependent":
            return PerfectlyDependent(self.p)
        if self.kind == "asymmetric":
            return Asymmetric(self.p_list)
        return Correlated(ChannelParams(self.alpha, self.beta))

    @property
    def ab(self) -> tuple[float, float]:
        """Transition pair for the analytic formulas (memoryless: (p, 1-p))."""
        if self.kind == "correlated":
            return self.alpha, self.beta
        p = max(self.p_list) if self.kind == "asymmetric" else self.p
        return p, 1.0 - p

    @property
    def memoryless(self) -> bool:
        return self.kind != "correlated" or math.isclose(self.alpha + self.beta, 1.0, abs_tol=1e-15)

    def describe(self) -> str:
        if self.kind == "correlated":
            return f"correlated(alpha={self.alpha:g},beta={self.beta:g})"
        if self.kind == "asymmetric":
            return "asymmetric(" + ",".join(f"{x:g}" for x in self.p_list) + ")"
        return f"{self.kind}(p={self.p:g})"


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "idealized"
    d: int = 256
    delta: float | None = None  # None with kind 'lt' means 1/ln k
    c: float = 0.1

    def build(self, k: int):
        if self.kind == "idealized":
            return Idealized(k)
        if self.kind == "rank":
            return RankBased(k, self.d)
        delta = self.delta
        if delta is None:
            if k < 3:
                raise DomainError("delta = 1/ln k needs k >= 3")
            delta = 1.0 / math.log(k)
        return LtThreshold(k, delta, self.c)


@dataclass(frozen=True)
class SweepSpec:
    """Schedule of (n, k(n)) points with channel, decode model and run settings."""

    n_values: tuple
    k_rule: KRule
    channels: tuple
    model: ModelSpec = ModelSpec()
    seed: int = 0
    reps: int = DEFAULT_REPS
    budget: int = DEFAULT_BUDGET
    warmup: int = 0
    block_start: str = "carry"
    initial_state: str = "on"
    engine: str = "fast"

    def __post_init__(self):
        ns = list(self.n_values)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("n values must be strictly increasing")
        if ns[0] < 1:
            raise DomainError("n values must be >= 1")
        for n in ns:
            self.k_rule(n)

    def points(self):
        """(row index, channel, n, k) in output order."""
        i = 0
        for ch in self.channels:
            for n in self.n_values:
                yield i, ch, n, self.k_rule(n)
                i += 1

    def session(self, ch: Channel, n: int, k: int, seed: int) -> SessionConfig:
        return SessionConfig(
            regime=ch.regime(),
            model=self.model.build(k),
            n=n,
            budget=self.budget,
            warmup=self.warmup,
            seed=seed,
            block_start=self.block_start,
            initial_state=self.initial_state,
            engine=self.engine,
        )


def _channels(raw: RawConfig) -> tuple:
    kind = raw.get("regime", _choice("invariant", "correlated", "dependent", "asymmetric"), "invariant")
    if kind in ("invariant", "dependent"):
        ps = raw.list("p", float)
        if ps is None:
            raise ConfigError(f"regime {kind} needs key 'p'", raw.line("regime") or 0)
        return tuple(Channel(kind, p=p) for p in ps)
    if kind == "asymmetric":
        ps = raw.list("p_list", float)
        if ps is None:
            raise ConfigError("regime asymmetric needs key 'p_list'", raw.line("regime") or 0)
        return (Channel(kind, p_list=tuple(ps)),)
    alphas = raw.list("alpha", float)
    betas = raw.list("beta", float)
    if alphas is None or betas is None:
        raise ConfigError("regime correlated needs keys 'alpha' and 'beta'", raw.line("regime") or 0)
    if len(alphas) != len(betas):
        raise ConfigError("alpha and beta lists must have the same length", raw.line("beta"))
    return tuple(Channel(kind, alpha=a, beta=b) for a, b in zip(alphas, betas))


def _model(raw: RawConfig) -> ModelSpec:
    kind = raw.get("model", _choice("idealized", "rank", "lt"), "idealized")
    delta = raw.get("delta", lambda s: None if s == "auto" else float(s), None)
    return ModelSpec(kind, raw.get("field", int, 256), delta, raw.get("lt_c", float, 0.1))


def sweep_spec(raw: RawConfig, args) -> SweepSpec:
    n_values = raw.list("n", int)
    if n_values is None:
        raise ConfigError("missing key 'n'", 0)
    k_rule = raw.get("k", KRule.parse, KRule("n"))
    return SweepSpec(
        n_values=tuple(n_values),
        k_rule=k_rule,
        channels=_channels(raw),
        model=_model(raw),
        seed=_override(args.seed, raw.get("seed", _u64, 0)),
        reps=_override(args.reps, raw.get("reps", int, DEFAULT_REPS)),
        budget=_override(args.budget, raw.get("budget", int, DEFAULT_BUDGET)),
        warmup=raw.get("warmup", int, 0),
        block_start=raw.get("block_start", _choice("carry", "all_on"), "carry"),
        initial_state=raw.get("initial_state", _choice("on", "stationary"), "on"),
        engine=raw.get("engine", _choice("fast", "slot"), "fast"),
    )


def _override(flag, value):
    return value if flag is None else flag


# ---------------------------------------------------------------------------
# analytic cells


def _cell(cells: dict, notes: list, name: str, fn):
    """Evaluate one analytic cell; a domain violation leaves it empty with a note."""
    try:
        cells[name] = fn()
    except DomainError as e:
        cells[name] = None
        notes.append(f"{name}: {e}")


def analytic_cells(ch: Channel, n: int, k: int) -> tuple[dict, list]:
    cells: dict = {}
    notes: list = []
    a, b = ch.ab
    if ch.kind == "correlated":
        ChannelParams(a, b).require_aperiodic()

    def exact():
        if ch.kind == "dependent":
            return k / (1 - ch.p)
        if ch.kind == "asymmetric":
            raise DomainError("exact mean delay is tabulated for identical channels only")
        if not ch.memoryless:
            raise DomainError("exact mean delay needs memoryless channels (alpha + beta = 1)")
        return an.exact_mean_delay_invariant(n, k, a)

    _cell(cells, notes, "exact.mean_delay", exact)
    evt = {}
    _cell(evt, notes, "approx.evt", lambda: an.evt_moments(n, k, a, b))
    m = evt["approx.evt"]
    cells["approx.evt_mean"] = None if m is None else m.mean
    cells["approx.evt_var"] = None if m is None else m.variance
    norm = {}
    _cell(norm, notes, "approx.gumbel", lambda: an.gumbel_norming(n, "scaled"))
    g = norm["approx.gumbel"]
    cells["approx.gumbel_a_n"] = None if g is None else g[0]
    cells["approx.gumbel_b_n"] = None if g is None else g[1]
    _cell(cells, notes, "bound.throughput_upper", lambda: an.throughput_upper_bound(n, k, a, b))

    def lower():
        if n < 2 or k < 2:
            raise DomainError("lower bound needs n >= 2 and k >= 2")
        return an.throughput_lower_bound(n, (k - 1) / math.log(n), a, b).value

    _cell(cells, notes, "bound.throughput_lower", lower)
    return cells, notes


# ---------------------------------------------------------------------------
# output helpers


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.10g}"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    return x


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def dump_csv(header: dict, columns: list, rows: list) -> str:
    buf = io.StringIO()
    for key, value in header.items():
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row.get(c) if isinstance(row.get(c), str) else _num(row.get(c)) for c in columns])
    return buf.getvalue()


def _header(seed=None, budget=None, reps=None) -> dict:
    h = {"schema_version": SCHEMA_VERSION}
    if seed is not None:
        h.update(seed=seed, budget=budget, reps=reps)
    h["field_poly"] = hex(PRIMITIVE_POLY[8])
    return h


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(raw: RawConfig, args) -> str:
    spec = sweep_spec(raw, args)
    if len(spec.n_values) != 1 or len(spec.channels) != 1:
        raise ConfigError("simulate takes a single n and a single channel", raw.line("n") or 0)
    ch, n = spec.channels[0], spec.n_values[0]
    k = spec.k_rule(n)
    want = raw.get("analytics", _yesno, False)
    if want and ch.kind == "correlated":
        ChannelParams(ch.alpha, ch.beta).require_aperiodic()
    report = replicate(spec.session(ch, n, k, spec.seed), spec.reps, args.workers)
    out = {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "regime": ch.describe(),
            "n": n,
            "k": k,
            "model": spec.model.kind,
            "seed": spec.seed,
            "budget": spec.budget,
            "warmup": spec.warmup,
            "reps": spec.reps,
            "block_start": spec.block_start,
            "engine": spec.engine,
        },
        "simulated": report.as_dict(),
    }
    if want:
        cells, notes = analytic_cells(ch, n, k)
        out["analytic"] = cells
        out["notes"] = notes
    if args.format == "csv":
        row = {f"sim.{k_}": v for k_, v in out["simulated"].items()}
        row.update(out.get("analytic", {}))
        return dump_csv(_header(spec.seed, spec.budget, spec.reps), sorted(row), [row])
    return dump_json(out)


ANALYZE_COLUMNS = [
    "n", "k", "regime", "exact.mean_delay", "approx.evt_mean", "approx.evt_var",
    "approx.gumbel_a_n", "approx.gumbel_b_n", "bound.throughput_upper", "bound.throughput_lower", "notes",
]


def cmd_analyze(raw: RawConfig, args) -> str:
    n_values = raw.list("n", int)
    if n_values is None:
        raise ConfigError("missing key 'n'", 0)
    k_rule = raw.get("k", KRule.parse, KRule("n"))
    rows = []
    for ch in _channels(raw):
        for n in n_values:
            if n < 1:
                raise DomainError("n must be >= 1")
            k = k_rule(n)
            cells, notes = analytic_cells(ch, n, k)
            row = {"n": n, "k": k, "regime": ch.describe(), **cells, "notes": "; ".join(notes)}
            rows.append(row)
    if args.format == "json":
        return dump_json({"schema_version": SCHEMA_VERSION, "rows": rows})
    return dump_csv(_header(), ANALYZE_COLUMNS, rows)


SWEEP_COLUMNS = [
    "n", "k", "seed", "regime", "model",
    "sim.throughput", "sim.throughput_hw", "sim.throughput_se",
    "sim.mean_delay", "sim.var_delay", "sim.delay_hw",
    "sim.cycles", "sim.mean_cycle_blocks", "sim.mean_cycle_length", "sim.renewal_throughput",
    "sim.decode_fraction", "sim.sandwich_violations",
    "exact.mean_delay", "approx.evt_mean", "bound.throughput_upper", "bound.throughput_lower",
    "flag",
]


def _sweep_row(job) -> dict:
    spec, i, ch, n, k = job
    seed = derive_seed(spec.seed, i)
    rep = replicate(spec.session(ch, n, k, seed), spec.reps, 1).as_dict()
    row = {"n": n, "k": k, "seed": str(seed), "regime": ch.describe(), "model": spec.model.kind}
    row.update({f"sim.{key}": rep.get(key) for key in (
        "throughput", "throughput_hw", "throughput_se", "mean_delay", "var_delay", "delay_hw",
        "cycles", "mean_cycle_blocks", "mean_cycle_length", "renewal_throughput",
        "decode_fraction", "sandwich_violations")})
    try:
        cells, _ = analytic_cells(ch, n, k)
    except DomainError:
        cells = {}
    for c in ("exact.mean_delay", "approx.evt_mean", "bound.throughput_upper", "bound.throughput_lower"):
        row[c] = cells.get(c)
    row["flag"] = "no_renewal_cycle" if rep["cycles"] == 0 else ""
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[dict]:
    """Rows in schedule order, whatever the worker count."""
    jobs = [(spec, i, ch, n, k) for i, ch, n, k in spec.points()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def cmd_sweep(raw: RawConfig, args) -> str:
    spec = sweep_spec(raw, args)
    rows = run_sweep(spec, args.workers)
    header = _header(spec.seed, spec.budget, spec.reps)
    header["k_rule"] = spec.k_rule.describe()
    header["warmup"] = spec.warmup
    if args.format == "json":
        return dump_json({**header, "rows": rows})
    return dump_csv(header, SWEEP_COLUMNS, rows)


def example1_table(ks: list[int], p: float, s_grid: np.ndarray) -> tuple[list, list]:
    columns = ["s"] + [f"exact.r_prime_k{k}" for k in ks]
    rows = []
    curves = [an.fraction_decoded_normalized(s_grid, k, p) for k in ks]
    for j, s in enumerate(s_grid):
        row = {"s": float(s)}
        for k, curve in zip(ks, curves):
            row[f"exact.r_prime_k{k}"] = float(curve[j])
        rows.append(row)
    return columns, rows


def cmd_example1(raw: RawConfig, args) -> str:
    ks = raw.list("k", int, [10, 100])
    p = raw.get("p", float, 0.5)
    if not (0.0 <= p < 1.0):
        raise DomainError(f"p must lie in [0, 1), got {p}")
    if any(k < 1 for k in ks):
        raise DomainError("every k must be >= 1")
    s_min = raw.get("s_min", float, 0.0)
    s_max = raw.get("s_max", float, 2.0)
    s_step = raw.get("s_step", float, 0.01)
    if s_step <= 0 or s_max < s_min:
        raise DomainError("need s_step > 0 and s_max >= s_min")
    grid = s_min + s_step * np.arange(int(math.floor((s_max - s_min) / s_step + 1e-9)) + 1)
    columns, rows = example1_table(ks, p, grid)
    if args.format == "json":
        return dump_json({"schema_version": SCHEMA_VERSION, "p": p, "rows": rows})
    header = _header()
    header["p"] = p
    return dump_csv(header, columns, rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "example1": cmd_example1,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rlnc-broadcast", description="RLNC broadcast throughput and delay.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="flat key = value config file")
    ap.add_argument("--seed", type=_u64, help="master seed (overrides config)")
    ap.add_argument("--reps", type=int, help="replications (overrides config)")
    ap.add_argument("--budget", type=int, help="blocks per replication (overrides config)")
    ap.add_argument("--workers", type=int, default=1, help="worker processes")
    ap.add_argument("--out", metavar="PATH", help="write here instead of stdout")
    ap.add_argument("--format", choices=("csv", "json"), help="output format")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = "json" if args.command == "simulate" else "csv"
    try:
        text = ""
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}", 0) from None
        raw = RawConfig.parse(text)
        if args.reps is not None and args.reps < 1:
            raise DomainError("--reps must be >= 1")
        if args.workers < 1:
            raise DomainError("--workers must be >= 1")
        result = COMMANDS[args.command](raw, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DomainError as e:
        print(f"domain error: {e}", file=sys.stderr)
        return 3
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(result)
    else:
        sys.stdout.write(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
