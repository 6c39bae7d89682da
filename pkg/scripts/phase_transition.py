"""Throughput versus n under the block-size rules k = 150, 50 ln n, 10 ln^2 n and n.

Writes one CSV per (channel, rule) into the output directory.

    python3 scripts/phase_transition.py --out results/ [--reps 30] [--budget 200] [--workers 1]
"""

import argparse
from pathlib import Path

from rlnc_broadcast.cli import main

HERE = Path(__file__).parent
RULES = {"k150": "150", "k50ln": "log:50", "k10ln2": "log2:10", "kn": "n"}


def run(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for channel in ("invariant", "correlated"):
        base = (HERE / "configs" / f"phase_{channel}.cfg").read_text()
        for tag, rule in RULES.items():
            cfg = out / f"phase_{channel}_{tag}.cfg"
            cfg.write_text(base + f"k = {rule}\n")
            argv = ["sweep", "--config", str(cfg), "--out", str(out / f"phase_{channel}_{tag}.csv"),
                    "--workers", str(args.workers)]
            if args.reps:
                argv += ["--reps", str(args.reps)]
            if args.budget:
                argv += ["--budget", str(args.budget)]
            code = main(argv)
            if code:
                return code
            print(f"wrote {out / f'phase_{channel}_{tag}.csv'}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--budget", type=int)
    ap.add_argument("--workers", type=int, default=1)
    raise SystemExit(run(ap.parse_args()))
