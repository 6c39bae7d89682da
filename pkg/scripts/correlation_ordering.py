"""Throughput at fixed capacity 0.5 and k = n for alpha = beta in {0.3, 0.5, 0.7}.

    python3 scripts/correlation_ordering.py --out results/ordering.csv
"""

import argparse
from pathlib import Path

from rlnc_broadcast.cli import main

HERE = Path(__file__).parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/ordering.csv")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    raise SystemExit(main(["sweep", "--config", str(HERE / "configs" / "correlation_ordering.cfg"),
                           "--out", args.out, "--workers", str(args.workers)]))
