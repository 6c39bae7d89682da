"""Fraction of users able to decode, r'(s), for k = 10 and k = 100 at p = 0.5.

    python3 scripts/example1_curves.py --out results/example1.csv
"""

import argparse
from pathlib import Path

from rlnc_broadcast.cli import main

HERE = Path(__file__).parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/example1.csv")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    raise SystemExit(main(["example1", "--config", str(HERE / "configs" / "example1.cfg"), "--out", args.out]))
