"""Time single fits on fully observed synthetic data of growing size.

    python3 scripts/scale_check.py
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from sparfa_lite.data_io import synthesize
from sparfa_lite.quantized_model import QuantizerSpec
from sparfa_lite.solver import SolverConfig, fit

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="50x30,203x92,400x200,800x400")
    p.add_argument("--observed", type=float, default=0.995)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=str(ROOT / "results" / "scale_check.json"))
    args = p.parse_args()

    q = QuantizerSpec.binary()
    rows = []
    for size in args.sizes.split(","):
        Q, N = map(int, size.split("x"))
        truth = synthesize(Q, N, 5, q, observed_fraction=args.observed, scale=2.0, seed=args.seed)
        lam = float(np.sqrt(Q * N))
        start = time.perf_counter()
        res = fit(truth.responses, q, SolverConfig(lam=lam))
        secs = time.perf_counter() - start
        rows.append({"questions": Q, "learners": N, "observations": len(truth.responses),
                     "lambda": lam, "iterations": res.iterations_used, "seconds": secs,
                     "effective_rank": res.effective_rank})
        print(f"{Q:>5} x {N:<5} {res.iterations_used:>5} iterations {secs:8.2f}s "
              f"rank {res.effective_rank}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
