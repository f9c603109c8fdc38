"""Single-tetrahedron suite: one-shot inverse vs the iterative geometric baseline.

    python scripts/tet_benchmark.py [--draws 50] [--seed 42] [--output DIR]
"""

import argparse
import json
from pathlib import Path

from invfem.benchmarks import TetSuite


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=50)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--output", default="results")
    args = parser.parse_args()
    result = TetSuite(draws=args.draws, seed=args.seed).run()
    print(f"{'':24s}{'part1':>14s}{'part2':>14s}")
    summary = result["summary"]
    rows = [
        ("one-shot avg error", lambda c: c["pb"]["average"]),
        ("IGA(1) avg error", lambda c: c["iga1"]["average"]),
        ("IGA(1) avg iterations", lambda c: c["iga1"]["avg_iterations"]),
        ("IGA(1) time ratio", lambda c: c["iga1"]["avg_time_ratio"]),
        ("IGA(2) avg iterations", lambda c: c["iga2"]["avg_iterations"]),
        ("IGA(2) time ratio", lambda c: c["iga2"]["avg_time_ratio"]),
        ("one-shot faster", lambda c: c["one_shot_faster_time_fraction"]),
    ]
    for label, get in rows:
        print(f"{label:24s}" + "".join(f"{get(summary[p]):14.4g}" for p in ("part1", "part2")))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tet_benchmark.json").write_text(json.dumps(result, indent=2, default=float))


if __name__ == "__main__":
    main()
