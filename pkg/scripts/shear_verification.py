"""Run the shear verification study and write its JSON report.

    python scripts/shear_verification.py [--output DIR]
"""

import argparse
import json
from pathlib import Path

from invfem.benchmarks import ShearStudy


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output", default="results")
    args = parser.parse_args()
    result = ShearStudy().run()
    print(f"simple shear max relative error: {result['simple_max_error']:.3e}")
    for r in result["generalized"]:
        print(f"generalized n={r['divisions']}: energy {r['energy_error']:.3e}  stress {r['stress_error']:.3e}")
    for name, rows in result["inverse"].items():
        print(f"inverse {name}: " + ", ".join(f"{r['recovery_error']:.3e}" for r in rows))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "shear_verification.json").write_text(json.dumps(result, indent=2, default=float))


if __name__ == "__main__":
    main()
