"""Beam under gravity: forward mesh convergence and the synthetic inverse round trip.

    python scripts/beam_convergence.py [--skip-round-trip] [--output DIR]
"""

import argparse
import json
from pathlib import Path

from invfem.benchmarks import BEAM_LENGTH, BEAM_REFERENCE_TIP, BeamStudy, beam_round_trip


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--skip-round-trip", action="store_true")
    parser.add_argument("--output", default="results")
    args = parser.parse_args()
    result = {"convergence": BeamStudy().run()}
    for r in result["convergence"]["levels"]:
        print(
            f"({r['axial_divisions']}, {r['radial_layers']}) {r['dofs']:6d} dofs: tip {1e3 * r['tip_magnitude']:.2f} mm "
            f"(vertical {1e3 * r['tip_vertical']:.2f} mm), {r['wall_time']:.0f} s"
        )
    print(f"reference {1e3 * BEAM_REFERENCE_TIP:.2f} mm")
    if not args.skip_round_trip:
        rt = beam_round_trip()
        result["round_trip"] = rt
        print(f"round trip: nodal l2 error {1e3 * rt['recovery_error_l2']:.3e} mm ({rt['recovery_error_l2'] / BEAM_LENGTH:.2e} of length)")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "beam_convergence.json").write_text(json.dumps(result, indent=2, default=float))


if __name__ == "__main__":
    main()
