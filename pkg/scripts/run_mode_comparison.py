#!/usr/bin/env python3
"""Run the four operating modes on a bundled scenario and plot the
profit/absorption comparison.

Usage: python scripts/run_mode_comparison.py [case2_real|case1_like] [outdir]
"""
import sys
from pathlib import Path

from iesgame.scenario_cli import RunManifest, compare_modes

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "iesgame" / "scenarios"


def main() -> int:
    name = sys.argv[1] if len(sys.argv) > 1 else "case2_real"
    out = Path(sys.argv[2] if len(sys.argv) > 2 else f"runs/compare_{name}")
    manifest = RunManifest(scenario=str(SCENARIOS / f"{name}.json"), mode=1,
                           out_dir=str(out), mc_samples=50_000)
    table = compare_modes(manifest, [1, 2, 3, 4])
    width = max(len(str(k)) for k in table[0])
    for row in table:
        print("  ".join(f"{k}={row[k]!s:>{width}}" for k in row))

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return 0
    ok = [r for r in table if r["f1"] != "FAILED"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar([f"mode {r['mode']}" for r in ok], [r["f1"] for r in ok])
    ax1.set_ylabel("operator profit [$]")
    ax2.bar([f"mode {r['mode']}" for r in ok],
            [r["absorbed_renewables"] for r in ok], color="seagreen")
    ax2.axhline(ok[0]["expected_renewables"], ls="--", c="gray",
                label="expected output")
    ax2.set_ylabel("absorbed renewables [MWh]")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out / "comparison.png", dpi=150)
    print(f"wrote {out / 'comparison.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
