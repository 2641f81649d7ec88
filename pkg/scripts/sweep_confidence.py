#!/usr/bin/env python3
"""Sweep the reserve confidence level and plot total committed reserve.

Usage: python scripts/sweep_confidence.py [scenario.json] [outdir]
"""
import sys
from pathlib import Path

from iesgame.scenario_cli import RunManifest, sweep

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "iesgame" / "scenarios"


def main() -> int:
    scenario = sys.argv[1] if len(sys.argv) > 1 else str(
        SCENARIOS / "case2_real.json")
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "runs/sweep_confidence")
    values = [0.85, 0.90, 0.95]
    manifest = RunManifest(scenario=scenario, mode=3, out_dir=str(out),
                           mc_samples=50_000)
    table = sweep(manifest, "confidence", values)
    for row in table:
        print(f"confidence={row['value']}: status={row['status']} "
              f"total_reserve={row.get('total_reserve', 'n/a')}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return 0
    ok = [r for r in table if r["exit_code"] == 0]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r["value"] for r in ok], [r["total_reserve"] for r in ok],
            marker="s")
    ax.set_xlabel("confidence level")
    ax.set_ylabel("total spinning reserve [MWh]")
    fig.tight_layout()
    fig.savefig(out / "reserve_sweep.png", dpi=150)
    print(f"wrote {out / 'reserve_sweep.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
