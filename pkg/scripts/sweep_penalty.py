#!/usr/bin/env python3
"""Sweep the comfort penalty factor and plot the hourly heat-cut profiles.

Usage: python scripts/sweep_penalty.py [scenario.json] [outdir]
Defaults to the district-scale bundled case, penalties 0.6/0.8/1.0.
"""
import sys
from pathlib import Path

from iesgame.scenario_cli import RunManifest, sweep

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "iesgame" / "scenarios"


def main() -> int:
    scenario = sys.argv[1] if len(sys.argv) > 1 else str(
        SCENARIOS / "case1_like.json")
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "runs/sweep_theta")
    values = [0.6, 0.8, 1.0]
    manifest = RunManifest(scenario=scenario, mode=3, out_dir=str(out),
                           mc_samples=50_000)
    table = sweep(manifest, "theta", values)
    for row in table:
        print(f"theta={row['value']}: status={row['status']} "
              f"total_cut={row.get('total_heat_cut', 'n/a')}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the plot")
        return 0
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for row in table:
        if row["exit_code"] != 0:
            continue
        hours = [t for t in range(24) if f"h_cl_{t}" in row]
        ax.plot(hours, [row[f"h_cl_{t}"] for t in hours], marker="o",
                label=f"penalty {row['value']}")
    ax.set_xlabel("hour")
    ax.set_ylabel("heat cut [MW]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "heat_cut_sweep.png", dpi=150)
    print(f"wrote {out / 'heat_cut_sweep.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
