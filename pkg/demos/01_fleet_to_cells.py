"""Synthetic fleet -> cleaned records -> trajectories -> cell events.

Run from the repo root: python demos/01_fleet_to_cells.py
"""
import io
import tempfile
from pathlib import Path

import numpy as np

from aiswh import grid, ingest, synthetic, trajectory
from aiswh.grid import Domain

# %% a small fleet on a 60 km square, written out as a DMA-style csv
domain = Domain(-30_000.0, -30_000.0, 30_000.0, 30_000.0)
proj = ingest.Projection(56.0, 11.0)
fleet = synthetic.skewed_fleet(domain, synthetic.FleetConfig(seed=1, n_points=5_000, n_ships=20))
tmp = Path(tempfile.mkdtemp())
n = synthetic.write_dma_csv(tmp / "fleet.csv", fleet, proj)
print(n, "rows written")

# %% parse + clean. append a couple of broken lines to see rejections
text = (tmp / "fleet.csv").read_text()
text += "01/03/2021 00:00:00,Class A,123,91.0,11.0\n"
text += "not a timestamp,Class A,219000001,56.0,11.0\n"
records, rejected = ingest.load(io.StringIO(text), None, proj, ingest.CleaningRules())
print(len(records), "accepted,", len(rejected), "rejected")
for r in rejected:
    print("  line", r.line, r.rule.value)

# %% trajectories, then simplification at 10 m SED
trajs = trajectory.build_trajectories(records)
small = [trajectory.simplify(t, 10.0) for t in trajs]
before = sum(len(t) for t in trajs)
after = sum(len(t) for t in small)
print(len(trajs), "trajectories,", sum(t.infer_stopped for t in trajs), "stopped")
print(f"points {before} -> {after} ({before / after:.1f}x fewer)")

# %% cell events at every granularity; time is conserved across them
for g in grid.GRANULARITIES:
    ev = grid.rollup_all(small, g, domain)
    print(f"{g:>5} m  {len(ev):>7} events  {ev['duration'].sum():>12.1f} s")
print("total trajectory time", sum(t.duration for t in small))

# %% busiest 5 km cells
counts = grid.count_grid_counts(grid.rollup_all(small, 5000, domain), domain)
top = np.argsort(counts.ravel())[::-1][:5]
print("busiest 5 km cells (col, row, events):")
for i in top:
    r, c = divmod(int(i), counts.shape[1])
    print(" ", c, r, int(counts[r, c]))
