"""kd-tree vs quad-tree divisions on lane-shaped traffic.

python demos/02_divisions.py
"""
import numpy as np

from aiswh import grid, partition, synthetic, trajectory
from aiswh.grid import Domain

domain = Domain(-150_000.0, -150_000.0, 150_000.0, 150_000.0)
cfg = synthetic.FleetConfig(seed=0, n_points=100_000, n_ships=200, n_days=7, interval=60)
trajs = [trajectory.simplify(t, 10.0) for t in trajectory.build_trajectories(synthetic.skewed_fleet(domain, cfg))]
counts = partition.CountGrid.from_events(grid.rollup_all(trajs, 5000, domain), domain)

# %% how skewed is it
flat = np.sort(counts.counts.ravel())[::-1]
print(f"{flat[: len(flat) // 10].sum() / flat.sum():.0%} of cell events in the busiest 10% of cells")

# %% same budget, two methods
for budget in (16, 64, 400):
    kd = partition.build_kdtree(counts, budget)
    quad = partition.build_quadtree(counts, budget)
    bk, bq = partition.balance(kd, counts), partition.balance(quad, counts)
    print(f"budget {budget:>3}: kd {len(kd):>3} divisions CV {bk.cv:6.1f}%   "
          f"quad {len(quad):>3} divisions CV {bq.cv:6.1f}%")

# %% divisions are static. later traffic drifts from the one they were built on
days = np.unique(grid.rollup_all(trajs, 5000, domain)["date_id"])
ev = grid.rollup_all(trajs, 5000, domain)
early = partition.CountGrid.from_events(ev[ev["date_id"] <= days[2]], domain)
late = partition.CountGrid.from_events(ev[ev["date_id"] > days[2]], domain)
divs = partition.build_kdtree(early, 64)
print(f"built on days 1-3: CV {partition.balance(divs, early).cv:.1f}%, "
      f"applied to days 4-7: CV {partition.balance(divs, late).cv:.1f}%")
