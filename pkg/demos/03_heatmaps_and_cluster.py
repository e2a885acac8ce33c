"""Heatmap tiles, a two-phase query, and the simulated cluster.

python demos/03_heatmaps_and_cluster.py   (writes PNGs to a temp dir)
"""
import tempfile
from pathlib import Path

import numpy as np

from aiswh import cluster, grid, heatmap, partition, synthetic, trajectory
from aiswh.grid import Domain

domain = Domain(-50_000.0, -50_000.0, 50_000.0, 50_000.0)
fleet = synthetic.skewed_fleet(domain, synthetic.FleetConfig(seed=4, n_points=30_000, n_ships=60, interval=30))
trajs = [trajectory.simplify(t, 10.0) for t in trajectory.build_trajectories(fleet)]
events = {g: grid.rollup_all(trajs, g, domain) for g in grid.GRANULARITIES}
divs = partition.build_kdtree(partition.CountGrid.from_events(events[5000], domain), 64)
store = heatmap.rollup_heatmaps(events, heatmap.BUILTIN_TYPES, grid.GRANULARITIES, divs, domain)
print(len(store), "tiles")

# %% one query per type at 200 m over the whole period
days = np.unique(events[5000]["date_id"])
span = (int(days[0]), int(days[-1]))
out = Path(tempfile.mkdtemp())
for t in heatmap.BUILTIN_TYPES:
    r = heatmap.query_heatmap(store, domain.rect, span, t.id, 200, divs)
    png, _ = heatmap.render(r, out / f"{t.name}.png", scale="log" if t.name in ("count", "time") else "linear")
    print(f"{t.name:>14}: {np.count_nonzero(~r.nodata):>6} pixels with data -> {png}")

# %% every cell event lands in exactly one pixel
r = heatmap.query_heatmap(store, domain.rect, span, 1, 1000, divs)
print("count at 1 km, pixel sum", np.nansum(r.values), "=", len(events[1000]), "events")

# %% simulated cluster: 1 vs 5 workers over small and large areas
maps = {n: cluster.assign_shards(divs, n) for n in (1, 5)}
busiest = divs[max(divs.ids, key=lambda d: divs[d].count)].rect
cx, cy = (busiest[0] + busiest[2]) / 2, (busiest[1] + busiest[3]) / 2
areas = {"harbour": (cx - 5000, cy - 5000, cx + 5000, cy + 5000), "full": domain.rect}
for name, area in areas.items():
    q = cluster.QuerySpec(area, span, 1, 50, name)
    r1, r5 = (cluster.simulate_query(q, maps[n], store, divs) for n in (1, 5))
    print(f"{name:>8}: {r5.engaged_shards:>3} shards, WIF {r5.average_wif:5.1f}%, "
          f"scale-up {cluster.scale_up(r1, r5):5.1f}%")
