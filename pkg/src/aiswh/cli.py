"""``aiswh`` command line: one subcommand per pipeline stage.

Every stage reads the previous stage's files from the output directory and
writes its own; re-running a stage on the same inputs rewrites identical
bytes. ``run`` chains ingest through bench and renders an overview map.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import cluster, grid, heatmap, ingest, partition, synthetic, trajectory
from .config import PipelineConfig
from .errors import AiswhError, ConfigError, DomainError

RECORDS = "records.npz"
TRAJECTORIES = "trajectories.jsonl"
DIVISIONS = "divisions.csv"
TILES = "tiles.npz"
BENCH = "bench.csv"


class MissingArtifact(AiswhError):
    def __init__(self, path, command):
        super().__init__(f"{path} not found; run `aiswh {command}` first")


def _cells_name(g: int) -> str:
    return f"cells_{g}.npz"


def _need(path: Path, command: str) -> Path:
    if not path.exists():
        raise MissingArtifact(path, command)
    return path


def _say(*parts):
    print(*parts, flush=True)


# -- stages ------------------------------------------------------------------

def cmd_generate(cfg: PipelineConfig, args) -> int:
    fc = cfg.fleet_config(seed=args.seed)
    if args.points:
        fc = synthetic.FleetConfig(**{**fc.__dict__, "n_points": args.points})
    fleet = synthetic.skewed_fleet(cfg.domain_obj(), fc)
    out = Path(args.out) if args.out else cfg.inputs[0]
    out.parent.mkdir(parents=True, exist_ok=True)
    n = synthetic.write_dma_csv(out, fleet, cfg.projection_obj())
    _say(f"wrote {n} rows to {out}")
    return 0


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    schema, proj, rules = cfg.schema_obj(), cfg.projection_obj(), cfg.cleaning_rules()
    accepted = []
    for k, src in enumerate(cfg.inputs, start=1):
        if not src.exists():
            raise MissingArtifact(src, "generate")
        acc, rej = ingest.load(src, schema, proj, rules)
        accepted.extend(acc)
        name = "rejections.csv" if len(cfg.inputs) == 1 else f"rejections-{k}.csv"
        ingest.write_rejections(out / name, rej)
        by_rule = {}
        for r in rej:
            by_rule[r.rule.value] = by_rule.get(r.rule.value, 0) + 1
        _say(f"{src}: {len(acc)} accepted, {len(rej)} rejected {json.dumps(by_rule, sort_keys=True)}")
    ingest.write_records(out / RECORDS, accepted)
    return 0


def cmd_trajectories(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    cols = ingest.read_columns(_need(out / RECORDS, "ingest"))
    params = cfg.trajectory_params()
    trajs = trajectory.build_trajectories(cols, params)
    raw_points = sum(len(t.t) for t in trajs)
    if cfg.simplify:
        trajs = [trajectory.simplify(t, params.simplify_epsilon) for t in trajs]
    n = trajectory.write_trajectories(out / TRAJECTORIES, trajs)
    kept = sum(len(t.t) for t in trajs)
    stopped = sum(t.infer_stopped for t in trajs)
    _say(f"{n} trajectories ({stopped} stopped), {raw_points} points -> {kept} after simplification")
    return 0


def cmd_rollup(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    trajs = trajectory.read_trajectories(_need(out / TRAJECTORIES, "trajectories"))
    domain = cfg.domain_obj()
    for g in sorted(cfg.granularities):
        events = grid.rollup_all(trajs, g, domain)
        grid.write_events(out / _cells_name(g), events, domain)
        _say(f"{g} m: {len(events)} cell events")
    return 0


def cmd_partition(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    events, domain = grid.read_events(_need(out / _cells_name(grid.ANCHOR), "rollup"))
    counts = partition.CountGrid.from_events(events, domain)
    method = getattr(args, "method", None) or cfg.division_method
    budget = getattr(args, "budget", None) or cfg.division_budget
    build = partition.build_kdtree if method == "kd" else partition.build_quadtree
    divisions = build(counts, budget)
    divisions.validate()
    partition.write_divisions(out / DIVISIONS, divisions)
    rep = partition.balance(divisions, counts)
    _say(f"{method}: {len(divisions)} divisions, SD {rep.sd:.1f}, CV {rep.cv:.1f}%")
    return 0


def cmd_heatmap(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    divisions = partition.read_divisions(_need(out / DIVISIONS, "partition"))
    events, domain = {}, None
    for g in cfg.granularities:
        events[g], domain = grid.read_events(_need(out / _cells_name(g), "rollup"))
    store = heatmap.rollup_heatmaps(events, cfg.heatmap_type_objs(), sorted(cfg.granularities), divisions, domain)
    heatmap.write_tiles(out / TILES, store)
    _say(f"{len(store)} tiles over {len(store.groups)} (type, resolution) groups")
    return 0


def _load_query_inputs(cfg: PipelineConfig):
    out = cfg.out_dir
    divisions = partition.read_divisions(_need(out / DIVISIONS, "partition"))
    store = heatmap.read_tiles(_need(out / TILES, "heatmap"))
    return store, divisions


def _type_id(store: heatmap.TileStore, text: str) -> int:
    for t in store.types.values():
        if text == t.name or text == str(t.id):
            return t.id
    raise ConfigError(f"unknown heatmap type {text!r}; known: {sorted(t.name for t in store.types.values())}")


def _date_span(store: heatmap.TileStore) -> tuple[int, int]:
    dates = [int(d) for g in store.groups.values() for d in g.tiles["date_id"]]
    if not dates:
        raise ConfigError("the tile store is empty")
    return min(dates), max(dates)


def parse_area(text: str) -> tuple[float, float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4 or parts[0] >= parts[2] or parts[1] >= parts[3]:
        raise argparse.ArgumentTypeError("area must be x_min,y_min,x_max,y_max with min < max")
    return tuple(parts)


def parse_dates(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        lo, hi = int(a), int(b)
        grid.day_of_date_id(lo), grid.day_of_date_id(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("dates must be YYYYMMDD:YYYYMMDD") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("date range is empty")
    return lo, hi


def cmd_query(cfg: PipelineConfig, args) -> int:
    store, divisions = _load_query_inputs(cfg)
    area = args.area or store.domain.rect
    dates = args.dates or _date_span(store)
    tid = _type_id(store, args.type)
    res = args.resolution or min(cfg.granularities)
    raster = heatmap.query_heatmap(store, area, dates, tid, res, divisions, max_workers=args.workers)
    name = store.types[tid].name
    png = Path(args.out) if args.out else cfg.out_dir / f"query_{name}_{res}m_{dates[0]}_{dates[1]}.png"
    png.parent.mkdir(parents=True, exist_ok=True)
    png, asc = heatmap.render(raster, png, cfg.colormap, args.scale or cfg.color_scale)
    v = raster.values[~raster.nodata]
    stats = {"width": raster.width, "height": raster.height, "pixels_with_data": int(v.size),
             "min": float(v.min()) if v.size else None, "max": float(v.max()) if v.size else None,
             "sum": float(v.sum()) if v.size else 0.0}
    _say(png)
    _say(asc)
    _say(json.dumps(stats, sort_keys=True))
    return 0


def bench_queries(store: heatmap.TileStore, resolutions, type_id: int) -> list[cluster.QuerySpec]:
    """The 4 x 3 x 3 sweep: resolutions x (day, half, full span) x (harbour, region, full area)."""
    domain = store.domain
    anchor = store.group(type_id, max(resolutions)).tiles
    # busiest 5000 m anchor (most tile-days at the coarsest resolution), ties to the lowest key
    keys, counts = np.unique(np.stack([anchor["anchor_col"], anchor["anchor_row"]], 1), axis=0,
                             return_counts=True)
    col, row = keys[int(np.argmax(counts))] if len(keys) else (0, 0)
    cx = domain.x_min + (col + 0.5) * grid.ANCHOR
    cy = domain.y_min + (row + 0.5) * grid.ANCHOR

    def box(half):
        x0 = min(max(cx - half, domain.x_min), domain.x_max - 2 * half)
        y0 = min(max(cy - half, domain.y_min), domain.y_max - 2 * half)
        return (max(x0, domain.x_min), max(y0, domain.y_min),
                min(x0 + 2 * half, domain.x_max), min(y0 + 2 * half, domain.y_max))

    areas = {"harbour": box(5_000.0), "region": box(25_000.0), "full": domain.rect}
    d0, d1 = _date_span(store)
    days0, days1 = grid.day_of_date_id(d0), grid.day_of_date_id(d1)
    half = int(grid.date_ids_from_days([days0 + (days1 - days0) // 2])[0])
    spans = {"day": (d0, d0), "half": (d0, half), "full": (d0, d1)}
    return [cluster.QuerySpec(tuple(float(v) for v in a), s, type_id, r, f"{an}_{sn}_{r}")
            for an, a in areas.items() for sn, s in spans.items() for r in sorted(resolutions)]


def cmd_bench(cfg: PipelineConfig, args) -> int:
    out = cfg.out_dir
    store, divisions = _load_query_inputs(cfg)
    tid = _type_id(store, args.type)
    counts = sorted({1, args.workers}) if args.workers else sorted(set(cfg.workers) | {1})
    cost = cluster.CostModel(**cfg.cost_model)
    maps = {n: cluster.assign_shards(divisions, n) for n in counts}
    reports_dir = out / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for q in bench_queries(store, cfg.granularities, tid):
        reps = {n: cluster.simulate_query(q, maps[n], store, divisions, cost, cfg.cores_per_worker) for n in counts}
        for n, rep in reps.items():
            (reports_dir / f"{q.name}_w{n}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        top = reps[counts[-1]]
        area, span, res = q.name.split("_")
        rows.append([area, span, res, counts[-1], f"{top.runtime:.9g}", f"{top.average_wif:.4f}",
                     f"{cluster.scale_up(reps[1], top):.4f}", top.engaged_shards])
    with open(out / BENCH, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["area", "span", "resolution", "workers", "time", "wif", "scale_up", "engaged_shards"])
        w.writerows(rows)
    _say(f"{len(rows)} queries, {len(counts)} worker counts -> {out / BENCH}")
    return 0


def cmd_run(cfg: PipelineConfig, args) -> int:
    if not cfg.inputs[0].exists() or args.seed is not None:
        cmd_generate(cfg, args)
    for stage in (cmd_ingest, cmd_trajectories, cmd_rollup, cmd_partition, cmd_heatmap, cmd_bench):
        stage(cfg, args)
    res = 200 if 200 in cfg.granularities else min(cfg.granularities)
    args.area, args.dates, args.resolution, args.scale = None, None, res, None
    args.out = str(cfg.out_dir / "overview.png")
    return cmd_query(cfg, args)


COMMANDS = {
    "generate": cmd_generate, "ingest": cmd_ingest, "trajectories": cmd_trajectories,
    "rollup": cmd_rollup, "partition": cmd_partition, "heatmap": cmd_heatmap,
    "query": cmd_query, "bench": cmd_bench, "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (defaults apply when omitted)")
    parser = argparse.ArgumentParser(prog="aiswh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a seeded synthetic fleet CSV")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int, help="override generator n_points")
    p.add_argument("--out", help="CSV path (default: first input path)")

    for name, text in (("ingest", "parse, project and clean input CSVs"),
                       ("trajectories", "build and simplify trajectories"),
                       ("rollup", "roll trajectories up into cell events"),
                       ("heatmap", "roll cell events up into heatmap tiles")):
        sub.add_parser(name, parents=[common], help=text)

    p = sub.add_parser("partition", parents=[common], help="build spatial divisions")
    p.add_argument("--method", choices=("kd", "quad"))
    p.add_argument("--budget", type=int, help="maximum number of divisions")

    p = sub.add_parser("query", parents=[common], help="query and render one heatmap")
    p.add_argument("--area", type=parse_area, help="x_min,y_min,x_max,y_max (default: domain)")
    p.add_argument("--dates", type=parse_dates, help="YYYYMMDD:YYYYMMDD (default: all)")
    p.add_argument("--type", default="count", help="heatmap type name or id")
    p.add_argument("--resolution", type=int, choices=grid.GRANULARITIES)
    p.add_argument("--scale", choices=("linear", "log"))
    p.add_argument("--workers", type=int, help="threads for per-division aggregation")
    p.add_argument("--out", help="PNG path")

    for name, text in (("bench", "simulate the query sweep on a cluster"),
                       ("run", "generate if needed, then every stage through bench")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--workers", type=int, help="simulate 1 and N workers")
        p.add_argument("--type", default="count", help="heatmap type name or id")
        if name == "run":
            p.add_argument("--seed", type=int, help="regenerate the input fleet with this seed")
            p.add_argument("--points", type=int)
            p.set_defaults(out=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig.from_dict({})
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.command not in ("generate",):
            cfg.write_effective()
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 3
    except (AiswhError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
