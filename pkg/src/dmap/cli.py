"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .accuracy import AccuracyParams, f_of_gamma, gamma_for_accuracy, simulate_f
from .engine import DMap
from .geometry import InvalidParameterError, SensorModel
from .io import (
    DataError,
    RunConfig,
    ScanSequence,
    export_snapshot,
    import_snapshot,
    read_points,
    read_sequence,
    read_stats_csv,
    sequence_bounds,
    sequence_from_text,
    sequence_to_text,
    write_sequence,
    write_states,
    write_stats_csv,
)
from .oracle import DenseOracleGrid, compare

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _map_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key-value run config ([dmap] section)")
    p.add_argument("--resolution", type=float)
    p.add_argument("--gamma", type=float, help="depth-image relax factor")
    p.add_argument("--omega", type=float, help="target accuracy; sets gamma")
    p.add_argument("--mode", choices=["removal", "probability"])
    p.add_argument("--slide-threshold", type=float)
    p.add_argument("--seed", type=int)


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for key in ("resolution", "gamma", "omega", "mode", "slide_threshold", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            cfg.set(key, v)
    if args.gamma is not None and args.omega is not None:
        raise UsageError("give --gamma or --omega, not both")
    cfg.validate()
    return cfg


def _make_map(cfg: RunConfig, seq: ScanSequence, resolution: float | None = None) -> DMap:
    if resolution is not None:
        cfg = RunConfig(**{**cfg.__dict__, "resolution": resolution})
    sensor = cfg.sensor_for(seq.sensor)
    lo, hi = sequence_bounds(seq, cfg.resolution)
    gamma = cfg.gamma
    if cfg.omega is not None:
        gamma = gamma_for_accuracy(cfg.omega, AccuracyParams(min(sensor.fov_v / 2, math.pi / 2)))
    return DMap(cfg.map_config(lo, hi), sensor, cfg.mode, gamma, cfg.probability_params(), cfg.slide_threshold)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build(args) -> int:
    cfg = _run_config(args)
    seq = read_sequence(args.sequence)
    m = _make_map(cfg, seq)
    t0 = time.perf_counter()
    for i, frame in enumerate(seq.frames):
        try:
            m.update(frame)
        except InvalidParameterError as exc:
            raise DataError(f"frame {i}: {exc}") from None
    wall = time.perf_counter() - t0
    out = _out_dir(args)
    (out / "map.snapshot").write_text(export_snapshot(m))
    write_stats_csv(out / "stats.csv", m.update_log)
    summary = _summary(m.update_log)
    summary["wall_time"] = wall
    summary["unknown_volume"] = m.unknown_volume()
    (out / "summary.txt").write_text("".join(f"{k} = {v!r}\n" for k, v in summary.items()))
    print(f"built {len(seq.frames)} frames -> {out}")
    return EXIT_OK


def _summary(rows) -> dict:
    def col(name):
        return np.array([float(getattr(r, name) if not isinstance(r, dict) else r[name]) for r in rows])

    n = len(rows)
    out = {"frames": n}
    if n:
        out["mean_update_time"] = float(col("total_time").mean())
        out["max_update_time"] = float(col("total_time").max())
        out["mean_visited_nodes"] = float(col("visited_nodes").mean())
        out["final_octree_nodes"] = int(col("octree_nodes")[-1])
        out["final_grid_voxels"] = int(col("grid_voxels")[-1])
        out["final_memory_bytes"] = int(col("memory_bytes")[-1])
    return out


def cmd_report(args) -> int:
    path = Path(args.stats)
    if path.is_dir():
        path = path / "stats.csv"
    try:
        rows = read_stats_csv(path)
        summary = _summary(rows)
    except (KeyError, ValueError) as exc:
        raise DataError(f"stats file: {exc}") from None
    for k, v in summary.items():
        print(f"{k} = {v}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    seq = read_sequence(args.sequence)
    resolutions = args.resolutions or [cfg.resolution]
    region = None
    if args.region:
        if len(args.region) != 6:
            raise UsageError("--region needs six numbers: xmin ymin zmin xmax ymax zmax")
        region = (np.array(args.region[:3]), np.array(args.region[3:]))
    lines = ["resolution,unknown,free,occupied,n_unknown,n_free,n_occupied"]
    for d in resolutions:
        m = _make_map(cfg, seq, d)
        oracle = DenseOracleGrid(d, m.config.bbox_min, m.config.bbox_max)
        for frame in seq.frames:
            m.update(frame)
            oracle.raycast_update(frame, m.sensor.detection_range)
        r = compare(m, oracle, region)
        lines.append(f"{d!r},{r.unknown!r},{r.free!r},{r.occupied!r},{r.n_unknown},{r.n_free},{r.n_occupied}")
    text = "\n".join(lines) + "\n"
    if args.out:
        (_out_dir(args) / "agreement.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_fgamma(args) -> int:
    alpha = math.radians(args.alpha_fov)
    params = AccuracyParams(alpha)
    lines = ["gamma,f_analytic,f_empirical"]
    for g in args.gammas:
        sim = simulate_f(args.range, args.resolution, alpha, g, args.seed or 0, args.cells)
        lines.append(f"{g!r},{f_of_gamma(g, params)!r},{sim.f_empirical!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        (_out_dir(args) / "fgamma.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_query(args) -> int:
    m = import_snapshot(Path(args.snapshot).read_text())
    pts = read_points(args.points)
    states = m.query_many(pts)
    if args.out:
        target = Path(args.out)
        if target.is_dir():
            target = target / "states.txt"
        write_states(target, states)
    else:
        from .engine import CellState

        sys.stdout.write("".join(f"{CellState(int(s)).name}\n" for s in states))
    return EXIT_OK


def cmd_convert(args) -> int:
    src, dst = Path(args.input), Path(args.output)
    if src.suffix == ".dseq":
        seq = read_sequence(src)
    else:
        seq = sequence_from_text(src.read_text())
    if dst.suffix == ".dseq":
        write_sequence(dst, seq)
    else:
        dst.write_text(sequence_to_text(seq))
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .scene import Scene, room_scene, room_trajectory, simulate_sequence

    scene = Scene.load(args.scene) if args.scene else room_scene()
    sensor = SensorModel(args.range, math.radians(args.fov_h), math.radians(args.fov_v),
                         math.radians(args.angular_resolution))
    frames = simulate_sequence(scene, room_trajectory(args.scans), sensor, args.noise, args.seed or 0)
    write_sequence(args.output, ScanSequence(sensor, args.resolution or 0.1, frames))
    print(f"wrote {len(frames)} frames to {args.output}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("dmap.service:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dmap", description="Decremental occupancy mapping")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build a map from a scan sequence")
    b.add_argument("sequence", type=Path)
    _map_options(b)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_build)

    c = sub.add_parser("compare", help="agreement with the ray-casting reference grid")
    c.add_argument("sequence", type=Path)
    _map_options(c)
    c.add_argument("--resolutions", type=_floats, help="e.g. 0.25,0.1")
    c.add_argument("--region", type=_floats, help="xmin,ymin,zmin,xmax,ymax,zmax")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    f = sub.add_parser("fgamma", help="analytic vs simulated accuracy function")
    f.add_argument("--range", type=float, default=50.0, help="detection range R (m)")
    f.add_argument("--resolution", type=float, default=0.1)
    f.add_argument("--alpha-fov", type=float, default=15.0, help="vertical half-FoV (degrees)")
    f.add_argument("--gammas", type=_floats, default=[1.0, 2.0, 4.0, 8.0])
    f.add_argument("--cells", type=int, default=200_000, help="Monte-Carlo sample size")
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fgamma)

    q = sub.add_parser("query", help="tri-state of points against a snapshot")
    q.add_argument("snapshot", type=Path)
    q.add_argument("points", type=Path, help="text file, one 'x y z' per line")
    q.add_argument("--out", help="states file (default: stdout)")
    q.set_defaults(func=cmd_query)

    r = sub.add_parser("report", help="summarize a stats CSV or build directory")
    r.add_argument("stats", type=Path)
    r.set_defaults(func=cmd_report)

    v = sub.add_parser("convert", help="convert between text and binary scan sequences")
    v.add_argument("input", type=Path)
    v.add_argument("output", type=Path)
    v.set_defaults(func=cmd_convert)

    s = sub.add_parser("simulate", help="write a synthetic room sequence")
    s.add_argument("output", type=Path)
    s.add_argument("--scene", type=Path, help="scene text file (default: built-in room)")
    s.add_argument("--scans", type=int, default=50)
    s.add_argument("--noise", type=float, default=0.0, help="range noise sigma (m)")
    s.add_argument("--range", type=float, default=30.0)
    s.add_argument("--fov-h", type=float, default=360.0)
    s.add_argument("--fov-v", type=float, default=90.0)
    s.add_argument("--angular-resolution", type=float, default=0.5)
    s.add_argument("--resolution", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    sv = sub.add_parser("serve", help="run the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidParameterError, OSError, UnicodeDecodeError) as exc:
        print(f"dmap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
