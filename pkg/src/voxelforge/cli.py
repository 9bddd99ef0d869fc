"""Command line front end: synth, preprocess, train, eval, export-ply.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import _accel
from .data import io
from .data.scene import Sample, SceneSpec, generate_scene, render
from .edges import DEFAULT_SIGMA, DEFAULT_T_HIGH, DEFAULT_T_LOW
from .errors import EmptyVolumeError, FormatError, NumericError, ShapeMismatchError
from .geometry import CANONICAL_TRUNCATION, BinaryVolume, VoxelGridSpec
from .labels import LabelVolume
from .metrics import EvalReport
from .network.checkpoint import load_checkpoint, save_checkpoint
from .occupancy import build_occupancy_grid
from .pipeline import CannyParams, PreparedSample, prepare_sample
from .tsdf import TsdfVolume, VisibilityVolume
from .training import RunConfig, predict, train

log = logging.getLogger("voxelforge")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRIDS = {"desk": VoxelGridSpec.desk, "canonical": VoxelGridSpec.canonical}
STAMP = "stamp.json"
PREPARED_FILES = ("surface.evox", "edge.evox", "gt.evox", "occ.evox", "vis.evox", "room.evox")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_snapshot(out_dir, command, cfg: dict):
    path = Path(out_dir) / f"{command}_config.json"
    io.atomic_write_text(path, json.dumps({"command": command, **cfg}, indent=2, sort_keys=True) + "\n")
    return path


def _sample_seed(seed, i):
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


# ------------------------------------------------------------------ synth


def cmd_synth(count, difficulty, seed, out_dir, grid="desk"):
    """Generate and render ``count`` scenes; returns the manifest path."""
    if count < 0:
        raise UsageError("count must be >= 0")
    if not 0 <= difficulty <= 1:
        raise UsageError("difficulty must lie in [0, 1]")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = GRIDS[grid]()
    entries = []
    for i in range(count):
        name = f"sample_{i:04d}"
        d = out / name
        d.mkdir(exist_ok=True)
        scene = generate_scene(_sample_seed(seed, i), difficulty, grid=spec)
        s = render(scene)
        io.write_rgb(d / "rgb.ppm", s.rgb)
        io.write_depth(d / "depth.pgm", s.depth)
        io.write_volume(d / "gt.evox", s.gt.values, s.spec)
        io.write_volume(d / "room.evox", s.room.values, s.spec)
        io.atomic_write_text(d / "meta.json", json.dumps(scene.to_dict(), sort_keys=True))
        entries.append(io.ManifestEntry(*(f"{name}/{f}" for f in ("rgb.ppm", "depth.pgm", "gt.evox", "room.evox", "meta.json"))))
    manifest = out / "manifest.txt"
    io.write_manifest(manifest, entries)
    write_snapshot(out, "synth", dict(count=count, difficulty=difficulty, seed=seed, grid=grid))
    return manifest


# ------------------------------------------------------------- preprocess


def load_sample(entry: io.ManifestEntry) -> Sample:
    scene = SceneSpec.from_dict(json.loads(Path(entry.meta).read_text()))
    gt, spec = io.read_volume(entry.gt)
    room, room_spec = io.read_volume(entry.room)
    if room_spec != spec:
        raise ShapeMismatchError(f"{entry.room}: grid differs from {entry.gt}")
    rgb = io.read_rgb(entry.rgb)
    depth = io.read_depth(entry.depth)
    k = scene.intrinsics
    if rgb.shape[:2] != (k.height, k.width) or depth.shape != (k.height, k.width):
        raise ShapeMismatchError(f"{entry.rgb}: image size does not match the camera")
    return Sample(rgb, depth, LabelVolume(gt, spec), BinaryVolume(room.astype(bool), spec), scene.pose, k)


def _digest(paths, params):
    h = hashlib.sha256(json.dumps(params, sort_keys=True).encode())
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _preprocess_one(entry, out_dir, params, force):
    """Returns True when the sample was recomputed."""
    out = Path(out_dir)
    inputs = (entry.rgb, entry.depth, entry.gt, entry.room, entry.meta)
    # the grid flag only validates, so it does not invalidate outputs
    digest = _digest(inputs, {k: v for k, v in params.items() if k != "grid"})
    stamp = out / STAMP
    if not force and stamp.exists() and all((out / f).exists() for f in PREPARED_FILES):
        if json.loads(stamp.read_text()).get("digest") == digest:
            return False
    s = load_sample(entry)
    if params["grid"] is not None and s.spec != GRIDS[params["grid"]](s.spec.origin):
        raise ShapeMismatchError(f"{entry.gt}: sample grid {s.spec.dims} is not the {params['grid']} grid")
    if params["all_room"]:
        s = Sample(s.rgb, s.depth, s.gt, BinaryVolume(np.ones(s.spec.dims, dtype=bool), s.spec), s.pose, s.intrinsics)
    cp = CannyParams(params["sigma"], params["t_low"], params["t_high"])
    p = prepare_sample(s, cp, params["truncation"])
    out.mkdir(parents=True, exist_ok=True)
    save_prepared(out, p)
    io.atomic_write_text(stamp, json.dumps({"digest": digest, "params": params}, sort_keys=True))
    return True


def save_prepared(out, p: PreparedSample):
    out = Path(out)
    io.write_volume(out / "surface.evox", p.surface.values, p.spec)
    io.write_volume(out / "edge.evox", p.edge.values, p.spec)
    io.write_volume(out / "gt.evox", p.gt.values, p.gt.spec)
    io.write_volume(out / "occ.evox", p.grid.values, p.gt.spec)
    io.write_volume(out / "vis.evox", p.grid.visibility.values, p.gt.spec)
    io.write_volume(out / "room.evox", p.grid.room.values, p.gt.spec)


def load_prepared(d) -> PreparedSample:
    d = Path(d)
    surface, spec = io.read_volume(d / "surface.evox")
    edge, edge_spec = io.read_volume(d / "edge.evox")
    if edge_spec != spec:
        raise ShapeMismatchError(f"{d}: surface and edge volumes use different grids")
    gt, cspec = io.read_volume(d / "gt.evox")
    vis, _ = io.read_volume(d / "vis.evox")
    room, _ = io.read_volume(d / "room.evox")
    gtv = LabelVolume(gt, cspec)
    grid = build_occupancy_grid(gtv, VisibilityVolume(vis, cspec), BinaryVolume(room.astype(bool), cspec))
    occ, _ = io.read_volume(d / "occ.evox")
    if not np.array_equal(occ, grid.values):
        raise FormatError(f"{d}: occupancy grid is inconsistent with labels and visibility")
    return PreparedSample(TsdfVolume(surface, "FTSDF", "SURFACE"), TsdfVolume(edge, "FTSDF", "EDGE"), spec, gtv, grid)


def prepared_dirs(data_dir):
    dirs = sorted(p.parent for p in Path(data_dir).glob(f"*/{STAMP}"))
    if not dirs:
        raise FileNotFoundError(f"{data_dir}: no preprocessed samples")
    return dirs


def _entry_names(entries):
    names = [Path(e.rgb).parent.name for e in entries]
    if len(set(names)) == len(names) and all(names):
        return names
    return [f"sample_{i:04d}" for i in range(len(entries))]


def cmd_preprocess(manifest, out_dir, grid=None, sigma=DEFAULT_SIGMA, t_low=DEFAULT_T_LOW, t_high=DEFAULT_T_HIGH,
                   truncation=CANONICAL_TRUNCATION, all_room=False, force=False):
    """Preprocess every manifest entry; returns (recomputed, skipped) counts."""
    CannyParams(sigma, t_low, t_high)  # validate before any work
    if not truncation > 0:
        raise UsageError("truncation must be positive")
    root = Path(manifest).parent
    entries = [e.resolve(root) for e in io.read_manifest(manifest)]
    for e in entries:
        for p in (e.rgb, e.depth, e.gt, e.room, e.meta):
            if not Path(p).exists():
                raise FileNotFoundError(f"missing input {p}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = dict(grid=grid, sigma=sigma, t_low=t_low, t_high=t_high, truncation=truncation, all_room=all_room)
    write_snapshot(out, "preprocess", dict(manifest=str(manifest), force=force, **params))
    jobs = [(e, out / n, params, force) for e, n in zip(entries, _entry_names(entries))]
    workers = min(_accel.thread_cap() or os.cpu_count() or 1, max(len(jobs), 1))
    if workers <= 1:
        done = [_preprocess_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as ex:
            done = list(ex.map(_preprocess_one, *zip(*jobs)))
    n = sum(done)
    log.info("preprocess: %d recomputed, %d up to date", n, len(done) - n)
    return n, len(done) - n


# ------------------------------------------------------------ train / eval


def cmd_train(data_dir, out_dir, run: RunConfig):
    samples = [load_prepared(d) for d in prepared_dirs(data_dir)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(out, "train", dict(data=str(data_dir), run=run.to_dict()))
    with open(out / "loss.log", "w") as fh:
        net, history = train(samples, run, on_step=lambda line: fh.write(f"{line}\n"))
    ckpt = out / "model.enck"
    save_checkpoint(ckpt, net, {"run": run.to_dict()})
    return ckpt, history


def cmd_eval(checkpoint, data_dir, out_dir, gt_as_prediction=False, include_visible_free=False, zero_edges=None):
    samples = [load_prepared(d) for d in prepared_dirs(data_dir)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(out, "eval", dict(checkpoint=None if checkpoint is None else str(checkpoint), data=str(data_dir),
                                     gt_as_prediction=gt_as_prediction, include_visible_free=include_visible_free))
    if gt_as_prediction:
        preds = [s.gt for s in samples]
    else:
        net, cfg = load_checkpoint(checkpoint)
        if zero_edges is None:
            zero_edges = bool(cfg.get("run", {}).get("zero_edges", False))
        if tuple(net.cfg.input_dims) != samples[0].surface.values.shape:
            raise ShapeMismatchError(f"checkpoint expects {net.cfg.input_dims}, data is {samples[0].surface.values.shape}")
        preds = [predict(net, s, zero_edges) for s in samples]
    report = EvalReport.evaluate_many([(p, s.gt, s.grid) for p, s in zip(preds, samples)], include_visible_free)
    io.atomic_write_text(out / "report.txt", report.to_table() + "\n")
    io.atomic_write_text(out / "report.kv", report.to_kv())
    return report


def cmd_export_ply(volume, out, threshold=None):
    values, spec = io.read_volume(volume)
    n = io.export_ply(out, values, spec, threshold)
    write_snapshot(Path(out).parent, "export-ply", dict(volume=str(volume), out=str(out), threshold=threshold))
    return n


# ------------------------------------------------------------------ parser


def build_parser():
    p = _Parser(prog="voxelforge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate and render synthetic scenes")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--difficulty", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid", choices=sorted(GRIDS), default="desk")
    s.add_argument("--out", required=True)

    s = sub.add_parser("preprocess", help="encode surface and edge F-TSDF volumes")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--grid", choices=sorted(GRIDS), default=None, help="require samples on this grid")
    s.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    s.add_argument("--t-low", type=float, default=DEFAULT_T_LOW)
    s.add_argument("--t-high", type=float, default=DEFAULT_T_HIGH)
    s.add_argument("--truncation", type=float, default=CANONICAL_TRUNCATION, help="meters")
    s.add_argument("--all-room", action="store_true", help="treat the whole grid as room")
    s.add_argument("--force", action="store_true")

    s = sub.add_parser("train", help="train EdgeNet on preprocessed samples")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="run config snapshot to start from")
    s.add_argument("--fusion", choices=["ef", "mf", "lf"])
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int, dest="max_steps", help="stop after this many steps")
    s.add_argument("--base-channels", type=int)
    s.add_argument("--levels", type=int)
    s.add_argument("--constant-lr", action="store_true", help="disable the one-cycle schedule")
    s.add_argument("--zero-edges", action="store_true", help="feed an all-zero edge channel")

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--gt-as-prediction", action="store_true", help="score the labels against themselves")
    s.add_argument("--include-visible-free", action="store_true")

    s = sub.add_parser("export-ply", help="write an EVOX volume as a PLY cube mesh")
    s.add_argument("volume")
    s.add_argument("out")
    s.add_argument("--threshold", type=float)
    return p


def _run_config(args) -> RunConfig:
    base = {}
    if args.config:
        snap = json.loads(Path(args.config).read_text())
        base = snap.get("run", snap)
    for key in ("fusion", "epochs", "batch", "seed", "max_steps", "base_channels", "levels"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.constant_lr:
        base["one_cycle"] = False
    if args.zero_edges:
        base["zero_edges"] = True
    return RunConfig.from_dict(base)


def dispatch(args):
    if args.command == "synth":
        print(cmd_synth(args.count, args.difficulty, args.seed, args.out, args.grid))
    elif args.command == "preprocess":
        n, skipped = cmd_preprocess(args.manifest, args.out, args.grid, args.sigma, args.t_low, args.t_high,
                                    args.truncation, args.all_room, args.force)
        print(f"recomputed={n} skipped={skipped}")
    elif args.command == "train":
        ckpt, history = cmd_train(args.data, args.out, _run_config(args))
        print(f"{ckpt} steps={len(history)} final_loss={history[-1].loss:.6g}")
    elif args.command == "eval":
        if args.checkpoint is None and not args.gt_as_prediction:
            raise UsageError("eval needs --checkpoint or --gt-as-prediction")
        print(cmd_eval(args.checkpoint, args.data, args.out, args.gt_as_prediction, args.include_visible_free).to_table())
    elif args.command == "export-ply":
        print(f"voxels={cmd_export_ply(args.volume, args.out, args.threshold)}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    _accel.apply_thread_cap()
    try:
        dispatch(args)
    except NumericError as e:
        log.error("numeric failure: %s", e)
        return EXIT_NUMERIC
    except (FormatError, ShapeMismatchError, EmptyVolumeError, FileNotFoundError, IsADirectoryError) as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except (UsageError, ValueError, TypeError, KeyError) as e:
        log.error("usage error: %s", e)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
