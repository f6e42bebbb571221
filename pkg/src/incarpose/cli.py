"""Command line: synthetic data, training, prediction, evaluation reports,
trajectory comparison and representation conversion.

Exit codes: 0 success, 2 usage error, 3 data error.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geom3, labels, losses
from . import synthgen as sg
from .errors import DegenerateInputError, DomainError, InvalidArgumentError, ShapeError
from .imageproc import read_pnm, write_pnm
from .model import InCaRPoseNet, ModelConfig, TrainConfig, paper_train_config, train
from .tensorcore import load_checkpoint, save_checkpoint

log = logging.getLogger("incarpose")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

QUAT_WARN_TOL = 1e-9
QUAT_REJECT_TOL = 1e-6
MIN_GT_NORM_FOR_DIRECTION = 1e-6
TRAJECTORY_FILE = "trajectory.json"
IMAGE_DIR = "images"


class DataError(Exception):
    """Bad or inconsistent input files; maps to exit code 3."""


def default_seed(fallback=0):
    env = os.environ.get("INCARPOSE_SEED")
    if env is None or env.strip() == "":
        return fallback
    try:
        return int(env)
    except ValueError as exc:
        raise DataError(f"INCARPOSE_SEED must be an integer, got {env!r}") from exc


# --- PoseFile ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class PoseEntry:
    """One stored pose; the quaternion is kept as read so files round-trip exactly."""

    image_id: str
    q: tuple
    t_m: tuple

    @classmethod
    def from_pose(cls, image_id, pose):
        return cls(str(image_id), tuple(geom3.matrix_to_quat(pose.rotation).tolist()), tuple(pose.translation.tolist()))

    def pose(self):
        return geom3.Pose(geom3.quat_to_matrix(np.array(self.q)), np.array(self.t_m))


@dataclass
class PoseFile:
    frame: str = "standard_view"
    entries: list = field(default_factory=list)  # PoseEntry
    pairs: list | None = None  # (ref_id, query_id)

    @classmethod
    def from_poses(cls, frame, items, pairs=None):
        return cls(frame, [PoseEntry.from_pose(i, p) for i, p in items], pairs)

    def poses(self):
        return {e.image_id: e.pose() for e in self.entries}

    def items(self):
        return [(e.image_id, e.pose()) for e in self.entries]


def _quat_from_record(rec, where):
    q = np.asarray(rec, dtype=np.float64)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise DataError(f"{where}: q must be 4 finite numbers [w, x, y, z]")
    dev = abs(np.linalg.norm(q) - 1.0)
    if dev > QUAT_REJECT_TOL:
        raise DataError(f"{where}: quaternion norm is off by {dev:.3g} (> {QUAT_REJECT_TOL:g})")
    if dev > QUAT_WARN_TOL:
        log.warning("%s: renormalizing quaternion (norm off by %.3g)", where, dev)
        q = q / np.linalg.norm(q)
    return q


def pose_file_from_dict(doc, source="<pose file>"):
    try:
        frame = str(doc.get("frame", "standard_view"))
        entries = []
        for k, e in enumerate(doc["entries"]):
            where = f"{source}: entry {k} ({e.get('image_id')!r})"
            q = _quat_from_record(e["q"], where)
            t = np.asarray(e["t_m"], dtype=np.float64)
            if t.shape != (3,) or not np.all(np.isfinite(t)):
                raise DataError(f"{where}: t_m must be 3 finite numbers")
            entries.append(PoseEntry(str(e["image_id"]), tuple(q.tolist()), tuple(t.tolist())))
        pairs = None
        if doc.get("pairs") is not None:
            pairs = [(str(p["ref_id"]), str(p["query_id"])) for p in doc["pairs"]]
    except (KeyError, TypeError, AttributeError) as exc:
        raise DataError(f"{source}: malformed pose file ({exc!r})") from exc
    ids = [e.image_id for e in entries]
    if len(ids) != len(set(ids)):
        raise DataError(f"{source}: duplicate image ids")
    known = set(ids)
    for r, q in pairs or ():
        if r not in known or q not in known:
            raise DataError(f"{source}: pair ({r}, {q}) references an unknown image id")
    return PoseFile(frame, entries, pairs)


def pose_file_to_dict(pf):
    doc = {
        "frame": pf.frame,
        "entries": [{"image_id": e.image_id, "q": list(e.q), "t_m": list(e.t_m)} for e in pf.entries],
    }
    if pf.pairs is not None:
        doc["pairs"] = [{"ref_id": r, "query_id": q} for r, q in pf.pairs]
    return doc


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_pose_file(path):
    return pose_file_from_dict(_read_json(path), str(path))


def write_pose_file(path, pf):
    _write_json(path, pose_file_to_dict(pf))


def pair_key(ref_id, query_id):
    return f"{ref_id}>{query_id}"


def relative_poses(pf):
    """{pair id: relative pose}. Files with pairs are resolved through their
    absolute poses; files without pairs already hold relative poses."""
    if pf.pairs is None:
        return pf.poses()
    poses = pf.poses()
    return {pair_key(r, q): labels.make_relative_target(poses[r], poses[q]) for r, q in pf.pairs}


# --- evaluation report -------------------------------------------------------------------------


def median_by_sort(values):
    v = sorted(values)
    n = len(v)
    if n == 0:
        return None
    mid = n // 2
    return v[mid] if n % 2 else 0.5 * (v[mid - 1] + v[mid])


def error_rows(pred, gt):
    """Per-pair rows (pair, rot_deg, trans_m, dir_deg or None) in ground-truth order."""
    rows = []
    for key, g in gt.items():
        p = pred[key]
        rot = float(np.degrees(losses.geodesic_distance(p.rotation, g.rotation)))
        trans = float(losses.euclidean_translation_error(p.translation, g.translation))
        direction = None
        if np.linalg.norm(g.translation) >= MIN_GT_NORM_FOR_DIRECTION and np.linalg.norm(p.translation) > losses.MIN_DIRECTION_NORM:
            direction = float(np.degrees(losses.translation_direction_error(p.translation, g.translation)))
        rows.append((key, rot, trans, direction))
    return rows


def aggregate_rows(rows):
    out = {}
    for col, name in ((1, "rot_deg"), (2, "trans_m"), (3, "dir_deg")):
        vals = [r[col] for r in rows if r[col] is not None]
        out[name] = {
            # fsum keeps the mean independent of row order
            "mean": math.fsum(vals) / len(vals) if vals else None,
            "median": median_by_sort(vals),
        }
    return out


def _fmt(x):
    return "" if x is None else repr(float(x))


def report_csv(rows):
    agg = aggregate_rows(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pair", "rot_deg", "trans_m", "dir_deg"])
    for key, rot, trans, direction in rows:
        w.writerow([key, _fmt(rot), _fmt(trans), _fmt(direction)])
    for stat in ("mean", "median"):
        w.writerow([f"#{stat}"] + [_fmt(agg[c][stat]) for c in ("rot_deg", "trans_m", "dir_deg")])
    return buf.getvalue()


# --- dataset directories -----------------------------------------------------------------------------


def write_dataset(out_dir, records):
    """Images as PGM plus trajectory.json with absolute poses and pairs."""
    out = Path(out_dir)
    (out / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    entries, pairs, seen = [], [], set()
    for i, rec in enumerate(records):
        ref_id = f"scene{rec.scene_key[0]}_{rec.scene_key[1]:04d}_ref"
        query_id = f"pair{i:05d}"
        if ref_id not in seen:
            seen.add(ref_id)
            write_pnm(out / IMAGE_DIR / f"{ref_id}.pgm", rec.img_ref)
            entries.append((ref_id, rec.pose_ref))
        write_pnm(out / IMAGE_DIR / f"{query_id}.pgm", rec.img_2)
        entries.append((query_id, rec.pose_2))
        pairs.append((ref_id, query_id))
    write_pose_file(out / TRAJECTORY_FILE, PoseFile.from_poses("standard_view", entries, pairs))


def load_dataset(data_dir):
    """(img_ref, img_2, R_rel, t_rel, pair ids) from a gen-data directory."""
    root = Path(data_dir)
    pf = read_pose_file(root / TRAJECTORY_FILE)
    if not pf.pairs:
        raise DataError(f"{root / TRAJECTORY_FILE}: no pairs listed")
    cache = {}

    def image(i):
        if i not in cache:
            path = root / IMAGE_DIR / f"{i}.pgm"
            try:
                cache[i] = read_pnm(path)
            except OSError as exc:
                raise DataError(f"cannot read {path}: {exc.strerror}") from exc
            except InvalidArgumentError as exc:
                raise DataError(str(exc)) from exc
        return cache[i]

    rel = relative_poses(pf)
    keys = [pair_key(r, q) for r, q in pf.pairs]
    img_ref = np.stack([image(r) for r, _ in pf.pairs])
    img_2 = np.stack([image(q) for _, q in pf.pairs])
    R = np.stack([rel[k].rotation for k in keys])
    t = np.stack([rel[k].translation for k in keys])
    return img_ref, img_2, R, t, keys


# --- configs --------------------------------------------------------------------------------------


def load_config(path):
    """Model and training config from JSON: {"preset": "toy"|"paper", "model": {...}, "train": {...}}."""
    doc = {} if path is None else _read_json(path)
    preset = doc.get("preset", "toy")
    if preset not in ("toy", "paper"):
        raise DataError(f"unknown preset {preset!r}; expected 'toy' or 'paper'")
    model_over = dict(doc.get("model", {}))
    train_over = dict(doc.get("train", {}))
    try:
        if preset == "paper":
            tcfg = paper_train_config(**train_over)
            mcfg = ModelConfig(**model_over) if model_over else ModelConfig()
        else:
            tcfg = TrainConfig(**train_over)
            mcfg = ModelConfig(**model_over)
    except (TypeError, InvalidArgumentError) as exc:
        raise DataError(f"invalid config: {exc}") from exc
    return preset, mcfg, tcfg


# --- commands ---------------------------------------------------------------------------------------


def cmd_gen_data(args):
    seed = args.seed if args.seed is not None else default_seed()
    ranges = sg.SamplingRanges(args.rx, args.ry, args.rz, args.t)
    records = sg.make_dataset(args.pairs, seed, ranges=ranges, pairs_per_scene=args.pairs_per_scene)
    write_dataset(args.out, records)
    print(f"wrote {len(records)} pairs to {args.out}")
    return EXIT_OK


def cmd_train(args):
    preset, mcfg, tcfg = load_config(args.config)
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if os.environ.get("INCARPOSE_SEED"):
        overrides["seed"] = default_seed()
    if overrides:
        tcfg = TrainConfig(**{**tcfg.to_dict(), **overrides})
    img_ref, img_2, R, t, _ = load_dataset(args.data)
    val = None
    if args.val_data:
        val = load_dataset(args.val_data)[:4]
    net, history = train((img_ref, img_2, R, t), mcfg, tcfg, val_dataset=val,
                         progress=lambda r: print(json.dumps(r), flush=True))
    meta = {"preset": preset, "model": mcfg.to_dict(), "train": tcfg.to_dict(), "epochs_run": len(history)}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, net.state_dict(), meta)
    metrics = args.metrics or f"{args.out}.metrics.json"
    _write_json(metrics, {"history": history, "config": meta})
    print(f"checkpoint: {args.out}\nmetrics: {metrics}")
    return EXIT_OK


def _load_net(path):
    try:
        arrays, meta = load_checkpoint(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    net = InCaRPoseNet(ModelConfig.from_dict(meta.get("model", {})))
    try:
        net.load_state_dict(arrays)
    except (InvalidArgumentError, ShapeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    return net


def cmd_predict(args):
    net = _load_net(args.ckpt)
    img_ref, img_2, _, _, keys = load_dataset(args.data)
    entries = []
    for s in range(0, len(keys), 64):
        for k, (fwd, _) in zip(keys[s : s + 64], net.predict(img_ref[s : s + 64], img_2[s : s + 64])):
            entries.append((k, fwd))
    write_pose_file(args.out, PoseFile.from_poses("relative", entries))
    print(f"wrote {len(entries)} predictions to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    pred = relative_poses(read_pose_file(args.pred))
    gt = relative_poses(read_pose_file(args.gt))
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing or extra:
        for k in missing:
            print(f"missing prediction for pair {k}", file=sys.stderr)
        for k in extra:
            print(f"prediction for unknown pair {k}", file=sys.stderr)
        return EXIT_DATA
    text = report_csv(error_rows(pred, gt))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text, encoding="utf-8")
    print("".join(line + "\n" for line in text.splitlines() if line.startswith("#")), end="")
    return EXIT_OK


def _trajectory(pf):
    if pf.pairs is not None:
        return labels.Trajectory(sorted(relative_poses(pf).items()), pf.frame)
    return labels.Trajectory(pf.items(), pf.frame)


def cmd_gt_compare(args):
    a = _trajectory(read_pose_file(args.a))
    b = _trajectory(read_pose_file(args.b))
    rows, summary = labels.compare_trajectories(a, b, args.threshold)
    lines = [f"{'stat':<8}{'rotation_deg':>16}{'direction_deg':>16}"]
    for stat in ("max", "mean", "median"):
        vals = [summary[c][stat] for c in ("rotation_deg", "direction_deg")]
        lines.append(f"{stat:<8}" + "".join(f"{'n/a' if v is None else format(v, '.6f'):>16}" for v in vals))
    lines.append(f"{'count':<8}{summary['rotation_deg']['count']:>16}{summary['direction_deg']['count']:>16}")
    print("\n".join(lines))
    if args.out:
        _write_json(args.out, {"threshold_m": args.threshold, "summary": summary,
                               "rows": [r.__dict__ for r in rows]})
    return EXIT_OK


def _poses_from_convert_input(doc, source):
    # a previous convert output is accepted as input, so conversions chain
    if "repr" in doc:
        tag = geom3.check_tag(doc["repr"])
        try:
            entries = [(str(e["image_id"]), geom3.vector_to_pose(e["y"], tag)) for e in doc["entries"]]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{source}: malformed representation file ({exc!r})") from exc
        return doc.get("frame", "standard_view"), entries
    pf = pose_file_from_dict(doc, source)
    return pf.frame, pf.items()


def cmd_convert(args):
    frame, entries = _poses_from_convert_input(_read_json(args.inp), args.inp)
    doc = {
        "frame": frame,
        "repr": args.repr,
        "length": geom3.repr_dim(args.repr),
        "entries": [{"image_id": i, "y": geom3.pose_to_vector(p, args.repr).tolist()} for i, p in entries],
    }
    _write_json(args.out, doc)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="incarpose", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render a synthetic fisheye pair dataset")
    g.add_argument("--pairs", type=int, required=True)
    g.add_argument("--seed", type=int, default=None, help="scene seed (default: $INCARPOSE_SEED or 0)")
    g.add_argument("--out", required=True)
    g.add_argument("--rx", type=float, default=80.0, help="half-range about x, degrees")
    g.add_argument("--ry", type=float, default=80.0, help="half-range about y, degrees")
    g.add_argument("--rz", type=float, default=50.0, help="half-range about z, degrees")
    g.add_argument("--t", type=float, default=0.2, help="per-axis translation half-range, meters")
    g.add_argument("--pairs-per-scene", type=int, default=4)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train decoder and head on a gen-data directory")
    t.add_argument("--data", required=True)
    t.add_argument("--config", default=None, help='JSON {"preset": "toy"|"paper", "model": {}, "train": {}}')
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--val-data", default=None)
    t.add_argument("--metrics", default=None, help="metrics JSON (default: <out>.metrics.json)")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict relative poses for every pair of a dataset")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="per-pair error report with mean/median footer")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gt-compare", help="compare two trajectories relative to the same reference view")
    c.add_argument("--a", required=True, help="metric trajectory (decides the displacement gate)")
    c.add_argument("--b", required=True)
    c.add_argument("--threshold", type=float, default=labels.DEFAULT_DISPLACEMENT_THRESHOLD_M)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_gt_compare)

    v = sub.add_parser("convert", help="flatten poses into a rotation representation")
    v.add_argument("--in", dest="inp", required=True)
    v.add_argument("--repr", required=True, choices=geom3.REPR_TAGS)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_convert)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidArgumentError, DomainError, DegenerateInputError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
