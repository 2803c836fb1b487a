"""Command-line entry point: ``trafficgraph <command> [flags]``.

Commands: synth, build, train, eval, loio, variants, dump-adjacency.
Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .features import (FeatureConfig, TensorFileError, read_tensor_file, sequence_features,
                       write_tensor_file)
from .graph import build_sequence, density, render_image, sequence_slots, write_pgm
from .harness import (VARIANTS, SplitSpec, UnknownVariantError, VariantResult, VariantSpec,
                      evaluate, group_by_intersection, intersection_of, leave_one_out,
                      run_variants, split, write_confusion_csv, write_confusion_pgm,
                      write_results_table)
from .ingest import (Calibration, DataError, load_sequences, write_annotations, write_regions,
                     write_trajectories)
from .neural import (CheckpointError, NumericalError, TemporalModel, TrainConfig,
                     load_checkpoint, save_checkpoint, train, write_log)
from .synth import SynthConfig, build_scene

log = logging.getLogger("trafficgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

TRAJ_FILE = "trajectories.csv"
REGION_FILE = "regions.json"
ANNOT_FILE = "annotations.csv"
FEATURE_FILE = "features.bin"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# helpers


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def derive_seeds(seed: int, n: int) -> list[int]:
    """Fixed splitting of one user seed into ``n`` independent sub-seeds."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def write_manifest(out: Path, command: str, config: dict, inputs=(), outputs=()) -> None:
    manifest = {
        "tool": "trafficgraph",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {Path(p).name: sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    with open(out / MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def verify_digest(path: Path) -> None:
    """Check ``path`` against the manifest that sits next to it, if any."""
    mpath = path.parent / MANIFEST
    if not mpath.exists():
        return
    try:
        with open(mpath, encoding="utf-8") as fh:
            expected = json.load(fh).get("outputs", {}).get(path.name)
    except json.JSONDecodeError:
        raise DataError(f"unreadable manifest {mpath}") from None
    if expected and expected != sha256_file(path):
        raise DataError(f"{path} does not match the digest recorded in {mpath}")


def load_features(path, require: bool = False) -> list:
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file {path} not found")
    verify_digest(path)
    with open(path, "rb") as fh:
        seqs = read_tensor_file(fh)
    if require and not seqs:
        raise DataError(f"feature file {path} holds no sequences")
    return seqs


def _input_paths(args):
    if args.data:
        d = Path(args.data)
        traj, reg, ann = d / TRAJ_FILE, d / REGION_FILE, d / ANNOT_FILE
    else:
        traj, reg, ann = (Path(p) if p else None for p in (args.traj, args.regions, args.annotations))
    for p in (traj, reg, ann):
        if p is None:
            raise UsageError("give --data DIR or all of --traj, --regions, --annotations")
        if not p.exists():
            raise DataError(f"input file {p} not found")
    return traj, reg, ann


def _load_raw(args):
    traj, reg, ann = _input_paths(args)
    cal = Calibration(args.meters_per_pixel) if args.meters_per_pixel else None
    seqs = load_sequences(traj, reg, ann, args.rate, args.min_users, args.frame_rate, cal,
                          "nearest" if args.nearest else "linear")
    return seqs, (traj, reg, ann)


def _train_config(args, seed) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
                       recurrent_dropout=args.dropout, seed=seed)


def _write_report(out: Path, name: str, ev, stem: str = "results") -> list[Path]:
    paths = [out / f"{stem}.csv", out / f"{stem}_confusion.csv", out / f"{stem}_confusion.pgm"]
    with open(paths[0], "w", encoding="utf-8") as fh:
        write_results_table(fh, [VariantResult(name, ev, [])])
    with open(paths[1], "w", encoding="utf-8") as fh:
        write_confusion_csv(fh, ev.confusion, name)
    with open(paths[2], "w", encoding="utf-8") as fh:
        write_confusion_pgm(fh, ev.confusion)
    return paths


def _print_eval(name, ev):
    per = " ".join(f"{lab}={100 * a:.2f}" for lab, a in zip(("neutral", "clumping", "unclumping"),
                                                           ev.per_class))
    print(f"{name}: {per} total={100 * ev.total:.2f}")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(n_users=(args.users_min, args.users_max), duration_s=args.duration,
                      rate_hz=args.rate, noise_m=args.noise, seed=args.seed)
    inters = tuple(s for s in args.intersections.split(",") if s)
    scene = build_scene([args.per_class] * 3, cfg, args.seed, inters)
    paths = [out / TRAJ_FILE, out / REGION_FILE, out / ANNOT_FILE]
    with open(paths[0], "w", encoding="utf-8") as fh:
        write_trajectories(fh, scene.tracks)
    with open(paths[1], "w", encoding="utf-8") as fh:
        write_regions(fh, scene.regions)
    with open(paths[2], "w", encoding="utf-8") as fh:
        write_annotations(fh, scene.annotations)
    config = {"per_class": args.per_class, "seed": args.seed, "intersections": list(inters),
              "users": [args.users_min, args.users_max], "duration_s": args.duration,
              "rate_hz": args.rate, "noise_m": args.noise}
    write_manifest(out, "synth", config, outputs=paths)
    print(f"wrote {len(scene.sequences)} sequences ({len(scene.tracks)} tracks) to {out}")
    return EXIT_OK


def cmd_build(args) -> int:
    out = Path(args.out)
    seqs, inputs = _load_raw(args)
    fcfg = FeatureConfig(args.mu, args.canvas, args.img, args.frames)
    feats = [sequence_features(s, fcfg) for s in seqs]
    out.mkdir(parents=True, exist_ok=True)
    path = out / FEATURE_FILE
    with open(path, "wb") as fh:
        write_tensor_file(fh, feats, args.frames)
    config = {"mu": args.mu, "rate": args.rate, "min_users": args.min_users,
              "frames": args.frames, "canvas": args.canvas, "img": args.img,
              "resample": "nearest" if args.nearest else "linear",
              "frame_rate": args.frame_rate, "meters_per_pixel": args.meters_per_pixel}
    write_manifest(out, "build", config, inputs=inputs, outputs=[path])
    print(f"wrote {len(feats)} sequences to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    out = Path(args.out)
    seqs = load_features(args.features, require=True)
    split_seed, init_seed, train_seed = derive_seeds(args.seed, 3)
    vs = VariantSpec.from_name(args.variant, seqs[0].steps.shape[1])
    tr, va, te = split(seqs, SplitSpec(seed=split_seed), [intersection_of(s) for s in seqs])
    tc = _train_config(args, train_seed)
    model = TemporalModel.initialize(vs.config, init_seed)
    best, history = train(model, tr, tc, va)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, logf = out / "model.ckpt", out / "train_log.csv"
    with open(ckpt, "wb") as fh:
        save_checkpoint(fh, best)
    with open(logf, "w", encoding="utf-8") as fh:
        write_log(fh, history)
    ev = evaluate(best, te)
    reports = _write_report(out, vs.name, ev)
    config = {"variant": vs.name, "model": vs.config.to_dict(), "train": tc.to_dict(),
              "seed": args.seed, "split_seed": split_seed, "init_seed": init_seed,
              "sizes": [len(tr), len(va), len(te)]}
    write_manifest(out, "train", config, inputs=[args.features], outputs=[ckpt, logf, *reports])
    _print_eval(vs.name, ev)
    return EXIT_OK


def cmd_eval(args) -> int:
    out = Path(args.out)
    seqs = load_features(args.features)
    cpath = Path(args.checkpoint)
    if not cpath.exists():
        raise DataError(f"checkpoint {cpath} not found")
    verify_digest(cpath)
    with open(cpath, "rb") as fh:
        model = load_checkpoint(fh)
    if args.split == "test":
        split_seed = derive_seeds(args.seed, 3)[0]
        seqs = split(seqs, SplitSpec(seed=split_seed), [intersection_of(s) for s in seqs])[2]
    ev = evaluate(model, seqs)
    out.mkdir(parents=True, exist_ok=True)
    reports = _write_report(out, "eval", ev)
    write_manifest(out, "eval", {"split": args.split, "seed": args.seed},
                   inputs=[args.features, cpath], outputs=reports)
    _print_eval("eval", ev)
    return EXIT_OK


def cmd_loio(args) -> int:
    out = Path(args.out)
    seqs = load_features(args.features, require=True)
    datasets = group_by_intersection(seqs)
    split_seed, init_seed, train_seed = derive_seeds(args.seed, 3)
    tc = _train_config(args, train_seed)
    vs = VariantSpec.from_name(args.variant, seqs[0].steps.shape[1])
    res = leave_one_out(datasets, vs, tc, SplitSpec(seed=split_seed))
    out.mkdir(parents=True, exist_ok=True)
    acc_path, cm_path = out / "loio_accuracy.csv", out / "loio_confusion.csv"
    with open(acc_path, "w", encoding="utf-8") as fh:
        fh.write("trained_on," + ",".join(res.names) + "\n")
        for name, row in zip(res.names, res.accuracy):
            fh.write(name + "," + ",".join(f"{100 * v:.2f}" for v in row) + "\n")
    outputs = [acc_path, cm_path]
    with open(cm_path, "w", encoding="utf-8") as fh:
        for i, src in enumerate(res.names):
            for j, dst in enumerate(res.names):
                write_confusion_csv(fh, res.confusion[i, j], f"trained on {src}, tested on {dst}")
                pgm = out / f"loio_{src}_{dst}.pgm"
                with open(pgm, "w", encoding="utf-8") as ph:
                    write_confusion_pgm(ph, res.confusion[i, j])
                outputs.append(pgm)
    write_manifest(out, "loio", {"variant": vs.name, "train": tc.to_dict(), "seed": args.seed,
                                 "split_seed": split_seed, "init_seed": init_seed},
                   inputs=[args.features], outputs=outputs)
    for name, row in zip(res.names, res.accuracy):
        print(f"trained on {name}: " + " ".join(f"{d}={100 * v:.2f}" for d, v in zip(res.names, row)))
    return EXIT_OK


def cmd_variants(args) -> int:
    out = Path(args.out)
    seqs = load_features(args.features, require=True)
    names = [VariantSpec.from_name(v).name for v in args.variants.split(";")] if args.variants \
        else list(VARIANTS)
    split_seed, _, train_seed = derive_seeds(args.seed, 3)
    tc = _train_config(args, train_seed)
    results = run_variants(seqs, names, tc, SplitSpec(seed=split_seed))
    out.mkdir(parents=True, exist_ok=True)
    table = out / "variants.csv"
    with open(table, "w", encoding="utf-8") as fh:
        write_results_table(fh, results)
    write_manifest(out, "variants", {"variants": names, "train": tc.to_dict(), "seed": args.seed,
                                     "split_seed": split_seed}, inputs=[args.features], outputs=[table])
    for r in results:
        _print_eval(r.name, r.evaluation)
    return EXIT_OK


def cmd_dump_adjacency(args) -> int:
    out = Path(args.out)
    seqs, inputs = _load_raw(args)
    if not seqs:
        raise DataError("no sequences survived extraction")
    chosen = range(len(seqs)) if args.sequence is None else [args.sequence]
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for si in chosen:
        if not 0 <= si < len(seqs):
            raise UsageError(f"sequence index {si} out of range (0..{len(seqs) - 1})")
        adj = build_sequence(seqs[si], args.mu)
        slots = sequence_slots(adj.mats)
        canvas = max(len(slots), 1)
        sub = out / f"seq{si:04d}"
        sub.mkdir(exist_ok=True)
        dens = sub / "density.csv"
        with open(dens, "w", encoding="utf-8") as fh:
            fh.write("frame,t,n,density\n")
            for fi, ((t, _), m) in enumerate(zip(seqs[si].frames, adj.mats)):
                fh.write(f"{fi},{float(t)!r},{m.n},{float(density(m))!r}\n")
                pgm = sub / f"frame{fi:04d}.pgm"
                with open(pgm, "w", encoding="utf-8") as ph:
                    write_pgm(ph, render_image(m, canvas, canvas, slots))
        outputs.append(dens)
    write_manifest(out, "dump-adjacency", {"mu": args.mu, "rate": args.rate,
                                           "min_users": args.min_users}, inputs, outputs)
    print(f"dumped {len(chosen)} sequence(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_ingest_flags(p):
    p.add_argument("--data", help="directory holding trajectories.csv, regions.json, annotations.csv")
    p.add_argument("--traj")
    p.add_argument("--regions")
    p.add_argument("--annotations")
    p.add_argument("--frame-rate", type=float, help="frame rate of pixel-schema trajectory files")
    p.add_argument("--meters-per-pixel", type=float, help="calibration for pixel-schema files")
    p.add_argument("--mu", type=float, default=10.0, help="proximity threshold in meters")
    p.add_argument("--rate", type=float, default=5.0, help="resampling rate in Hz")
    p.add_argument("--min-users", type=int, default=20)
    p.add_argument("--nearest", action="store_true", help="nearest-frame resampling")


def _add_train_flags(p):
    p.add_argument("--features", required=True)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.6, help="recurrent drop probability")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trafficgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic labelled trajectories")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--intersections", default="S", help="comma-separated intersection names")
    p.add_argument("--users-min", type=int, default=20)
    p.add_argument("--users-max", type=int, default=60)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=5.0)
    p.add_argument("--noise", type=float, default=0.5, help="positional jitter sigma (m)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="trajectories -> feature tensor file")
    _add_ingest_flags(p)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--canvas", type=int, default=110)
    p.add_argument("--img", type=int, default=56)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train one temporal network")
    _add_train_flags(p)
    p.add_argument("--variant", default="GRU(100,50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--seed", type=int, default=0, help="seed used for training (selects the split)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loio", help="leave-one-intersection-out protocol")
    _add_train_flags(p)
    p.add_argument("--variant", default="GRU-A(100,50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loio)

    p = sub.add_parser("variants", help="compare temporal networks on one split")
    _add_train_flags(p)
    p.add_argument("--variants", help="';'-separated variant names (default: all seven)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_variants)

    p = sub.add_parser("dump-adjacency", help="per-frame adjacency PGMs and density CSV")
    _add_ingest_flags(p)
    p.add_argument("--sequence", type=int, help="index of one sequence (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_adjacency)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"trafficgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownVariantError as exc:
        print(f"trafficgraph: error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"trafficgraph: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, TensorFileError, CheckpointError, OSError, ValueError) as exc:
        print(f"trafficgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

