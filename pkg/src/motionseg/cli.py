"""Command-line entry point: ``motionseg {encode,train,crossval,predict,rfs,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoint, ingest, motion_image, network, synth, trainer
from .network import NetworkConfig
from .optimizer import AdamHyper

log = logging.getLogger("motionseg")

PUBLISHED_RFS_W3 = 342


# -- argument types ----------------------------------------------------------


def _odd_width(text):
    v = _positive_int(text)
    if v % 2 == 0:
        raise argparse.ArgumentTypeError(f"width must be odd, got {v}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _unit_open(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


def _probability(text):
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


def _add_model_flags(p):
    p.add_argument("--width", type=_odd_width, default=3, help="convolution width w (odd)")
    p.add_argument("--channels", type=_positive_int, default=64, help="hidden channels C")
    p.add_argument("--classes", type=_positive_int, default=None,
                   help="class count K (default: size of classes.txt)")
    p.add_argument("--epochs", type=_nonneg_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--beta1", type=_unit_open, default=0.9)
    p.add_argument("--beta2", type=_unit_open, default=0.999)
    p.add_argument("--adam-eps", type=_positive_float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="render a motion image (and label strip) as PPM")
    p.add_argument("motion", help=".bvh or .pos file")
    p.add_argument("--labels", help="label file, one class id per line")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--scale", type=_positive_int, default=1, help="pixel replication factor")
    p.add_argument("--strip-height", type=_positive_int, default=10)

    p = sub.add_parser("train", help="train on every sequence of a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="report path (default: <out>.report.jsonl)")
    _add_model_flags(p)

    p = sub.add_parser("crossval", help="contiguous k-fold cross-validation")
    p.add_argument("manifest")
    p.add_argument("--folds", type=_positive_int, default=7)
    p.add_argument("--noise", type=_probability, default=0.0,
                   help="per-frame training label corruption probability")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1, help="folds trained in parallel")
    p.add_argument("--report", required=True, help="report path (JSON lines)")
    _add_model_flags(p)

    p = sub.add_parser("predict", help="label every frame of a motion file")
    p.add_argument("checkpoint")
    p.add_argument("motion", help=".bvh or .pos file")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--labels", help="true label file; enables accuracy and truth strip")
    p.add_argument("--strip-height", type=_positive_int, default=10)

    p = sub.add_parser("rfs", help="receptive field size and parameter count")
    p.add_argument("--width", type=_odd_width, required=True)
    p.add_argument("--layers", type=_positive_int, default=5)
    p.add_argument("--joints", type=_positive_int, default=19)
    p.add_argument("--channels", type=_positive_int, default=64)
    p.add_argument("--classes", type=_positive_int, default=10)

    p = sub.add_parser("synth", help="write a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    defaults = synth.SynthSpec()
    p.add_argument("--sequences", type=int, default=defaults.n_sequences)
    p.add_argument("--min-frames", type=int, default=defaults.min_frames)
    p.add_argument("--max-frames", type=int, default=defaults.max_frames)
    p.add_argument("--joints", type=int, default=defaults.J)
    p.add_argument("--classes", type=int, default=defaults.K)
    p.add_argument("--min-segment", type=int, default=defaults.min_segment)
    p.add_argument("--max-segment", type=int, default=defaults.max_segment)
    p.add_argument("--noise-std", type=float, default=defaults.noise_std)
    p.add_argument("--drift", type=float, default=defaults.drift)
    p.add_argument("--seed", type=int, default=defaults.seed)
    return parser


# -- helpers -----------------------------------------------------------------


def _flags(args) -> dict:
    # output destinations are not experiment parameters
    skip = {"verbose", "report", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load_training_data(args):
    data = ingest.load_dataset(args.manifest)
    if not data:
        raise ValueError(f"{args.manifest}: manifest lists no sequences")
    K_map = len(ingest.read_class_map(ingest.class_map_path(args.manifest)))
    K = args.classes if args.classes is not None else K_map
    if K != K_map:
        raise ValueError(f"--classes {K} disagrees with class map ({K_map} classes)")
    joints = {s.motion.joint_count for s in data}
    if len(joints) != 1:
        raise ValueError(f"sequences have differing joint counts: {sorted(joints)}")
    config = NetworkConfig(w=args.width, J=joints.pop(), K=K, C=args.channels)
    hyper = AdamHyper(args.lr, args.beta1, args.beta2, args.adam_eps)
    return data, config, hyper


def _write_strip(path, labels, K, height):
    Path(path).write_bytes(
        motion_image.render_label_strip(labels, motion_image.default_palette(K), height)
    )


# -- commands ----------------------------------------------------------------


def cmd_encode(args):
    seq = ingest.load_motion(args.motion)
    spec = motion_image.fit_scaling([seq])
    img = motion_image.encode(seq, spec)
    out = Path(f"{args.out}.motion.ppm")
    out.write_bytes(motion_image.render_image(img, args.scale))
    print(f"J: {seq.joint_count}")
    print(f"T: {seq.frame_count}")
    for axis, lo, hi in zip("xyz", spec.minimum, spec.maximum):
        print(f"{axis} range: [{float(lo)!r}, {float(hi)!r}]")
    print(f"wrote {out}")
    if args.labels:
        labels = ingest.read_labels(args.labels)
        if labels.size != seq.frame_count:
            raise ValueError(f"{args.labels}: {labels.size} labels for {seq.frame_count} frames")
        strip = Path(f"{args.out}.labels.ppm")
        _write_strip(strip, labels, int(labels.max()) + 1, args.strip_height)
        print(f"wrote {strip}")


def cmd_train(args):
    data, config, hyper = _load_training_data(args)
    log.info("training on %d sequences, %d epochs", len(data), args.epochs)
    result = trainer.train_one(config, hyper, data, args.epochs, args.seed)
    checkpoint.save(
        args.out, checkpoint.Checkpoint(config, result.params, result.scaling, hyper, result.state)
    )
    correct, total = trainer.evaluate(result.params, config, data, result.scaling)
    report = Path(args.report or f"{args.out}.report.jsonl")
    records = [
        {"type": "header", "schema": trainer.REPORT_SCHEMA, "command": "train", "flags": _flags(args)},
        {
            "type": "train",
            "config": config.to_dict(),
            "config_digest": trainer.config_digest(config.to_dict()),
            "losses": result.losses,
            "train_accuracy": correct / total,
            "seed": args.seed,
        },
    ]
    report.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
    if result.losses:
        print(f"final loss: {result.losses[-1]!r}")
    print(f"train accuracy: {correct / total!r}")
    print(f"wrote {args.out}")
    print(f"wrote {report}")


def cmd_crossval(args):
    data, config, hyper = _load_training_data(args)
    if args.folds > len(data):
        raise ValueError(f"--folds {args.folds} exceeds the {len(data)} sequences in the manifest")
    if args.folds < 2:
        raise ValueError("--folds must be >= 2 so every fold has training data")
    folds = trainer.make_folds(len(data), args.folds)
    noise = trainer.NoiseSpec(args.noise, args.noise_seed) if args.noise > 0 else None
    reports = trainer.cross_validate(
        config, hyper, data, folds, args.epochs, noise, args.seed, args.workers
    )
    trainer.write_report(args.report, reports, _flags(args))
    for r in reports:
        print(f"fold {r.fold}: train {r.train_accuracy:.4f}  test {r.test_accuracy:.4f}")
    summary = trainer.pooled(reports)
    print(f"pooled train accuracy: {summary['train_accuracy']:.4f}")
    print(f"pooled test accuracy: {summary['test_accuracy']:.4f}")
    print(f"wrote {args.report}")


def cmd_predict(args):
    ckpt = checkpoint.load(args.checkpoint)
    if ckpt.scaling is None:
        raise ValueError(f"{args.checkpoint}: checkpoint has no stored scaling")
    seq = ingest.load_motion(args.motion)
    if seq.joint_count != ckpt.config.J:
        raise ValueError(
            f"{args.motion} has J={seq.joint_count} joints but checkpoint expects J={ckpt.config.J}"
        )
    img = motion_image.encode(seq, ckpt.scaling)
    pred = network.predict(ckpt.params, img, ckpt.config)
    label_path = Path(f"{args.out}.pred.labels")
    ingest.write_labels(label_path, pred)
    _write_strip(f"{args.out}.pred.ppm", pred, ckpt.config.K, args.strip_height)
    print(f"wrote {label_path}")
    print(f"wrote {args.out}.pred.ppm")
    if args.labels:
        truth = ingest.read_labels(args.labels)
        if truth.size != pred.size:
            raise ValueError(f"{args.labels}: {truth.size} labels for {pred.size} frames")
        if truth.size and (truth.min() < 0 or truth.max() >= ckpt.config.K):
            raise ValueError(f"{args.labels}: class ids must lie in [0, {ckpt.config.K})")
        _write_strip(f"{args.out}.truth.ppm", truth, ckpt.config.K, args.strip_height)
        print(f"wrote {args.out}.truth.ppm")
        print(f"accuracy: {trainer.frame_accuracy(pred, truth)!r}")


def cmd_rfs(args):
    rfs = network.receptive_field(args.width, args.layers)
    config = NetworkConfig(w=args.width, J=args.joints, K=args.classes, C=args.channels,
                           L_dilated=args.layers - 1)
    print(f"RFS: {rfs}")
    print(f"parameters: {network.count_params(config)}")
    if args.width == 3 and args.layers == 5:
        print(f"note: w=3 over five layers gives 3**5 = {rfs}; "
              f"the published figure prints {PUBLISHED_RFS_W3}, which this formula does not produce")


def cmd_synth(args):
    if args.sequences < 1:
        raise ValueError(f"--sequences must be >= 1, got {args.sequences}")
    spec = synth.SynthSpec(
        n_sequences=args.sequences, min_frames=args.min_frames, max_frames=args.max_frames,
        J=args.joints, K=args.classes, min_segment=args.min_segment,
        max_segment=args.max_segment, noise_std=args.noise_std, drift=args.drift, seed=args.seed,
    )
    data = synth.generate(spec)
    manifest = synth.export(data, args.out, [f"class{c}" for c in range(spec.K)])
    (Path(args.out) / "synth.json").write_text(json.dumps(spec.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {len(data)} sequences")
    print(f"wrote {manifest}")


COMMANDS = {
    "encode": cmd_encode,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "predict": cmd_predict,
    "rfs": cmd_rfs,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
