"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric or training
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluate, imaging, network, panorama, training
from .distortion import RadialDistortion, manifold_k2
from .errors import DataError, DomainError, NumericError, RadistortError
from .weights_io import load_weights, save_weights

log = logging.getLogger("radistort")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the toolkit reserves 2 for data errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _size(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radistort",
                     description="Radial distortion synthesis, estimation, and compensation.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log verbosity")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads for parallel stages (0 = auto)")
    parser.add_argument("--seed", type=int, default=None, dest="global_seed",
                        help="override every subcommand seed")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("pano-gen", parents=[], help="write the procedural test panorama")
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--style", default="field")
    p.add_argument("--out", required=True)
    p.add_argument("--geometry", help="also write the marker geometry sidecar (JSON)")

    p = sub.add_parser("synth", help="generate a labelled distorted-crop dataset")
    p.add_argument("--pano", action="append", default=[],
                   help="panorama image path (repeatable); default: procedural panorama")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.add_argument("--workers", type=int, default=None,
                   help="render processes (default: --threads)")
    p.add_argument("--pan-range", type=float, nargs=2, default=(-35.0, 35.0))
    p.add_argument("--tilt-range", type=float, nargs=2, default=(-15.0, 0.0))
    p.add_argument("--roll-range", type=float, nargs=2, default=(-2.0, 2.0))
    p.add_argument("--fov-range", type=float, nargs=2, default=(15.0, 60.0))
    p.add_argument("--k1-range", type=float, nargs=2, default=(-0.7, 0.3))
    p.add_argument("--k2-sigma", type=float, default=0.02)
    p.add_argument("--render-size", type=_size, default=(256, 144))
    p.add_argument("--output-size", type=_size, default=(64, 64))

    p = sub.add_parser("train", help="train the coefficient estimator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--out", required=True, help="output weights file")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-size", type=int, default=64)

    p = sub.add_parser("predict", help="estimate (k1, k2) for images")
    p.add_argument("--weights", required=True)
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--json", action="store_true", help="one JSON record per image")
    p.add_argument("--manifest", help="predict a whole manifest instead of image paths")
    p.add_argument("--out", help="CSV output (with --manifest): truth and predictions")
    p.add_argument("images", nargs="*")

    p = sub.add_parser("rectify", help="undistort an image")
    p.add_argument("--k1", type=float)
    p.add_argument("--k2", type=float)
    p.add_argument("--weights", help="predict coefficients with a trained model")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("sweep", help="round-trip reprojection error sweep")
    p.add_argument("--k1-min", type=float, default=-0.7)
    p.add_argument("--k1-max", type=float, default=0.3)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ab-eval", help="direct k2 estimate vs manifold k2")
    p.add_argument("--manifest", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--weights", help="method A = trained model")
    p.add_argument("--oracle", action="store_true",
                   help="method A = ground truth (label-noise study)")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("hist", help="bin prediction errors per coefficient")
    p.add_argument("--pred", required=True,
                   help="CSV with k1_true,k2_true,k1_pred,k2_pred columns")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--out", required=True)

    p = sub.add_parser("straightness", help="marker-line sagitta of a rendered crop")
    p.add_argument("--image", required=True)
    p.add_argument("--geometry", required=True, help="marker sidecar JSON")
    p.add_argument("--min-pixels", type=int, default=40)

    return parser


def _cmd_pano_gen(args) -> int:
    pano = panorama.procedural_panorama(args.width, args.height, args.style)
    imaging.write_image(args.out, pano)
    if args.geometry:
        Path(args.geometry).write_text(json.dumps(panorama.marker_geometry(), indent=2) + "\n")
    log.info("wrote %dx%d panorama to %s", args.width, args.height, args.out)
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = panorama.SamplingSpec(
        pan_range=tuple(args.pan_range), tilt_range=tuple(args.tilt_range),
        roll_range=tuple(args.roll_range), fov_range=tuple(args.fov_range),
        k1_range=tuple(args.k1_range), k2_sigma=args.k2_sigma,
        render_size=tuple(args.render_size), output_size=tuple(args.output_size),
        seed=args.seed,
    )
    if args.pano:
        panos = [imaging.read_image(p) for p in args.pano]
    else:
        log.info("no panoramas given; using the procedural panorama")
        panos = [panorama.procedural_panorama(2048, 1024)]
    workers = args.workers if args.workers is not None else args.threads
    manifest = panorama.generate_dataset(panos, spec, args.count, args.out,
                                         fmt=args.format, workers=workers)
    manifest_path = Path(args.out) / "manifest.jsonl"
    digest = panorama.manifest_sha256(manifest_path)
    print(f"wrote {len(manifest.records)} crops to {args.out}")
    print(f"manifest sha256 {digest}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = network.NetworkConfig(input_size=args.input_size)
    tc = training.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                              epochs=args.epochs, seed=args.seed)
    dataset = training.load_dataset(args.manifest, args.data_dir, args.input_size)
    val = None
    if args.val_manifest:
        val = training.load_dataset(args.val_manifest, args.data_dir, args.input_size)
    w0 = network.init_weights(cfg, seed=args.seed)

    def log_entry(entry):
        val_txt = "" if entry["val_loss"] is None else f"  val {entry['val_loss']:.6g}"
        print(f"epoch {entry['epoch']:3d}  train {entry['train_loss']:.6g}{val_txt}")

    weights, _ = training.train(w0, dataset, tc, cfg, val_dataset=val, log_fn=log_entry)
    save_weights(args.out, weights)
    print(f"wrote weights to {args.out}")
    return EXIT_OK


def _load_model_weights(path, input_size):
    cfg = network.NetworkConfig(input_size=input_size)
    return cfg, load_weights(path)


def _cmd_predict(args) -> int:
    cfg, weights = _load_model_weights(args.weights, args.input_size)
    if args.manifest:
        dataset = training.load_dataset(args.manifest, None, args.input_size)
        preds = training.predict_dataset(weights, dataset, cfg)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write("k1_true,k2_true,k1_pred,k2_pred\n")
                for (t1, t2), (p1, p2) in zip(dataset.labels, preds):
                    fh.write(f"{t1:.9g},{t2:.9g},{p1:.9g},{p2:.9g}\n")
            print(f"wrote predictions to {args.out}")
        else:
            for (p1, p2) in preds:
                print(f"{p1:.9g} {p2:.9g}")
        return EXIT_OK
    if not args.images:
        raise DataError("no images given (pass image paths or --manifest)")
    for path in args.images:
        img = imaging.read_image(path)
        if img.shape[0] != args.input_size or img.shape[1] != args.input_size:
            img = imaging.resize_bilinear(img, args.input_size, args.input_size)
        k1, k2 = network.predict(weights, img, cfg)
        if args.json:
            print(json.dumps({"file": str(path), "k1": k1, "k2": k2}))
        else:
            print(f"{path} k1={k1:.9g} k2={k2:.9g}")
    return EXIT_OK


def _cmd_rectify(args) -> int:
    img = imaging.read_image(args.input)
    if args.weights:
        cfg, weights = _load_model_weights(args.weights, args.input_size)
        small = imaging.resize_bilinear(img, args.input_size, args.input_size)
        k1, k2 = network.predict(weights, small, cfg)
        print(f"predicted k1={k1:.9g} k2={k2:.9g}")
    elif args.k1 is not None and args.k2 is not None:
        k1, k2 = args.k1, args.k2
    else:
        raise DataError("rectify needs --k1 and --k2, or --weights")
    out = imaging.rectify(img, RadialDistortion(k1, k2))
    imaging.write_image(args.output, out)
    print(f"wrote rectified image to {args.output}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    result = evaluate.reprojection_sweep(args.k1_min, args.k1_max, args.steps)
    evaluate.write_sweep_csv(result, args.out)
    worst = max(row[2] for row in result.rows)
    print(f"wrote {len(result.rows)} rows to {args.out} (worst max error {worst:.6g})")
    return EXIT_OK


def _cmd_ab_eval(args) -> int:
    if bool(args.weights) == bool(args.oracle):
        raise DataError("ab-eval needs exactly one of --weights or --oracle")
    dataset = training.load_dataset(args.manifest, args.data_dir, args.input_size)
    labels = dataset.labels.astype(float)
    if args.oracle:
        preds_a = labels.copy()
    else:
        cfg, weights = _load_model_weights(args.weights, args.input_size)
        preds_a = training.predict_dataset(weights, dataset, cfg).astype(float)
    preds_b = evaluate.manifold_predictor(preds_a)
    report = evaluate.ab_compare(preds_a, preds_b, labels)
    evaluate.write_ab_csv(report, args.out)
    print(f"A wins {report.win_rate_a:.1%} of {len(report.rows)} images")
    return EXIT_OK


def _cmd_hist(args) -> int:
    try:
        table = np.genfromtxt(args.pred, delimiter=",", names=True)
        preds = np.stack([table["k1_pred"], table["k2_pred"]], axis=-1).reshape(-1, 2)
        labels = np.stack([table["k1_true"], table["k2_true"]], axis=-1).reshape(-1, 2)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read predictions CSV {args.pred}: {exc}") from exc
    report = evaluate.error_histogram(preds, labels, bins=args.bins)
    evaluate.write_hist_csv(report, args.out)
    for name, s in report.stats.items():
        print(f"{name}: mean {s['mean']:.6g}  median {s['median']:.6g}  std {s['std']:.6g}")
    return EXIT_OK


def _cmd_straightness(args) -> int:
    img = imaging.read_image(args.image)
    try:
        geometry = json.loads(Path(args.geometry).read_text())
        markers = geometry["markers"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot read geometry sidecar {args.geometry}: {exc}") from exc
    results = evaluate.straightness_check(img, markers, min_pixels=args.min_pixels,
                                          skip_missing=True)
    for name, sagitta in sorted(results.items()):
        print(f"{name}: sagitta {sagitta:.3f} px")
    print(f"max sagitta {max(results.values()):.3f} px")
    return EXIT_OK


_COMMANDS = {
    "pano-gen": _cmd_pano_gen,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "rectify": _cmd_rectify,
    "sweep": _cmd_sweep,
    "ab-eval": _cmd_ab_eval,
    "hist": _cmd_hist,
    "straightness": _cmd_straightness,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.global_seed is not None and hasattr(args, "seed"):
        args.seed = args.global_seed
    if args.threads > 0:
        import torch

        torch.set_num_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"radistort: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DomainError) as exc:
        print(f"radistort: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RadistortError as exc:
        print(f"radistort: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
