"""Operator command surface.

Exit codes: 0 success, 1 usage/config error, 2 partial failure (some inputs
unreadable or rejected). Every command accepts --config and --seed; without
--seed the documented default seed 0 is used, never wall-clock entropy.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import augment as aug
from . import classifier as clf
from . import localizer as loc
from . import metrics, pipeline
from .config import DEFAULT_SEED, RunConfig
from .core.io import build_manifest_from_dirs, load_cifar_binary, load_png, save_png
from .core.types import DatasetManifest, Label, RngStream
from .nn.serialize import ModelFormatError, load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class CliError(RuntimeError):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help=f"rng seed (default {DEFAULT_SEED})")
    p.add_argument("--out", type=str, default=None, help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="artifact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a dataset manifest from PNG folders or CIFAR binaries")
    p.add_argument("src", help="source directory (real/ fake/ PNG layout) or CIFAR binary file")
    p.add_argument("--format", choices=("png-dirs", "cifar-binary"), default="png-dirs")
    p.add_argument("--out-manifest", required=True, help="manifest path to write")
    p.add_argument("--label-map", default="0=real,1=fake",
                   help="label byte mapping for cifar-binary, e.g. '0=real,1=fake'")
    _add_common(p)

    p = sub.add_parser("calibrate", help="derive detector thresholds from clean real images")
    p.add_argument("manifest")
    p.add_argument("--out-thresholds", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train the real/fake classifier")
    p.add_argument("manifest")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--perturb", choices=("none", "default"), default="none",
                   help="apply the 9-generator pipeline during training")
    _add_common(p)

    p = sub.add_parser("train-ae", help="train the real-only reconstruction autoencoder")
    p.add_argument("manifest")
    p.add_argument("--epochs", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("augment", help="write a perturbed copy of a dataset")
    p.add_argument("manifest")
    p.add_argument("--model", default=None, help="classifier for adversarial specs")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a trained classifier on a manifest")
    p.add_argument("manifest")
    p.add_argument("--model", required=True)
    _add_common(p)

    p = sub.add_parser("analyze", help="full per-image analysis: classify, localize, explain")
    p.add_argument("inputs", nargs="+", help="PNG files or directories of PNGs")
    p.add_argument("--classifier", required=True)
    p.add_argument("--autoencoder", required=True)
    p.add_argument("--thresholds", default=None, help="thresholds JSON from `calibrate`")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: cores)")
    p.add_argument("--resize", choices=("auto", "error"), default=None,
                   help="non-32x32 handling (default auto, with a warning)")
    p.add_argument("--vlm-endpoint", default=None, help="chat-completion URL for explanations")
    p.add_argument("--scorer", choices=("prior", "remote"), default=None)
    p.add_argument("--remote-endpoint", default=None, help="embedding endpoint for --scorer remote")
    _add_common(p)

    return parser


def _seed_of(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    return cfg["seed"]


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    out = Path(args.out) if args.out else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_manifest(path: str) -> DatasetManifest:
    if not Path(path).exists():
        raise CliError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def _pipeline_from_config(cfg: RunConfig) -> list[aug.PerturbationSpec]:
    if cfg["augment"] is None:
        return aug.default_pipeline()
    return aug.pipeline_from_json(cfg["augment"])


def cmd_ingest(args: argparse.Namespace, cfg: RunConfig) -> int:
    out_manifest = Path(args.out_manifest)
    if args.format == "png-dirs":
        manifest = build_manifest_from_dirs(args.src)
    else:
        mapping: dict[int, Label] = {}
        for part in args.label_map.split(","):
            byte, _, name = part.partition("=")
            mapping[int(byte)] = Label.from_string(name)
        records = load_cifar_binary(args.src, mapping)
        if not records:
            raise CliError(f"{args.src}: no records")
        out_dir = _out_dir(args, str(out_manifest.parent / "images"))
        entries: list[tuple[str, Label]] = []
        for i, rec in enumerate(records):
            dest = out_dir / rec.label.value / f"rec_{i:06d}.png"
            save_png(rec.image, dest)
            entries.append((str(dest), rec.label))
        manifest = DatasetManifest(entries=entries)
    out_manifest.parent.mkdir(parents=True, exist_ok=True)
    manifest.save(out_manifest)
    counts = manifest.class_counts()
    print(f"ingested {len(manifest)} entries -> {out_manifest} "
          f"(real: {counts['real']}, fake: {counts['fake']})")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    if not manifest.entries:
        raise CliError("calibration manifest is empty")
    seed = _seed_of(args, cfg)
    images = [load_png(p) for p, _ in manifest.entries]
    thresholds = metrics.calibrate_thresholds(images, RngStream(seed))
    thresholds.save(args.out_thresholds)
    if args.out:
        cfg.echo(args.out, "calibrate", {"seed": seed, "manifest": args.manifest})
    print(f"calibrated thresholds over {len(images)} images -> {args.out_thresholds}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    seed = _seed_of(args, cfg)
    overrides = dict(cfg["train"])
    overrides["seed"] = seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    tcfg = clf.TrainConfig(**overrides)
    perturb = _pipeline_from_config(cfg) if args.perturb == "default" else []
    model, history = clf.train_classifier(manifest, tcfg, perturb)
    out = _out_dir(args, "train_out")
    save_model(model, out / "classifier.model")
    clf.history_to_csv(history, out / "history.csv")
    cfg.echo(out, "train", {"seed": seed, "manifest": args.manifest,
                            "perturb": args.perturb, "train_config": tcfg.to_dict()})
    final = history[-1]
    print(f"trained classifier ({model.param_count()} params) -> {out / 'classifier.model'}")
    print(f"epochs run: {len(history)}, best epoch: {model.metadata['epochs_trained']}, "
          f"final val_acc: {final['val_acc']:.4f}")
    return EXIT_OK


def cmd_train_ae(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    seed = _seed_of(args, cfg)
    overrides = dict(cfg["autoencoder"])
    overrides["seed"] = seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    acfg = loc.AutoencoderTrainConfig(**overrides)
    model, history = loc.train_autoencoder(manifest, acfg)
    out = _out_dir(args, "train_ae_out")
    save_model(model, out / "autoencoder.model")
    cfg.echo(out, "train-ae", {"seed": seed, "manifest": args.manifest})
    print(f"trained autoencoder -> {out / 'autoencoder.model'} "
          f"(final recon loss {history[-1]['train_loss']:.6f})")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    seed = _seed_of(args, cfg)
    specs = _pipeline_from_config(cfg)
    model = None
    if any(s.kind is aug.PerturbationKind.ADVERSARIAL_NOISE for s in specs):
        if not args.model:
            raise CliError("pipeline contains adversarial noise; pass --model CLASSIFIER")
        model = load_model(args.model)
    out = _out_dir(args, "augmented")
    rng = RngStream(seed).derive(0xAB6)
    entries: list[tuple[str, Label]] = []
    records = []
    for i, (path, label) in enumerate(manifest.entries):
        img = load_png(path)
        perturbed = aug.apply_pipeline(img, specs, rng.derive(i), model=model)
        dest = out / label.value / f"aug_{i:06d}.png"
        save_png(perturbed, dest)
        entries.append((str(dest), label))
        records.append({"src": path, "dst": str(dest), "label": label.value})
    DatasetManifest(entries=entries).save(out / "manifest.jsonl")
    (out / "provenance.jsonl").write_text(
        "\n".join(json.dumps(r, sort_keys=True) for r in records) + "\n")
    cfg.echo(out, "augment", {"seed": seed, "manifest": args.manifest,
                              "pipeline": aug.pipeline_to_json(specs)})
    print(f"augmented {len(entries)} images -> {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    if not Path(args.model).exists():
        raise CliError(f"model not found: {args.model}")
    model = load_model(args.model)
    result = clf.evaluate(model, manifest)
    out = _out_dir(args, "eval_out")
    (out / "eval.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    cfg.echo(out, "eval", {"manifest": args.manifest, "model": args.model})
    print(f"accuracy: {result.accuracy:.4f} over {len(result.predictions)} images "
          f"({len(result.unreadable)} unreadable)")
    print(f"confusion: {result.confusion}")
    print(f"median inference: {result.median_infer_ms:.2f} ms/image")
    return EXIT_PARTIAL if result.unreadable else EXIT_OK


def _collect_inputs(inputs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.png")))
        else:
            paths.append(p)
    return paths


def cmd_analyze(args: argparse.Namespace, cfg: RunConfig) -> int:
    overrides: dict = {"analyze": {}, "taxonomy": {}, "explain": {}}
    if args.resize:
        overrides["analyze"]["resize"] = args.resize
    if args.workers is not None:
        overrides["analyze"]["workers"] = args.workers
    if args.scorer:
        overrides["taxonomy"]["scorer"] = args.scorer
    if args.remote_endpoint:
        overrides["taxonomy"]["remote_endpoint"] = args.remote_endpoint
    if args.vlm_endpoint:
        overrides["explain"]["vlm_endpoint"] = args.vlm_endpoint
    cfg = RunConfig.load(args.config, overrides)

    for name, path in (("classifier", args.classifier), ("autoencoder", args.autoencoder)):
        if not Path(path).exists():
            raise CliError(f"{name} model not found: {path}")
    classifier = load_model(args.classifier)
    autoencoder = load_model(args.autoencoder)
    thresholds = (metrics.ThresholdConfig.load(args.thresholds) if args.thresholds
                  else metrics.ThresholdConfig(
                      thresholds=cfg["thresholds"]) if cfg["thresholds"]
                  else metrics.ThresholdConfig())

    paths = _collect_inputs(args.inputs)
    if not paths:
        raise CliError("no input images found")
    seed = _seed_of(args, cfg)
    out = _out_dir(args, "analysis")

    outcomes = pipeline.run_analyze(
        paths, classifier, autoencoder, thresholds, cfg, seed, out,
        workers=cfg["analyze"]["workers"],
        warn=lambda msg: print(f"warning: {msg}", file=sys.stderr),
    )
    cfg.echo(out, "analyze", {"seed": seed, "inputs": [str(p) for p in paths]})

    print(f"{'image':<40} {'verdict':<8} {'confidence':<11} {'ms(classify+metrics)'}")
    failures = 0
    for o in outcomes:
        name = Path(o.source).name
        if o.ok:
            print(f"{name:<40} {o.verdict:<8} {o.confidence:<11.4f} "
                  f"{o.classify_ms + o.metrics_ms:.1f}")
        else:
            failures += 1
            print(f"{name:<40} {'ERROR':<8} {o.error}")
    print(f"{len(outcomes) - failures}/{len(outcomes)} analyzed -> {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


_HANDLERS = {
    "ingest": cmd_ingest,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "train-ae": cmd_train_ae,
    "augment": cmd_augment,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig.load(args.config)
        return _HANDLERS[args.command](args, cfg)
    except (CliError, ValueError, FileNotFoundError, ModelFormatError) as exc:
        print(f"artifact {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
