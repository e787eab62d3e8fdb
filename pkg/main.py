#!/usr/bin/env python3
"""
WaveProbe - Main Entry Point

Usage:
    # Full config-driven pipeline
    python main.py run --config config/config.example.yaml --out ./output

    # Individual steps
    python main.py gen-data --out ./data
    python main.py init-model --out ./model --seed 0
    python main.py decompose --image data/images/syn-000-0000.tnsr --out ./coeffs
    python main.py cache --model model/model.vitw --manifest data/manifest.csv --out ./cache
    python main.py train --model model/model.vitw --cache ./cache --mode convex --out ./train
    python main.py eval --model model/model.vitw --cache ./cache --composition train/composition_convex.yaml
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from composer.records import read_composition, write_composition
from composer.training import train
from core.config import ExperimentConfig, MAX_LEVELS, configure_logging, load_config
from core.errors import DataError, ProbeError, UsageError, exit_code_for
from core.models import (
    ConstraintMode,
    Reference,
    WaveletName,
    error_report_to_dict,
    eval_row_to_dict,
)
from core.tensor_io import save_tensor
from vit.encoder import Model, init_random
from vit.weights import read_weights, write_weights
from wavelets.decomposition import basis_filters, decompose, primitive_images
from workflows.caching import cache_primitive_cls, load_cache
from workflows.datasets import (
    generate_synthetic_dataset,
    load_manifest,
    read_image,
    split_labels,
    write_dataset,
    write_ppm,
)
from workflows.distortions import distort_compress, distort_noise
from workflows.evaluation import (
    ORIGINAL,
    SUMMED,
    error_breakdown,
    eval_accuracy,
    predictions,
    reference_labels,
    reweight_image,
)
from workflows.orchestrator import run_experiment
from workflows.reports import layerwise_cka_report, ssim_map_report, write_csv, write_json, write_ssim_maps

logger = logging.getLogger(__name__)


def print_banner():
    """Print the startup banner."""
    print("""
╔══════════════════════════════════════════════════════════════════╗
║                           WaveProbe                               ║
║                                                                   ║
║  Do ViT representations compose over wavelet subbands?            ║
║    decompose -> cache -> train -> evaluate -> report              ║
╚══════════════════════════════════════════════════════════════════╝
""")


class ProbeArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


# =============================================================================
# Helpers
# =============================================================================

def _out(args) -> Path:
    output_dir = Path(args.out)
    output_dir.mkdir(parents=True, exist_ok=True)
    return output_dir


def _model(args, config: ExperimentConfig) -> Model:
    if args.model:
        return read_weights(args.model)
    return init_random(config.model_config, config.model_seed)


def _bundle_split(args, config: ExperimentConfig, model: Model):
    header, bundles = load_cache(args.cache, model)
    labels = np.array(header["labels"], dtype=np.int64)
    parts = split_labels(labels, model.config.num_classes, config.split_seed)
    return header, bundles, parts


def _levels(value: str) -> int:
    levels = int(value)
    if not 1 <= levels <= MAX_LEVELS:
        raise argparse.ArgumentTypeError(f"levels must be in [1, {MAX_LEVELS}]")
    return levels


# =============================================================================
# Commands
# =============================================================================

def cmd_gen_data(args, config: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else config.synthetic_seed
    dataset = generate_synthetic_dataset(
        args.classes or config.num_classes,
        args.per_class or config.synthetic_per_class,
        args.size or config.image_size,
        seed,
        args.channels or config.channels,
    )
    manifest = write_dataset(dataset, _out(args), args.format)
    print(f"✅ {len(dataset)} images written")
    print(f"📄 Manifest: {manifest}")
    return 0


def cmd_init_model(args, config: ExperimentConfig) -> int:
    seed = args.seed if args.seed is not None else config.model_seed
    model = init_random(config.model_config, seed)
    path = write_weights(_out(args) / "model.vitw", model)
    print(f"✅ Model initialized with seed {seed}")
    print(f"📄 Weights: {path}")
    print(f"🔑 Fingerprint: {model.fingerprint()}")
    return 0


def cmd_decompose(args, config: ExperimentConfig) -> int:
    image = read_image(args.image)
    tree = decompose(image, basis_filters(args.basis or config.basis), args.levels or config.levels)
    primitives = primitive_images(tree)
    output_dir = _out(args)
    index = []
    for (subband, block), (_, primitive) in zip(tree.subbands(), primitives):
        save_tensor(output_dir / f"coeff_{subband.label}.tnsr", block)
        save_tensor(output_dir / f"primitive_{subband.label}.tnsr", primitive)
        index.append({
            "subband": subband.label,
            "shape": list(block.shape),
            "energy": np.sum(block ** 2, axis=(0, 1)).tolist(),
        })
    write_json(output_dir / "index.json", {"basis": tree.basis.name.value, "levels": tree.levels, "subbands": index})
    print(f"✅ {len(primitives)} primitives written to {output_dir}")
    return 0


def cmd_cache(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    dataset = load_manifest(args.manifest, model.config.num_classes)
    layer = args.layer or config.layer or model.config.num_layers
    bundles = cache_primitive_cls(
        model,
        dataset.items,
        WaveletName(args.basis or config.basis),
        args.levels or config.levels,
        layer,
        cache_dir=_out(args),
        workers=config.workers,
    )
    print(f"✅ Cached {len(bundles)} images ({bundles[0].num_primitives} primitives each) in {args.out}")
    return 0


def cmd_train(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    header, bundles, parts = _bundle_split(args, config, model)
    hyper = config.training
    if args.seed is not None:
        hyper = replace(hyper, seed=args.seed)
    modes = [ConstraintMode(args.mode)] if args.mode else config.constraint_modes
    output_dir = _out(args)
    for mode in modes:
        composition = train(
            model,
            [bundles[i] for i in parts.train],
            [bundles[i] for i in parts.val],
            mode,
            hyper,
            WaveletName(header["basis"]),
            header["levels"],
            header["layer"],
        )
        path = write_composition(output_dir / f"composition_{mode.value}.yaml", composition)
        weights = ", ".join(f"{w:.4f}" for w in composition.weights)
        print(f"✅ {mode.value}: best epoch {composition.best_epoch}, weights [{weights}]")
        print(f"📄 {path}")
    return 0


def cmd_eval(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    _, bundles, parts = _bundle_split(args, config, model)
    test = [bundles[i] for i in parts.test]
    rows = [eval_accuracy(model, ORIGINAL, test, ORIGINAL), eval_accuracy(model, SUMMED, test, SUMMED)]
    for path in args.composition or []:
        composition = read_composition(path)
        rows.append(eval_accuracy(model, composition, test, composition.mode.value))
    table = [eval_row_to_dict(r) for r in rows]
    for row in table:
        print(f"  {row['condition']:<16} acc_gt {row['acc_gt']}  acc_relative {row['acc_relative']}  n {row['n']}")
    if args.out:
        write_csv(_out(args) / "table_accuracy.csv", ("condition", "acc_gt", "acc_relative", "n"), table)
    return 0


def cmd_errors(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    _, bundles, parts = _bundle_split(args, config, model)
    test = [bundles[i] for i in parts.test]
    composition = read_composition(args.composition)
    report = error_breakdown(
        predictions(model, composition, test),
        predictions(model, ORIGINAL, test),
        reference_labels(test, Reference.GROUND_TRUTH),
    )
    row = error_report_to_dict(report, composition.mode.value)
    for key, value in row.items():
        print(f"  {key:<22} {value}")
    if args.out:
        write_csv(_out(args) / "errors.csv", tuple(row), [row])
    return 0


def cmd_reweight(args, config: ExperimentConfig) -> int:
    composition = read_composition(args.composition)
    image = read_image(args.image)
    primitives = primitive_images(decompose(image, basis_filters(composition.basis), composition.levels))
    reweighted = reweight_image(primitives, composition.weights)
    output_dir = _out(args)
    save_tensor(output_dir / "reweighted.tnsr", reweighted)
    clamped = write_ppm(output_dir / "reweighted.ppm", reweighted)
    print(f"✅ Reweighted image written to {output_dir}" + (" (clamped for 8-bit export)" if clamped else ""))
    return 0


def cmd_distort(args, config: ExperimentConfig) -> int:
    image = read_image(args.image)
    output_dir = _out(args)
    seed = args.seed if args.seed is not None else config.noise_seed
    sigma = args.sigma if args.sigma is not None else config.noise_sigma
    quality = args.quality if args.quality is not None else config.compress_quality
    save_tensor(output_dir / "noisy.tnsr", distort_noise(image, sigma, seed))
    save_tensor(output_dir / "compressed.tnsr", distort_compress(image, quality))
    print(f"✅ Noisy (sigma={sigma}) and compressed (quality={quality}) images written to {output_dir}")
    return 0


def cmd_cka(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    composition = read_composition(args.composition)
    dataset = load_manifest(args.manifest, model.config.num_classes)
    images = [item.image for item in dataset.items[: args.samples or config.cka_samples]]
    filters = basis_filters(composition.basis)
    rows = layerwise_cka_report(model, composition.weights, images, filters, composition.levels)
    table = [
        {"mode": composition.mode.value, "layer": r.layer, "summed": f"{r.summed:.6f}", "learned": f"{r.learned:.6f}"}
        for r in rows
    ]
    for row in table:
        print(f"  layer {row['layer']}: summed {row['summed']}  learned {row['learned']}")
    if args.out:
        write_csv(_out(args) / "cka_layers.csv", ("mode", "layer", "summed", "learned"), table)
    return 0


def cmd_ssim_map(args, config: ExperimentConfig) -> int:
    model = _model(args, config)
    composition = read_composition(args.composition)
    image = read_image(args.image)
    report = ssim_map_report(
        model, image, composition.weights, basis_filters(composition.basis), composition.levels, args.layer
    )
    paths = write_ssim_maps(_out(args), f"ssim_map_{composition.mode.value}", report)
    scores = ", ".join(f"{s:.4f}" for s in report.channel_scores)
    print(f"✅ Layer {report.layer} SSIM {report.score:.4f} (channels: {scores})")
    for path in paths:
        print(f"📄 {path}")
    return 0


def cmd_run(args, config: ExperimentConfig) -> int:
    if args.seed is not None:
        config = replace(config, train_seed=args.seed)
    if args.out:
        config = replace(config, output_dir=args.out)
    print_banner()
    state = run_experiment(config)
    print(f"\n✅ Run complete: {len(state.reports)} reports")
    print(f"📄 Manifest: {Path(config.output_dir) / 'manifest.json'}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "init-model": cmd_init_model,
    "decompose": cmd_decompose,
    "cache": cmd_cache,
    "train": cmd_train,
    "eval": cmd_eval,
    "errors": cmd_errors,
    "reweight": cmd_reweight,
    "distort": cmd_distort,
    "cka": cmd_cka,
    "ssim-map": cmd_ssim_map,
    "run": cmd_run,
}


def _global_flags(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", "-c", default=default, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=default, help="Seed for the command's random source")
    parser.add_argument("--out", "-o", default=default, help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = ProbeArgumentParser(
        description="WaveProbe - compositionality of ViT representations over wavelet primitives",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
    python main.py run --config config/config.example.yaml --out ./output
    python main.py gen-data --out ./data --seed 7
    python main.py train --cache ./cache --mode convex --out ./train
        """,
    )
    _global_flags(parser, None)
    # Global flags are accepted before or after the verb
    common = ProbeArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)

    subparsers = parser.add_subparsers(dest="command", help="Command to run", parser_class=ProbeArgumentParser)

    def add(name: str, text: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(name, help=text, parents=[common])

    gen = add("gen-data", "Generate the synthetic dataset")
    gen.add_argument("--classes", type=int)
    gen.add_argument("--per-class", type=int)
    gen.add_argument("--size", type=int)
    gen.add_argument("--channels", type=int)
    gen.add_argument("--format", choices=("tnsr", "ppm"), default="tnsr")

    add("init-model", "Write a seeded random toy ViT")

    dec = add("decompose", "Write coefficient blocks and primitives of one image")
    dec.add_argument("--image", required=True)
    dec.add_argument("--basis", choices=[w.value for w in WaveletName])
    dec.add_argument("--levels", type=_levels)

    cache = add("cache", "Cache primitive CLS tokens for a manifest")
    cache.add_argument("--model")
    cache.add_argument("--manifest", required=True)
    cache.add_argument("--basis", choices=[w.value for w in WaveletName])
    cache.add_argument("--levels", type=_levels)
    cache.add_argument("--layer", type=int)

    tr = add("train", "Learn composition weights from a cache")
    tr.add_argument("--model")
    tr.add_argument("--cache", required=True)
    tr.add_argument("--mode", choices=[m.value for m in ConstraintMode])

    ev = add("eval", "Accuracy of original, summed and learned compositions")
    ev.add_argument("--model")
    ev.add_argument("--cache", required=True)
    ev.add_argument("--composition", action="append")

    er = add("errors", "Error breakdown of a learned composition")
    er.add_argument("--model")
    er.add_argument("--cache", required=True)
    er.add_argument("--composition", required=True)

    rw = add("reweight", "Reweight an image's subbands with learned weights")
    rw.add_argument("--image", required=True)
    rw.add_argument("--composition", required=True)

    dist = add("distort", "Noisy and compressed copies of an image")
    dist.add_argument("--image", required=True)
    dist.add_argument("--sigma", type=float)
    dist.add_argument("--quality", type=int)

    cka = add("cka", "Layerwise CKA of summed and learned compositions")
    cka.add_argument("--model")
    cka.add_argument("--manifest", required=True)
    cka.add_argument("--composition", required=True)
    cka.add_argument("--samples", type=int)

    sm = add("ssim-map", "Per-channel SSIM maps of one image")
    sm.add_argument("--model")
    sm.add_argument("--image", required=True)
    sm.add_argument("--composition", required=True)
    sm.add_argument("--layer", type=int)

    add("run", "Full config-driven pipeline")
    return parser


OUT_REQUIRED = {"gen-data", "init-model", "decompose", "cache", "train", "reweight", "distort", "ssim-map"}


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        print_banner()
        parser.print_help()
        return 0
    if args.command in OUT_REQUIRED and not args.out:
        parser.error(f"{args.command} needs --out")

    try:
        config = load_config(args.config)
        configure_logging(config.log_level, config.log_file)
        return COMMANDS[args.command](args, config)
    except ProbeError as e:
        print(f"❌ {e}", file=sys.stderr)
        return exit_code_for(e)
    except (OSError, ValueError) as e:
        # Unwrapped input problems are data errors
        print(f"❌ {e}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
