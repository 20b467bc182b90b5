"""Command-line entry point: gradcheck, training, adversarial analysis and evaluation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from ..autodiff.gradcheck import default_cases, run_gradcheck
from ..config import Settings
from ..data.datasets import (
    Dataset,
    gen_circles,
    gen_grid_patterns,
    gen_two_moons,
    standardize,
    subsample_labels,
)
from ..data.storage import (
    dump_json,
    load_checkpoint,
    load_dataset,
    load_json,
    save_checkpoint,
    save_dataset,
    save_json,
    save_records,
)
from ..exceptions import CheckpointError, DataError, NonFiniteError, ShapeError, TapeError
from ..models.classifier import ClassifierModel, count_errors
from ..models.transformer import LatentTransformer, load_transformer
from ..regularizer.lvat import lvat_cost
from ..regularizer.vat import vat_cost
from ..training.trainer import (
    METRICS_COLUMNS,
    TRANSFORMER_COLUMNS,
    train_classifier,
    train_transformer,
)
from ..utils.logger import configure_logging
from ..utils.seeding import as_seed_sequence, epoch_seed
from .models import (
    AdvReport,
    DataConfig,
    EvalReport,
    RunConfig,
    RunSummary,
    SeedResult,
    TransformerSummary,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

TRANSFORMER_CHECKPOINT = "transformer.json"
ADV_COLUMNS = (
    "sample_id",
    "input_space_distance",
    "latent_space_distance",
    "reconstruction_distance",
    "kl_cost",
)
SUMMARY_COLUMNS = ("seed", "n_labeled", "final_test_error")
HIST_COLUMNS = ("bin_left", "count")
ADV_CHUNK = 500
DEFAULT_ADV_SAMPLES = 5000


# ============================================================================
# Configuration loading
# ============================================================================


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``a.b.c=value``; the value is JSON when it parses, a string otherwise."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ValueError(f"--set expects KEY=VALUE, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_override(document: dict[str, Any], path: list[str], value: Any) -> None:
    node = document
    for part in path[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ValueError(f"Cannot set {'.'.join(path)}: {part} is not a section")
        node = child
    node[path[-1]] = value


def load_run_config(
    path: Path | None,
    overrides: Sequence[str] = (),
    seed: int | None = None,
    out: Path | None = None,
) -> RunConfig:
    """Read the config JSON (or defaults), apply flag overrides and validate."""
    document: dict[str, Any] = {}
    if path is not None:
        loaded = load_json(path)
        if not isinstance(loaded, dict):
            raise DataError(f"{path}: run config must be a JSON object")
        document = loaded
    for text in overrides:
        apply_override(document, *parse_override(text))
    if seed is not None:
        document["seeds"] = [seed]
    if out is not None:
        document["output_dir"] = str(out)
    return RunConfig.model_validate(document)


def output_dir(config: RunConfig, settings: Settings) -> Path:
    return config.output_dir if config.output_dir is not None else settings.output_dir


# ============================================================================
# Data
# ============================================================================


def generate_split(cfg: DataConfig, n: int, seed: Any, split: str) -> Dataset:
    if cfg.dataset == "two_moons":
        return gen_two_moons(n, cfg.noise, seed, cfg.lift_dim, cfg.data_seed, split)
    if cfg.dataset == "circles":
        return gen_circles(n, cfg.noise, seed, cfg.lift_dim, cfg.data_seed, split)
    return gen_grid_patterns(n, cfg.size, seed, cfg.num_classes or 4, cfg.noise, split)


def prepare_splits(cfg: DataConfig) -> tuple[Dataset, Dataset]:
    """Fully labeled train and test splits, standardized for point data."""
    train_seed, test_seed = as_seed_sequence(cfg.data_seed).spawn(2)
    if cfg.train_csv is not None:
        train = load_dataset(cfg.train_csv, cfg.num_classes, split="train")
    else:
        train = generate_split(cfg, cfg.n_train, train_seed, "train")
    if cfg.test_csv is not None:
        test = load_dataset(cfg.test_csv, train.num_classes, split="test")
    else:
        test = generate_split(cfg, cfg.n_test, test_seed, "test")
    if cfg.standardize and train.image_shape is None:
        train, test = standardize(train, test)
    return train, test


def labeled_split(train: Dataset, cfg: DataConfig, seed: int) -> Dataset:
    if cfg.n_labeled is None:
        return subsample_labels(train, train.n, seed)
    return subsample_labels(train, int(cfg.n_labeled), seed)


def load_classifier(path: Path) -> ClassifierModel:
    header, params = load_checkpoint(path)
    return ClassifierModel.from_checkpoint(header, params)


def load_transformer_checkpoint(path: Path) -> LatentTransformer:
    header, params = load_checkpoint(path)
    return load_transformer(header, params)


# ============================================================================
# Commands
# ============================================================================


def cmd_gradcheck(args: argparse.Namespace, settings: Settings) -> int:
    results = run_gradcheck(
        default_cases(), step=settings.gradcheck_step, tolerance=settings.gradcheck_tolerance
    )
    width = max(len(r.name) for r in results)
    print(f"{'case':<{width}}  {'values':>6}  {'max_rel_err':>11}  status")
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {r.n_values:>6}  {r.max_rel_error:>11.3e}  {status}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} cases passed")
    if failed:
        worst = max(failed, key=lambda r: r.max_rel_error)
        logger.error(
            f"Gradient check failed for {len(failed)} case(s); worst: {worst.name} "
            f"(max rel err {worst.max_rel_error:.3e})"
        )
        print(f"worst offender: {worst.name}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_train_transformer(args: argparse.Namespace, settings: Settings) -> int:
    config = load_run_config(args.config, args.set, args.seed, args.out)
    out = output_dir(config, settings)
    train, _ = prepare_splits(config.data)
    kind = config.transformer.kind
    run = train_transformer(kind, train, config.transformer.to_config(), config.seeds[0])

    save_checkpoint(out / TRANSFORMER_CHECKPOINT, run.model.header(), run.model.params)
    save_records(out / "transformer_loss.csv", run.history, TRANSFORMER_COLUMNS)
    summary = TransformerSummary(
        kind=kind,
        config_hash=config.config_hash(),
        epochs=len(run.history),
        num_params=run.model.params.num_values(),
        initial_held_out_loss=run.initial_held_out_loss,
        final_held_out_loss=run.final_held_out_loss,
    )
    save_json(out / "transformer_summary.json", summary)
    print(dump_json(summary.model_dump(mode="json")))
    return EXIT_OK


def _summary_rows(per_seed: list[SeedResult]) -> list[dict[str, Any]]:
    errors = np.array([r.final_test_error for r in per_seed])
    rows: list[dict[str, Any]] = [
        {"seed": str(r.seed), "n_labeled": r.n_labeled, "final_test_error": r.final_test_error}
        for r in per_seed
    ]
    rows.append({"seed": "mean", "n_labeled": None, "final_test_error": float(errors.mean())})
    rows.append({"seed": "std", "n_labeled": None, "final_test_error": float(errors.std())})
    return rows


def cmd_train_classifier(args: argparse.Namespace, settings: Settings) -> int:
    config = load_run_config(args.config, args.set, args.seed, args.out)
    out = output_dir(config, settings)
    train_cfg = config.to_train_config()
    train, test = prepare_splits(config.data)

    transformer = None
    if train_cfg.transformer_kind is not None:
        path = args.checkpoint or out / TRANSFORMER_CHECKPOINT
        transformer = load_transformer_checkpoint(path)
        logger.info(f"Loaded {transformer.kind} transformer from {path}")

    save_dataset(test, out / "test.csv")
    per_seed = []
    for seed in config.seeds:
        dataset = labeled_split(train, config.data, seed)
        run = train_classifier(dataset, train_cfg, seed, transformer, test, config.classifier)
        save_checkpoint(out / f"classifier_seed{seed}.json", run.model.header(), run.model.params)
        save_records(out / f"metrics_seed{seed}.csv", run.history, METRICS_COLUMNS)
        per_seed.append(
            SeedResult(
                seed=seed, n_labeled=dataset.n_labeled, final_test_error=run.final_test_error
            )
        )

    errors = np.array([r.final_test_error for r in per_seed])
    summary = RunSummary(
        config_hash=config.config_hash(),
        mode=config.data.mode,
        regularizer=config.regularizer.kind,
        baseline=config.baseline,
        seeds=list(config.seeds),
        per_seed=per_seed,
        final_test_error=float(errors.mean()),
        std_test_error=float(errors.std()),
    )
    save_json(out / "summary.json", summary)
    save_records(out / "summary.csv", _summary_rows(per_seed), SUMMARY_COLUMNS)
    print(dump_json(summary.model_dump(mode="json")))
    return EXIT_OK


def adversarial_records(
    model: ClassifierModel,
    x: np.ndarray,
    config: RunConfig,
    seed: Any,
    transformer: LatentTransformer | None,
) -> list[dict[str, Any]]:
    """Per-sample distances and costs of the adversarial examples for ``x``."""
    perturb = config.regularizer.perturb()
    if transformer is None and perturb.space == "latent":
        raise ValueError("Latent-space perturbations need a transformer")
    rows: list[dict[str, Any]] = []
    for index, start in enumerate(range(0, len(x), ADV_CHUNK)):
        chunk = x[start : start + ADV_CHUNK]
        chunk_seed = epoch_seed(seed, index)
        if transformer is None:
            result = vat_cost(model, chunk, perturb, chunk_seed)
        else:
            result = lvat_cost(model, transformer, chunk, perturb, chunk_seed)
        for i in range(result.batch_size):
            rows.append(
                {
                    "sample_id": start + i,
                    "input_space_distance": float(result.distances[i]),
                    "latent_space_distance": (
                        float(result.latent_distances[i])
                        if result.latent_distances is not None
                        else None
                    ),
                    "reconstruction_distance": (
                        float(result.reconstruction_distances[i])
                        if result.reconstruction_distances is not None
                        else None
                    ),
                    "kl_cost": float(result.per_sample_cost[i]),
                }
            )
    return rows


def histogram_rows(values: np.ndarray, bins: int) -> list[dict[str, Any]]:
    """``(bin_left, count)`` over [min, max] of ``values``."""
    counts, edges = np.histogram(values, bins=bins, range=(values.min(), values.max()))
    return [{"bin_left": float(e), "count": int(c)} for e, c in zip(edges[:-1], counts)]


def cmd_gen_adv(args: argparse.Namespace, settings: Settings) -> int:
    config = load_run_config(args.config, args.set, args.seed, args.out)
    out = output_dir(config, settings)
    seed = config.seeds[0]
    model = load_classifier(args.checkpoint or out / f"classifier_seed{seed}.json")
    transformer = None
    if config.regularizer.space == "latent":
        transformer = load_transformer_checkpoint(args.transformer or out / TRANSFORMER_CHECKPOINT)

    train, _ = prepare_splits(config.data)
    sample_seed, adv_seed = as_seed_sequence(seed).spawn(2)
    rows_idx = np.random.default_rng(sample_seed).choice(
        train.n, size=args.n, replace=args.n > train.n
    )
    rows = adversarial_records(model, train.features[rows_idx], config, adv_seed, transformer)
    save_records(out / "adv.csv", rows, ADV_COLUMNS)

    distances = np.array([r["input_space_distance"] for r in rows])
    if args.bins is not None:
        save_records(out / "adv_hist.csv", histogram_rows(distances, args.bins), HIST_COLUMNS)
    mean = float(distances.mean())
    report = AdvReport(
        n=len(rows),
        space=config.regularizer.space,
        epsilon=config.regularizer.epsilon,
        mean_input_distance=mean,
        std_input_distance=float(distances.std()),
        coefficient_of_variation=float(distances.std() / mean) if mean > 0 else 0.0,
    )
    print(dump_json(report.model_dump(mode="json")))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings: Settings) -> int:
    model = load_classifier(args.checkpoint)
    dataset = load_dataset(args.data, model.num_classes, split="test")
    errors = count_errors(model, dataset)
    report = EvalReport(n=dataset.n, errors=errors, error_rate=errors / dataset.n)
    out = args.out if args.out is not None else Path(args.checkpoint).parent
    save_json(out / "eval.json", report)
    print(dump_json(report.model_dump(mode="json")))
    return EXIT_OK


def cmd_schema(args: argparse.Namespace, settings: Settings) -> int:
    print(dump_json(RunConfig.model_json_schema()))
    return EXIT_OK


COMMANDS = {
    "gradcheck": cmd_gradcheck,
    "train-transformer": cmd_train_transformer,
    "train-classifier": cmd_train_classifier,
    "gen-adv": cmd_gen_adv,
    "eval": cmd_eval,
    "schema": cmd_schema,
}


# ============================================================================
# Entry point
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvat-lab", description="Virtual adversarial training in input and latent space"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gradcheck", help="Check every registered gradient against finite differences")
    sub.add_parser("schema", help="Print the run-config JSON schema")

    def with_run_flags(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", type=Path, help="Run config JSON")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key"
        )
        p.add_argument("--seed", type=int, help="Run a single seed")
        p.add_argument("--out", type=Path, help="Output directory")
        return p

    with_run_flags(sub.add_parser("train-transformer", help="Pre-train the VAE or flow"))
    classifier = with_run_flags(
        sub.add_parser("train-classifier", help="Train the regularized classifier")
    )
    classifier.add_argument("--checkpoint", type=Path, help="Transformer checkpoint")

    adv = with_run_flags(sub.add_parser("gen-adv", help="Export adversarial distances"))
    adv.add_argument("--checkpoint", type=Path, help="Classifier checkpoint")
    adv.add_argument("--transformer", type=Path, help="Transformer checkpoint")
    adv.add_argument("--n", type=int, default=DEFAULT_ADV_SAMPLES, help="Number of samples")
    adv.add_argument("--bins", type=int, help="Also write a histogram with this many bins")

    evaluate = sub.add_parser("eval", help="Error rate of a classifier on a labeled CSV")
    evaluate.add_argument("--checkpoint", type=Path, required=True, help="Classifier checkpoint")
    evaluate.add_argument("--data", type=Path, required=True, help="Dataset CSV")
    evaluate.add_argument("--out", type=Path, help="Directory for eval.json")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    try:
        settings = Settings()
    except ValidationError as e:
        print(f"Invalid environment settings: {e}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(settings.log)

    bins = getattr(args, "bins", None)
    if getattr(args, "n", 1) < 1 or (bins is not None and bins < 1):
        logger.error("--n and --bins must be positive")
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args, settings)
    except (NonFiniteError, TapeError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except (DataError, CheckpointError, ShapeError, OSError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
