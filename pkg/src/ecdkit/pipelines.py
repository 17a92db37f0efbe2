"""Training and prediction pipelines.

Training: metadata collection over the training split only (so nothing leaks
from validation or test data), dataset preprocessing with an on-disk cache,
a seeded epoch loop with per-epoch evaluation, early stopping, and a
best-checkpoint artifact. Prediction: reload the artifact, preprocess new
rows with the stored metadata, and post-process model outputs back into raw
data space. ``experiment`` composes both halves and reports metrics for all
three splits.

Every run is single-threaded and fully determined by (definition, dataset,
seed); rerunning with equal inputs produces byte-identical artifacts.
"""

from __future__ import annotations

import copy
import csv
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cache as cache_io
from .artifacts import load_artifact, save_artifact
from .config import Diagnostic, resolve_defaults, validate
from .data import SPLIT_NAMES, Dataset, load_dataset, split_dataset
from .definition import ModelDefinition
from .errors import (
    ArtifactError,
    ConfigError,
    DataError,
    NonFiniteError,
    TrainingRuntimeError,
)
from .features import (
    TYPE_METRICS,
    PreprocParams,
    build_metadata,
    canonical_truth,
    compute_metric,
    higher_is_better,
    is_missing,
    postprocess_prediction,
    preprocess_value,
    tokenize,
)
from .graph import ECDModel
from .optim import make_optimizer, optimizer_step
from .registry import Registries, build_default_registries
from .rng import SALT_EPOCH, Lcg, mix_seed
from .tensor import Tensor

MODEL_SUBDIR = "model"
STATS_FILE = "training_stats.json"
PREDICTIONS_FILE = "predictions.csv"
METRICS_FILE = "metrics.json"
IMPROVEMENT_TOLERANCE = 1e-6


class ValidationFailed(ConfigError):
    """Raised when a definition fails validation; carries all diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("model definition failed validation:\n" +
                         "\n".join(str(d) for d in diagnostics))


@dataclass
class TrainingStats:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "wall_clock_seconds": self.wall_clock_seconds}


def _preproc_params(spec) -> PreprocParams:
    return PreprocParams(**spec.preprocessing)


def _feature_width(spec, meta) -> int:
    if spec.type in ("binary", "numerical", "category"):
        return 1
    if spec.type == "set":
        return meta.vocab_size
    if spec.type in ("sequence", "text"):
        return meta.max_sequence_length
    return meta.length


def collect_metadata(train: Dataset, definition: ModelDefinition) -> dict:
    """Build per-feature metadata from the training split only."""
    metadata = {}
    for spec in list(definition.input_features) + list(definition.output_features):
        column = train.column(spec.name)
        try:
            metadata[spec.name] = build_metadata(column, spec.type, _preproc_params(spec))
        except DataError as exc:
            raise type(exc)(f"column {spec.name!r}: {exc}") from None
    return metadata


def _drop_row_indices(split: Dataset, definition: ModelDefinition) -> list[int]:
    """Indices to keep after applying the drop_row missing-value strategy."""
    droppers = [spec for spec in list(definition.input_features) + list(definition.output_features)
                if spec.preprocessing.get("missing_strategy") == "drop_row"
                and spec.name in split.header]
    if not droppers:
        return list(range(len(split.rows)))
    keep = []
    for i, row in enumerate(split.rows):
        if all(not is_missing(row[spec.name]) for spec in droppers):
            keep.append(i)
    return keep


def _check_tagger_alignment(split: Dataset, definition: ModelDefinition) -> None:
    """Sequence-tagging targets must align 1:1 with the input tokens per row."""
    taggers = [s for s in definition.output_features
               if s.type == "sequence" and s.name in split.header]
    if not taggers:
        return
    sources = [s for s in definition.input_features if s.type in ("sequence", "text")]
    if not sources:
        return
    source = sources[0]
    src_params = _preproc_params(source)
    for spec in taggers:
        dst_params = _preproc_params(spec)
        for i, row in enumerate(split.rows):
            n_src = len(tokenize(row[source.name], src_params.tokenizer))
            n_dst = len(tokenize(row[spec.name], dst_params.tokenizer))
            if n_src != n_dst:
                raise DataError(
                    f"row {i + 2}: tag sequence {spec.name!r} has {n_dst} tokens but input "
                    f"{source.name!r} has {n_src}; tagging requires 1:1 alignment")


def preprocess_features(split: Dataset, specs, metadata: dict) -> dict[str, np.ndarray]:
    """Tensorize the listed features of one split into stacked batch arrays."""
    arrays: dict[str, np.ndarray] = {}
    for spec in specs:
        params = _preproc_params(spec)
        meta = metadata[spec.name]
        column = split.column(spec.name)
        rows = []
        for i, raw in enumerate(column):
            try:
                rows.append(preprocess_value(raw, spec.type, meta, params).array)
            except DataError as exc:
                raise DataError(f"feature {spec.name!r} row {i + 2}: {exc}") from None
        if rows:
            arrays[spec.name] = np.stack(rows)
        else:
            arrays[spec.name] = np.zeros((0, _feature_width(spec, meta)))
    return arrays


def preprocess_dataset(splits: dict[str, Dataset], metadata: dict,
                       definition: ModelDefinition, cache_file: Path | None,
                       fingerprint: int | None) -> dict[str, dict[str, np.ndarray]]:
    """Tensorize every split, consulting the cache when one is configured."""
    if cache_file is not None and cache_file.exists():
        try:
            cached = cache_io.read_cache(cache_file, fingerprint)
        except (cache_io.CorruptionError, cache_io.FormatVersionError) as exc:
            warnings.warn(f"discarding unusable cache {cache_file}: {exc}")
            cached = None
        if cached is not None:
            return cached
    specs = list(definition.input_features) + list(definition.output_features)
    blocks = {}
    for name in SPLIT_NAMES:
        split = splits[name]
        _check_tagger_alignment(split, definition)
        blocks[name] = preprocess_features(split, specs, metadata)
    if cache_file is not None:
        cache_io.write_cache(cache_file, fingerprint, blocks)
    return blocks


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _postprocess_rows(result, definition: ModelDefinition, metadata: dict) -> dict[str, list]:
    """Per-output raw predictions, one entry per batch row."""
    out: dict[str, list] = {}
    for spec in definition.output_features:
        meta = metadata[spec.name]
        batch = result.predictions[spec.name]
        rows = []
        for i in range(batch.dims[0]):
            rows.append(postprocess_prediction(Tensor(batch.array[i]), spec.type, meta))
        out[spec.name] = rows
    return out


def evaluate_split(model: ECDModel, arrays: dict[str, np.ndarray], split: Dataset,
                   definition: ModelDefinition, metadata: dict) -> dict[str, dict[str, float]]:
    """Loss plus every type-appropriate metric, per output feature.

    Losses are computed in tensor space; the named metrics score the
    post-processed predictions against the raw ground truths.
    """
    if len(split) == 0:
        return {}
    inputs = {s.name: arrays[s.name] for s in definition.input_features}
    targets = {s.name: arrays[s.name] for s in definition.output_features}
    result = model.forward(inputs, targets)
    predictions = _postprocess_rows(result, definition, metadata)
    report: dict[str, dict[str, float]] = {}
    for spec in definition.output_features:
        meta = metadata[spec.name]
        params = _preproc_params(spec)
        truths = [canonical_truth(raw, spec.type, meta, params)
                  for raw in split.column(spec.name)]
        block = {"loss": result.losses[spec.name]}
        for kind in TYPE_METRICS[spec.type]:
            if kind == "cross_entropy":
                ids = [meta.lookup(t) for t in truths]
                probs = result.probabilities[spec.name].array
                block[kind] = compute_metric(kind, ids, list(probs))
            else:
                block[kind] = compute_metric(kind, truths, predictions[spec.name])
        report[spec.name] = block
    return report


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class _RunContext:
    definition: ModelDefinition
    metadata: dict
    splits: dict[str, Dataset]
    tensors: dict[str, dict[str, np.ndarray]]
    model: ECDModel
    stats: TrainingStats
    model_dir: Path


def _run_training(definition: ModelDefinition, dataset_path: str | Path, output_dir: str | Path,
                  seed: int | None, use_cache: bool, log, registries: Registries | None) -> _RunContext:
    registries = registries or build_default_registries()
    resolved = resolve_defaults(definition, registries)
    dataset = load_dataset(dataset_path)
    diagnostics = validate(resolved, dataset.header, registries)
    if diagnostics:
        raise ValidationFailed(diagnostics)
    if seed is not None:
        resolved.training.seed = seed
    seed = resolved.training.seed
    tr = resolved.training

    splits = split_dataset(dataset, tr.split, tr.split_column, seed)
    splits = {name: split.subset(_drop_row_indices(split, resolved))
              for name, split in splits.items()}
    if len(splits["train"]) == 0:
        raise DataError("training split is empty")
    metadata = collect_metadata(splits["train"], resolved)

    cache_file = fingerprint = None
    if use_cache:
        cache_file = cache_io.cache_path_for(dataset_path)
        fingerprint = cache_io.compute_fingerprint(
            cache_io.dataset_bytes(dataset_path), resolved, seed)
    tensors = preprocess_dataset(splits, metadata, resolved, cache_file, fingerprint)

    model = ECDModel(resolved, metadata, registries, seed)
    optimizer = make_optimizer(tr.optimizer, tr.learning_rate,
                               beta1=tr.beta1, beta2=tr.beta2, epsilon=tr.epsilon)

    input_names = [s.name for s in resolved.input_features]
    output_names = [s.name for s in resolved.output_features]
    train_arrays = tensors["train"]
    n_train = len(splits["train"])
    higher = higher_is_better(tr.validation_metric)

    stats = TrainingStats()
    started = time.monotonic()
    best_value = None
    best_snapshot = model.store.snapshot()
    stale = 0
    epoch_rng_seed = mix_seed(seed, SALT_EPOCH)

    for epoch in range(tr.epochs):
        optimizer.learning_rate = tr.learning_rate * (tr.decay ** epoch)
        order = list(range(n_train))
        Lcg(mix_seed(epoch_rng_seed, epoch)).shuffle(order)
        loss_sum = 0.0
        for batch_index, start in enumerate(range(0, n_train, tr.batch_size)):
            idx = order[start : start + tr.batch_size]
            batch = {name: train_arrays[name][idx] for name in input_names}
            targets = {name: train_arrays[name][idx] for name in output_names}
            try:
                result = model.forward(batch, targets)
                grads = model.backward(result)
                optimizer_step(optimizer, model.store, grads)
            except NonFiniteError as exc:
                raise TrainingRuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}: {exc}") from exc
            loss_sum += result.combined_loss * len(idx)
        train_loss = loss_sum / n_train

        train_metrics = evaluate_split(model, tensors["train"], splits["train"],
                                       resolved, metadata)
        val_metrics = evaluate_split(model, tensors["validation"], splits["validation"],
                                     resolved, metadata)
        stats.epochs.append({"epoch": epoch, "train_loss": train_loss,
                             "train_metrics": train_metrics,
                             "validation_metrics": val_metrics})
        # empty validation split: steer by the training metric instead
        steering = val_metrics if val_metrics else train_metrics
        value = steering[tr.validation_feature][tr.validation_metric]
        if log is not None:
            log(f"epoch {epoch}: train loss {train_loss:.6f}, "
                f"validation {tr.validation_metric} {value:.6f}")

        if best_value is None or _improved(value, best_value, higher):
            best_value = value
            stats.best_epoch = epoch
            best_snapshot = model.store.snapshot()
            stale = 0
        else:
            stale += 1
            if tr.patience > 0 and stale >= tr.patience:
                if log is not None:
                    log(f"early stop after {stale} epochs without improvement")
                break

    model.store.restore(best_snapshot)
    stats.wall_clock_seconds = time.monotonic() - started

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    model_dir = save_artifact(output_dir / MODEL_SUBDIR, metadata, resolved, model.store)
    (output_dir / STATS_FILE).write_text(
        json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return _RunContext(resolved, metadata, splits, tensors, model, stats, model_dir)


def _improved(value: float, best: float, higher: bool) -> bool:
    if higher:
        return value > best + IMPROVEMENT_TOLERANCE
    return value < best - IMPROVEMENT_TOLERANCE


def train(definition: ModelDefinition, dataset_path: str | Path, output_dir: str | Path,
          seed: int | None = None, use_cache: bool = True, log=None,
          registries: Registries | None = None) -> tuple[Path, TrainingStats]:
    """Train a model and persist the best checkpoint as a loadable artifact."""
    run = _run_training(definition, dataset_path, output_dir, seed, use_cache, log, registries)
    return run.model_dir, run.stats


def experiment(definition: ModelDefinition, dataset_path: str | Path, output_dir: str | Path,
               seed: int | None = None, use_cache: bool = True, log=None,
               registries: Registries | None = None) -> tuple[Path, TrainingStats, dict]:
    """Train, then evaluate the best checkpoint on all three splits."""
    run = _run_training(definition, dataset_path, output_dir, seed, use_cache, log, registries)
    metrics = {}
    for name in SPLIT_NAMES:
        metrics[name] = evaluate_split(run.model, run.tensors[name], run.splits[name],
                                       run.definition, run.metadata)
    path = Path(output_dir) / METRICS_FILE
    path.write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return run.model_dir, run.stats, metrics


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def load_model(model_dir: str | Path,
               registries: Registries | None = None) -> tuple[ECDModel, ModelDefinition, dict]:
    """Rebuild the exact trained model from a persisted artifact directory."""
    registries = registries or build_default_registries()
    metadata, definition, weights = load_artifact(model_dir)
    definition = resolve_defaults(definition, registries)
    model = ECDModel(definition, metadata, registries, definition.training.seed)
    expected = set(model.store.names())
    stored = set(weights)
    if expected != stored:
        missing = sorted(expected - stored)
        extra = sorted(stored - expected)
        raise ArtifactError(f"weights do not match the model definition; "
                            f"missing: {missing}, unexpected: {extra}")
    for name in model.store.names():
        if weights[name].shape != model.store[name].tensor.dims:
            raise ArtifactError(f"weights for {name!r} have dims {weights[name].shape}, "
                                f"expected {model.store[name].tensor.dims}")
    model.store.restore(weights)
    return model, definition, metadata


def save_model(model: ECDModel, output_dir: str | Path) -> Path:
    """Persist a built model (metadata, resolved definition, weights)."""
    return save_artifact(output_dir, model.metadata, model.definition, model.store)


def predict(model_dir: str | Path, dataset_path: str | Path, output_dir: str | Path,
            registries: Registries | None = None) -> tuple[Path, Path | None]:
    """Write one post-processed prediction row per input row.

    When the dataset carries every target column, a metrics report is
    produced alongside; otherwise predictions only.
    """
    registries = registries or build_default_registries()
    model, definition, metadata = load_model(model_dir, registries)
    dataset = load_dataset(dataset_path)
    for spec in definition.input_features:
        if spec.name not in dataset.header:
            raise DataError(f"dataset {dataset.source!r} lacks input column {spec.name!r}")

    # missing cells cannot drop rows at prediction time: one output row per input row
    safe_specs = []
    for spec in list(definition.input_features) + list(definition.output_features):
        spec = _with_fill_strategy(spec)
        safe_specs.append(spec)
    input_specs = safe_specs[: len(definition.input_features)]
    output_specs = safe_specs[len(definition.input_features) :]

    inputs = preprocess_features(dataset, input_specs, metadata)
    batch_size = definition.training.batch_size
    predictions: dict[str, list] = {s.name: [] for s in definition.output_features}
    probabilities: dict[str, list] = {s.name: [] for s in definition.output_features}
    for start in range(0, len(dataset), batch_size):
        chunk = {name: arr[start : start + batch_size] for name, arr in inputs.items()}
        result = model.forward(chunk)
        rows = _postprocess_rows(result, definition, metadata)
        for spec in definition.output_features:
            predictions[spec.name].extend(rows[spec.name])
            probs = result.probabilities[spec.name]
            if probs is not None:
                probabilities[spec.name].extend(probs.array[i] for i in range(probs.dims[0]))

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    predictions_path = output_dir / PREDICTIONS_FILE
    _write_predictions_csv(predictions_path, dataset, definition, metadata,
                           predictions, probabilities)

    metrics_path = None
    targets_present = all(s.name in dataset.header for s in definition.output_features)
    if targets_present:
        _check_tagger_alignment(dataset, definition)
        targets = preprocess_features(dataset, output_specs, metadata)
        arrays = {**inputs, **targets}
        metrics = evaluate_split(model, arrays, dataset, definition, metadata)
        metrics_path = output_dir / METRICS_FILE
        metrics_path.write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n",
                                encoding="utf-8")
    return predictions_path, metrics_path


def _with_fill_strategy(spec):
    if spec.preprocessing.get("missing_strategy") == "drop_row":
        spec = copy.deepcopy(spec)
        spec.preprocessing["missing_strategy"] = "fill_const"
    return spec


def _render_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return " ".join(value)
    return str(value)


def _write_predictions_csv(path: Path, dataset: Dataset, definition: ModelDefinition,
                           metadata: dict, predictions: dict, probabilities: dict) -> None:
    columns: list[tuple[str, str, object]] = []  # (column name, feature, extractor)
    for spec in definition.output_features:
        meta = metadata[spec.name]
        columns.append((spec.name, spec.name, ("prediction", None)))
        if spec.type in ("category", "set"):
            for token_id, token in enumerate(meta.id2token):
                columns.append((f"{spec.name}_probability_{token}", spec.name,
                                ("probability", token_id)))
        elif spec.type == "binary":
            columns.append((f"{spec.name}_probability", spec.name, ("probability", 0)))
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([name for name, _, _ in columns])
        for i in range(len(dataset)):
            row = []
            for _, feature, (kind, token_id) in columns:
                if kind == "prediction":
                    row.append(_render_cell(predictions[feature][i]))
                else:
                    row.append(repr(float(probabilities[feature][i][token_id])))
            writer.writerow(row)
