"""Persistence of datasets (CSV), checkpoints (JSON) and run artifacts."""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

from ..exceptions import CheckpointError, DataError
from ..nets.layers import ParamSet
from .datasets import UNLABELED, Dataset, Split

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
LABEL_COLUMN = "label"
_PIXEL = re.compile(r"^p(\d+)_(\d+)$")


def _ensure_parent(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create directory for {path}: {e}") from e


def _require_file(path: Path) -> None:
    if not path.is_file():
        logger.error(f"File not found: {path}")
        raise FileNotFoundError(f"File not found: {path}")


def write_text(path: Path | str, text: str) -> Path:
    """Write ``text`` with a trailing newline, creating parent directories."""
    path = Path(path)
    _ensure_parent(path)
    try:
        path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise OSError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {path}")
    return path


def write_table(path: Path | str, frame: pd.DataFrame) -> Path:
    """CSV with 17 significant digits for floats."""
    path = Path(path)
    _ensure_parent(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise OSError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_table(path: Path | str) -> pd.DataFrame:
    path = Path(path)
    _require_file(path)
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error(f"Failed to read {path}: {e}")
        raise DataError(f"Cannot parse CSV {path}: {e}") from e


# ============================================================================
# Datasets
# ============================================================================


def feature_columns(dataset: Dataset) -> list[str]:
    """``p{row}_{col}`` for grid data, ``x{j}`` otherwise."""
    if dataset.image_shape is not None:
        h, w = dataset.image_shape
        return [f"p{r}_{c}" for r in range(h) for c in range(w)]
    return [f"x{j}" for j in range(dataset.dim)]


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    frame = pd.DataFrame(dataset.features, columns=feature_columns(dataset))
    labels = pd.array([pd.NA] * dataset.n, dtype="Int64")
    if dataset.labels is not None:
        labels = pd.array(
            [int(y) if m else pd.NA for y, m in zip(dataset.labels, dataset.labeled_mask)],
            dtype="Int64",
        )
    frame[LABEL_COLUMN] = labels
    return frame


def save_dataset(dataset: Dataset, path: Path | str) -> Path:
    """Header row, one sample per line, label column last and empty when unlabeled."""
    return write_table(path, dataset_frame(dataset))


def _infer_image_shape(columns: Sequence[str]) -> tuple[int, int] | None:
    matches = [_PIXEL.match(c) for c in columns]
    if not columns or not all(matches):
        return None
    h = max(int(m.group(1)) for m in matches) + 1
    w = max(int(m.group(2)) for m in matches) + 1
    return (h, w) if h * w == len(columns) else None


def load_dataset(
    path: Path | str, num_classes: int | None = None, split: Split = "train"
) -> Dataset:
    """Read a dataset CSV written by ``save_dataset``.

    Args:
        path: CSV file.
        num_classes: Number of classes; inferred as max label + 1 (at least 2) if omitted.
        split: Split tag of the returned dataset.

    Raises:
        FileNotFoundError: If the file does not exist.
        DataError: If the file lacks a label column or cannot be parsed.
    """
    frame = read_table(path)
    if frame.columns.empty or frame.columns[-1] != LABEL_COLUMN:
        raise DataError(f"{path}: last column must be '{LABEL_COLUMN}'")
    columns = list(frame.columns[:-1])
    if not columns:
        raise DataError(f"{path}: no feature columns")
    features = frame[columns].to_numpy(dtype=np.float64)
    raw = frame[LABEL_COLUMN].astype("Int64")
    mask = raw.notna().to_numpy()
    labels = raw.fillna(UNLABELED).to_numpy(dtype=np.int64) if mask.any() else None
    if num_classes is None:
        num_classes = max(2, int(labels.max()) + 1) if labels is not None else 2
    return Dataset(
        features,
        labels,
        mask,
        num_classes=num_classes,
        split=split,
        image_shape=_infer_image_shape(columns),
    )


# ============================================================================
# Checkpoints and JSON documents
# ============================================================================


def dump_json(document: Any) -> str:
    """Deterministic JSON text: sorted keys, fixed indentation."""
    return json.dumps(document, sort_keys=True, indent=2)


def save_json(path: Path | str, document: Mapping[str, Any] | BaseModel) -> Path:
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json")
    return write_text(path, dump_json(document))


def load_json(path: Path | str) -> Any:
    path = Path(path)
    _require_file(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in {path}: {e}")
        raise DataError(f"Invalid JSON in {path}: {e}") from e


def save_checkpoint(path: Path | str, header: Mapping[str, Any], params: ParamSet) -> Path:
    """Write ``{header, params}``; floats keep their shortest round-trip repr."""
    return write_text(path, dump_json({"header": dict(header), "params": params.to_document()}))


def load_checkpoint(path: Path | str) -> tuple[dict[str, Any], ParamSet]:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FileNotFoundError: If the file does not exist.
        CheckpointError: If the document is not a checkpoint.
    """
    try:
        document = load_json(path)
    except DataError as e:
        raise CheckpointError(str(e)) from e
    if not isinstance(document, dict) or set(document) != {"header", "params"}:
        raise CheckpointError(f"{path}: expected an object with 'header' and 'params'")
    if "kind" not in document["header"]:
        raise CheckpointError(f"{path}: checkpoint header has no 'kind'")
    try:
        params = ParamSet.from_document(document["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed parameters: {e}") from e
    return document["header"], params


# ============================================================================
# Metrics
# ============================================================================


def records_frame(
    rows: Sequence[BaseModel | Mapping[str, Any]], columns: Sequence[str]
) -> pd.DataFrame:
    records = [r.model_dump() if isinstance(r, BaseModel) else dict(r) for r in rows]
    return pd.DataFrame.from_records(records, columns=list(columns))


def save_records(
    path: Path | str, rows: Sequence[BaseModel | Mapping[str, Any]], columns: Sequence[str]
) -> Path:
    """Rows of a metrics history (or any flat records) as CSV, in ``columns`` order."""
    return write_table(path, records_frame(rows, columns))
