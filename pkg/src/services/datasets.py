"""Synthetic regression and classification tasks plus CSV persistence."""

import json
import re
from pathlib import Path

import numpy as np
import pandas as pd

from src.models.dataset import Dataset, SyntheticSplits
from src.models.errors import ParseError, SchemaError, UnknownDataset
from src.models.experiment import DATASET_NAMES
from src.utils.logger import StructuredLogger
from src.utils.rng import GENERATOR_VERSION, make_rng

NOISE_SCALE = 0.1
OOD_POINTS = 200
OOD_MARGIN = 0.5
SIN_INTERVALS = ((-1.5, -0.7), (0.35, 1.15))
QUADRATIC_INTERVALS = ((-2.0, -0.5), (0.8, 2.5))

SPLITS = ("train", "val", "test_id", "test_ood")

logger = StructuredLogger("Datasets")


def quadratic_curve(x: np.ndarray) -> np.ndarray:
    return x**2 / 10.0 - x / 2.0 + 5.0


def sin_curve(x: np.ndarray) -> np.ndarray:
    return -np.sin(3.0 * x - 0.3)


def _quadratic_uniform_inputs(rng: np.random.Generator, split: str) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=32)


def _quadratic_inbetween_inputs(rng: np.random.Generator, split: str) -> np.ndarray:
    (a0, b0), (a1, b1) = QUADRATIC_INTERVALS
    return np.concatenate([rng.uniform(a0, b0, size=16), rng.uniform(a1, b1, size=16)])


def _sin_uniform_inputs(rng: np.random.Generator, split: str) -> np.ndarray:
    return rng.uniform(-1.5, 1.15, size=160)


def _sin_inbetween_inputs(rng: np.random.Generator, split: str) -> np.ndarray:
    """Evenly spaced training grid; held-out splits sample the same two intervals."""
    if split == "train":
        return np.concatenate(
            [np.linspace(a, b, 80, endpoint=False) for a, b in SIN_INTERVALS]
        )
    return np.concatenate([rng.uniform(a, b, size=80) for a, b in SIN_INTERVALS])


_TASKS = {
    "quadratic_uniform": (_quadratic_uniform_inputs, quadratic_curve, "regression"),
    "quadratic_inbetween": (_quadratic_inbetween_inputs, quadratic_curve, "regression"),
    "sin_uniform": (_sin_uniform_inputs, sin_curve, "regression"),
    "sin_inbetween": (_sin_inbetween_inputs, sin_curve, "regression"),
    "two_class_inbetween": (_sin_inbetween_inputs, sin_curve, "classification"),
}


def _responses(curve, x: np.ndarray, task: str, rng: np.random.Generator) -> np.ndarray:
    noisy = curve(x) + NOISE_SCALE * rng.standard_normal(x.shape[0])
    if task == "classification":
        return (noisy > 0).astype(float)
    return noisy


def gen_synthetic(name: str, seed: int) -> SyntheticSplits:
    """Train, validation, in-distribution test and OOD grid splits of a named task.

    Validation and in-distribution test splits match the training size and input
    law. The OOD split is a 200-point grid over the training range widened by 0.5
    on each side, with noisy responses.
    """
    if name not in _TASKS:
        raise UnknownDataset(f"Unknown dataset {name!r}; expected one of {', '.join(DATASET_NAMES)}")
    sampler, curve, task = _TASKS[name]
    task_id = DATASET_NAMES.index(name)
    splits = {}
    for split_id, split in enumerate(SPLITS[:3]):
        rng = make_rng(seed, task_id, split_id)
        x = sampler(rng, split)
        splits[split] = Dataset(x.reshape(-1, 1), _responses(curve, x, task, rng), name, seed)

    train_x = splits["train"].inputs[:, 0]
    grid = np.linspace(train_x.min() - OOD_MARGIN, train_x.max() + OOD_MARGIN, OOD_POINTS)
    rng = make_rng(seed, task_id, len(SPLITS) - 1)
    splits["test_ood"] = Dataset(grid.reshape(-1, 1), _responses(curve, grid, task, rng), name, seed)
    logger.debug(
        "Generated synthetic dataset",
        {"dataset": name, "seed": seed, "sizes": {k: len(v) for k, v in splits.items()}},
    )
    return SyntheticSplits(task=task, **splits)


def header_for(d: int, o: int) -> list[str]:
    return [f"x_{i}" for i in range(d)] + [f"y_{j}" for j in range(o)]


def save_csv(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        np.hstack([dataset.inputs, dataset.targets]), columns=header_for(dataset.d, dataset.o)
    )
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _split_header(columns: list[str]) -> tuple[int, int]:
    d = sum(1 for c in columns if c.startswith("x_"))
    o = len(columns) - d
    if d < 1 or o < 1 or columns != header_for(d, o):
        raise SchemaError(
            f"Header must read x_0..x_(d-1),y_0..y_(o-1); got {','.join(columns)}"
        )
    return d, o


def _parse_float(text: str) -> float:
    """Correctly rounded parse, so values written with %.17g read back bit for bit."""
    try:
        return float(text.strip())
    except ValueError:
        return float("nan")


def load_csv(path: str | Path, name: str = "", seed: int = 0) -> Dataset:
    """Read a dataset CSV. Line numbers in errors are 1-based and count the header."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} is empty", line=1) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(f"Malformed row in {path}: {e}", line=int(match.group(1)) if match else None) from e

    columns = [str(c).strip() for c in frame.columns]
    d, o = _split_header(columns)
    if frame.shape[0] == 0:
        raise ParseError(f"{path} has a header but no data rows", line=2)

    values = frame.apply(lambda col: col.map(_parse_float)).to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        raise ParseError(
            f"Non-numeric or non-finite value in {path}: {','.join(frame.iloc[row])}",
            line=row + 2,
        )
    return Dataset(values[:, :d], values[:, d:], name or path.stem, seed)


def metadata(dataset: Dataset) -> dict:
    return {
        "name": dataset.name,
        "seed": dataset.seed,
        "n": dataset.n,
        "d": dataset.d,
        "o": dataset.o,
        "generator_version": GENERATOR_VERSION,
    }


def save_metadata(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(json.dumps(metadata(dataset), indent=2, sort_keys=True) + "\n")


def save_splits(splits: SyntheticSplits, out_dir: str | Path) -> list[Path]:
    """Write every split as <name>_<split>.csv with a .meta.json sidecar."""
    out_dir = Path(out_dir)
    written = []
    for split, dataset in splits.as_dict().items():
        csv_path = out_dir / f"{dataset.name}_{split}.csv"
        save_csv(dataset, csv_path)
        save_metadata(dataset, csv_path.with_suffix(".meta.json"))
        written.append(csv_path)
    return written
