"""In-memory datasets."""

from dataclasses import dataclass

import numpy as np

from src.models.errors import DimensionMismatch, NonFiniteResult


@dataclass(frozen=True)
class Dataset:
    """Inputs n×d and targets n×o. Class labels are stored as a single integer-valued column."""

    inputs: np.ndarray
    targets: np.ndarray
    name: str = ""
    seed: int = 0

    def __post_init__(self):
        x = np.array(self.inputs, dtype=float)
        y = np.array(self.targets, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if x.ndim != 2 or y.ndim != 2:
            raise DimensionMismatch("Inputs and targets must be 2-D")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"{x.shape[0]} input rows but {y.shape[0]} target rows"
            )
        if x.shape[0] < 1:
            raise DimensionMismatch("Dataset must contain at least one row")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteResult(f"Dataset {self.name!r} contains NaN or Inf")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def o(self) -> int:
        return self.targets.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return self.targets[:, 0].astype(int)

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[index], self.targets[index], self.name, self.seed)

    def with_targets(self, targets: np.ndarray) -> "Dataset":
        return Dataset(self.inputs, targets, self.name, self.seed)


@dataclass(frozen=True)
class SyntheticSplits:
    train: Dataset
    val: Dataset
    test_id: Dataset
    test_ood: Dataset
    task: str = "regression"

    def as_dict(self) -> dict[str, Dataset]:
        return {
            "train": self.train,
            "val": self.val,
            "test_id": self.test_id,
            "test_ood": self.test_ood,
        }
