"""Performance-mean and forgetting-mean over a task-by-task accuracy matrix."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class AccuracyMatrix:
    """Lower-triangular matrix: ``values[i, j]`` is the score on task ``j``
    measured right after training task ``i`` (defined for ``j <= i``).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"accuracy matrix must be square, got shape {v.shape}")
        lower = np.tril_indices_from(v)
        if not np.all(np.isfinite(v[lower])):
            raise ValueError("incomplete matrix: lower triangle contains non-finite entries")
        if np.any(v[lower] < 0.0) or np.any(v[lower] > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        upper = np.triu_indices_from(v, k=1)
        if not np.all(np.isnan(v[upper])):
            raise ValueError("entries above the diagonal must be NaN")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rows(cls, rows) -> "AccuracyMatrix":
        """Build from ragged rows, row ``i`` holding the ``i + 1`` scores so far."""
        m = len(rows)
        values = np.full((m, m), np.nan)
        for i, row in enumerate(rows):
            if len(row) != i + 1:
                raise ValueError(f"row {i} has {len(row)} entries, expected {i + 1}")
            values[i, :i + 1] = row
        return cls(values)

    @property
    def num_tasks(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        """One ``i,j,value`` line per defined entry, row-major."""
        lines = ["i,j,value"]
        for i in range(self.num_tasks):
            for j in range(i + 1):
                lines.append(f"{i},{j},{self.values[i, j]:.10g}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        text = Path(path).read_text().strip().splitlines()
        if not text or text[0].strip() != "i,j,value":
            raise ValueError(f"{path}: expected header 'i,j,value'")
        entries = {}
        for lineno, line in enumerate(text[1:], start=2):
            parts = line.strip().split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'i,j,value'")
            entries[(int(parts[0]), int(parts[1]))] = float(parts[2])
        m = max(i for i, _ in entries) + 1 if entries else 0
        values = np.full((m, m), np.nan)
        for (i, j), val in entries.items():
            values[i, j] = val
        return cls(values)


@dataclass(frozen=True)
class MetricsReport:
    pm: float
    fm: float
    per_task_forgetting: tuple[float, ...]
    eval_mode: str = "task-aware"
    metric_kind: str = "accuracy"

    def to_dict(self) -> dict:
        return {"pm": self.pm, "fm": self.fm,
                "per_task_forgetting": list(self.per_task_forgetting),
                "eval_mode": self.eval_mode, "metric_kind": self.metric_kind}


def performance_mean(matrix: AccuracyMatrix) -> float:
    """Mean of the just-after-training scores, (1/M) sum_j A[j][j]."""
    return float(np.mean(np.diag(matrix.values)))


def forgetting_mean(matrix: AccuracyMatrix,
                    denominator: str = "m-1") -> tuple[float, np.ndarray]:
    """How much each task lost between its own training and the end of the run.

    f_j = A[j][j] - A[M-1][j]. The final task's difference is identically zero;
    ``denominator`` controls whether that zero is averaged in ("m") or the mean
    runs over the M-1 informative terms only ("m-1", the default).
    """
    m = matrix.num_tasks
    if m < 2:
        raise ValueError("forgetting needs at least 2 tasks")
    if denominator not in ("m-1", "m"):
        raise ValueError(f"denominator must be 'm-1' or 'm', got {denominator!r}")
    diffs = np.array([matrix.values[j, j] - matrix.values[m - 1, j] for j in range(m - 1)])
    if denominator == "m-1":
        return float(np.mean(diffs)), diffs
    padded = np.append(diffs, 0.0)
    return float(np.mean(padded)), padded


def accuracy(predictions, labels) -> float:
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    if pred.shape != lab.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {lab.shape}")
    return float(np.mean(pred == lab))


def micro_f1(predictions, labels) -> float:
    """Micro-averaged F1 from pooled per-class true/false positive counts.

    For single-label predictions this equals accuracy (every wrong prediction
    is one false positive and one false negative), but the computation goes
    through the pooled counts rather than assuming the identity.
    """
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    if pred.shape != lab.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {lab.shape}")
    classes = np.union1d(pred, lab)
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((pred == c) & (lab == c)))
        fp += int(np.sum((pred == c) & (lab != c)))
        fn += int(np.sum((pred != c) & (lab == c)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2.0 * precision * recall / (precision + recall))
