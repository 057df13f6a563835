"""Frame-count metrics over a confusion matrix, with explicit handling of
zero denominators.

Per-phase scores are tri-state cells: Defined(x), Undefined (a zero
denominator made the ratio meaningless), or Excluded (dropped from any
later averaging).  Whether an Undefined cell becomes Excluded or a filled
constant is a reporting decision, captured by UndefinedPolicy:

* EXCLUDE_UNDEFINED: drop exactly the undefined cells.
* EXCLUDE_MISSING_PHASE: for a phase absent from a video's annotation,
  drop all four metric kinds for that (phase, video), including the
  defined zeros; any remaining undefined cell is dropped too.
* ZERO_FILL / ONE_FILL: replace undefined cells by 0 or 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Collection, Mapping

from .confusion import ConfusionMatrix
from .errors import PhaseEvalError

if TYPE_CHECKING:
    from .aggregate import ResultTensor


class EmptyVideo(PhaseEvalError):
    """Accuracy over zero frames is meaningless."""


class DegenerateMeans(PhaseEvalError):
    """Harmonic combination needs at least one positive operand."""


PRECISION = "precision"
RECALL = "recall"
F1 = "f1"
JACCARD = "jaccard"
METRIC_KINDS = (PRECISION, RECALL, F1, JACCARD)


class CellState(Enum):
    DEFINED = "defined"
    UNDEFINED = "undefined"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class MetricCell:
    """One tri-state metric value.

    Defined values are finite and non-negative; values above 1 occur only
    for untruncated relaxed precision and recall.
    """

    state: CellState
    value: float | None = None

    def __post_init__(self):
        if self.state is CellState.DEFINED:
            if self.value is None or not math.isfinite(self.value) or self.value < 0:
                raise ValueError(f"defined cell needs a finite value >= 0, got {self.value}")
        elif self.value is not None:
            raise ValueError(f"{self.state.value} cell cannot carry a value")

    @classmethod
    def defined(cls, value: float) -> "MetricCell":
        return cls(CellState.DEFINED, float(value))

    @property
    def is_defined(self) -> bool:
        return self.state is CellState.DEFINED


UNDEFINED_CELL = MetricCell(CellState.UNDEFINED)
EXCLUDED_CELL = MetricCell(CellState.EXCLUDED)


class UndefinedPolicy(Enum):
    EXCLUDE_UNDEFINED = "exclude-undefined"
    EXCLUDE_MISSING_PHASE = "exclude-missing-phase"
    ZERO_FILL = "zero-fill"
    ONE_FILL = "one-fill"


def phase_metric(kind: str, matrix: ConfusionMatrix, phase: int) -> MetricCell:
    """Per-phase precision, recall, f1 or jaccard from exact counts.

    Undefined exactly when the denominator is zero: precision needs the
    phase predicted somewhere, recall needs it annotated somewhere, f1 and
    jaccard need it present on at least one side.
    """
    tp = matrix.tp(phase)
    annotated = matrix.row_sum(phase)
    predicted = matrix.col_sum(phase)
    if kind == PRECISION:
        if predicted == 0:
            return UNDEFINED_CELL
        return MetricCell.defined(tp / predicted)
    if kind == RECALL:
        if annotated == 0:
            return UNDEFINED_CELL
        return MetricCell.defined(tp / annotated)
    if kind == F1:
        if annotated + predicted == 0:
            return UNDEFINED_CELL
        return MetricCell.defined(2 * tp / (annotated + predicted))
    if kind == JACCARD:
        union = annotated + predicted - tp
        if union == 0:
            return UNDEFINED_CELL
        return MetricCell.defined(tp / union)
    raise ValueError(f"unknown metric kind {kind!r}")


def accuracy(matrix: ConfusionMatrix) -> MetricCell:
    """Fraction of frames whose prediction matches the annotation."""
    if matrix.total == 0:
        raise EmptyVideo("accuracy over an empty video is undefined")
    correct = sum(matrix.tp(p) for p in range(matrix.phase_count))
    return MetricCell.defined(correct / matrix.total)


def resolve_cell(
    cell: MetricCell, policy: UndefinedPolicy, phase_annotated: bool
) -> MetricCell:
    """Apply an undefined-value policy to a single cell."""
    if policy is UndefinedPolicy.EXCLUDE_MISSING_PHASE and not phase_annotated:
        return EXCLUDED_CELL
    if cell.state is CellState.UNDEFINED:
        if policy is UndefinedPolicy.ZERO_FILL:
            return MetricCell.defined(0.0)
        if policy is UndefinedPolicy.ONE_FILL:
            return MetricCell.defined(1.0)
        return EXCLUDED_CELL
    return cell


def apply_policy(
    tensor: "ResultTensor",
    policy: UndefinedPolicy,
    annotated: Mapping[int, Collection[int]],
) -> "ResultTensor":
    """Resolve every undefined cell of a phase/video/run tensor.

    `annotated` maps video id to the phases its annotation contains.
    """
    return tensor.map_cells(
        lambda phase, video, run, cell: resolve_cell(
            cell, policy, phase in annotated[video]
        )
    )


def harmonic(a: float, b: float) -> float:
    """Harmonic mean of two non-negative numbers; 0 when both are 0."""
    if a + b == 0:
        return 0.0
    return 2 * a * b / (a + b)


def macro_metric(
    kind: str, matrix: ConfusionMatrix, policy: UndefinedPolicy
) -> MetricCell:
    """Mean of the per-phase scores retained by the policy.

    Excluded when the policy leaves no defined phase at all.
    """
    annotated = set(matrix.annotated_phases())
    values = []
    for p in range(matrix.phase_count):
        cell = resolve_cell(phase_metric(kind, matrix, p), policy, p in annotated)
        if cell.is_defined:
            values.append(cell.value)
    if not values:
        return EXCLUDED_CELL
    return MetricCell.defined(math.fsum(values) / len(values))


def macro_f1_of_means(matrix: ConfusionMatrix, policy: UndefinedPolicy) -> MetricCell:
    """Harmonic mean of macro precision and macro recall.

    This is not the mean of per-phase f1 scores; it weights the macro
    means instead and is never smaller than macro f1.  Defined(0) when
    both macro means are zero; Excluded when either macro mean is.
    """
    mp = macro_metric(PRECISION, matrix, policy)
    mr = macro_metric(RECALL, matrix, policy)
    if not (mp.is_defined and mr.is_defined):
        return EXCLUDED_CELL
    return MetricCell.defined(harmonic(mp.value, mr.value))


def f1_upper(mean_precision: float, mean_recall: float) -> float:
    """Harmonic mean of corpus-level mean precision and mean recall.

    An upper bound on the mean of per-video harmonic combinations, so a
    useful cross-check against reported f1 numbers built the same way.
    """
    if mean_precision < 0 or mean_recall < 0:
        raise DegenerateMeans("means must be non-negative")
    if mean_precision + mean_recall == 0:
        raise DegenerateMeans("both means are zero")
    return harmonic(mean_precision, mean_recall)
