"""Aggregation of metric cells over phases, videos and runs.

A ResultTensor holds one tri-state cell per (phase, video, run).  Because
excluded cells drop out of each averaging stage separately, the order of
collapsing matters; AveragingOrder makes the choice explicit:

* FLAT: one mean over every defined cell.
* PHASE_FIRST: mean over phases within each (video, run), then mean of
  those group means.
* VIDEO_FIRST: mean over videos and runs within each phase, then mean of
  the per-phase means.

Spread is reported as the sample standard deviation across one axis after
collapsing the other two by the same defined-cell mean.  CORRECTED applies
Bessel's k-1 correction; UNCORRECTED divides by k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping

from .confusion import ConfusionMatrix
from .errors import PhaseEvalError
from .metrics import (
    EXCLUDED_CELL,
    MetricCell,
    UndefinedPolicy,
    accuracy,
    macro_f1_of_means,
    macro_metric,
    phase_metric,
    resolve_cell,
)


class NoDefinedCells(PhaseEvalError):
    """An average over zero defined cells has no value."""


class InsufficientPoints(PhaseEvalError):
    """A standard deviation needs at least two points."""


class AveragingOrder(Enum):
    FLAT = "flat"
    PHASE_FIRST = "phase-first"
    VIDEO_FIRST = "video-first"


class StdMode(Enum):
    CORRECTED = "corrected"
    UNCORRECTED = "uncorrected"


VIDEOS = "videos"
PHASES = "phases"
RUNS = "runs"
AXES = (VIDEOS, PHASES, RUNS)


@dataclass(frozen=True)
class SummarySpec:
    std_mode: StdMode = StdMode.CORRECTED
    order: AveragingOrder = AveragingOrder.FLAT


@dataclass(frozen=True)
class MetricSummary:
    """Mean plus per-axis spreads; None marks a statistic with no value
    (a single-point axis, or no defined cells at all)."""

    mean: float | None
    sd_videos: float | None
    sd_phases: float | None
    sd_runs: float | None


@dataclass(frozen=True)
class ResultTensor:
    """Cells laid out phase-major, then video, then run.

    The phase axis is (None,) for video-level metrics such as accuracy,
    where no per-phase decomposition exists.
    """

    phases: tuple[int | None, ...]
    videos: tuple[int, ...]
    runs: tuple[str, ...]
    cells: tuple[MetricCell, ...]

    def __post_init__(self):
        if not (self.phases and self.videos and self.runs):
            raise ValueError("every tensor axis needs at least one entry")
        expected = len(self.phases) * len(self.videos) * len(self.runs)
        if len(self.cells) != expected:
            raise ValueError(f"expected {expected} cells, got {len(self.cells)}")

    @classmethod
    def build(
        cls,
        phases: Iterable[int | None],
        videos: Iterable[int],
        runs: Iterable[str],
        fn: Callable[[int | None, int, str], MetricCell],
    ) -> "ResultTensor":
        phases = tuple(phases)
        videos = tuple(videos)
        runs = tuple(runs)
        cells = tuple(
            fn(p, v, r) for p in phases for v in videos for r in runs
        )
        return cls(phases, videos, runs, cells)

    def _index(self, pi: int, vi: int, ri: int) -> int:
        return (pi * len(self.videos) + vi) * len(self.runs) + ri

    def cell_at(self, pi: int, vi: int, ri: int) -> MetricCell:
        return self.cells[self._index(pi, vi, ri)]

    def map_cells(
        self, fn: Callable[[int | None, int, str, MetricCell], MetricCell]
    ) -> "ResultTensor":
        cells = tuple(
            fn(p, v, r, self.cell_at(pi, vi, ri))
            for pi, p in enumerate(self.phases)
            for vi, v in enumerate(self.videos)
            for ri, r in enumerate(self.runs)
        )
        return ResultTensor(self.phases, self.videos, self.runs, cells)

    def axis_groups(self, axis: str) -> list[list[MetricCell]]:
        """Cells grouped by position along `axis`, in axis order."""
        nph, nv, nr = len(self.phases), len(self.videos), len(self.runs)
        if axis == PHASES:
            return [
                [self.cell_at(pi, vi, ri) for vi in range(nv) for ri in range(nr)]
                for pi in range(nph)
            ]
        if axis == VIDEOS:
            return [
                [self.cell_at(pi, vi, ri) for pi in range(nph) for ri in range(nr)]
                for vi in range(nv)
            ]
        if axis == RUNS:
            return [
                [self.cell_at(pi, vi, ri) for pi in range(nph) for vi in range(nv)]
                for ri in range(nr)
            ]
        raise ValueError(f"unknown axis {axis!r}")


def mean_cells(cells: Iterable[MetricCell]) -> MetricCell:
    """Mean over defined cells; undefined cells are skipped like excluded
    ones, so resolve policies before averaging.  Excluded when nothing
    defined remains."""
    values = [c.value for c in cells if c.is_defined]
    if not values:
        return EXCLUDED_CELL
    return MetricCell.defined(math.fsum(values) / len(values))


def ordered_mean(tensor: ResultTensor, order: AveragingOrder) -> float:
    """Collapse a tensor to one number under the given averaging order."""
    if order is AveragingOrder.FLAT:
        overall = mean_cells(tensor.cells)
        if not overall.is_defined:
            raise NoDefinedCells("tensor has no defined cells")
        return overall.value
    if order is AveragingOrder.PHASE_FIRST:
        groups = [
            [tensor.cell_at(pi, vi, ri) for pi in range(len(tensor.phases))]
            for vi in range(len(tensor.videos))
            for ri in range(len(tensor.runs))
        ]
    elif order is AveragingOrder.VIDEO_FIRST:
        groups = tensor.axis_groups(PHASES)
    else:
        raise ValueError(f"unknown order {order!r}")
    stage = mean_cells(mean_cells(g) for g in groups)
    if not stage.is_defined:
        raise NoDefinedCells("tensor has no defined cells")
    return stage.value


def _sample_std(points: list[float], mode: StdMode) -> float:
    k = len(points)
    if k < 2:
        raise InsufficientPoints(f"need at least 2 points, got {k}")
    m = math.fsum(points) / k
    ss = math.fsum((x - m) ** 2 for x in points)
    denom = k - 1 if mode is StdMode.CORRECTED else k
    return math.sqrt(ss / denom)


def std_over(tensor: ResultTensor, axis: str, mode: StdMode) -> float:
    """Spread across one axis: collapse the other two axes per position by
    the defined-cell mean, then take the sample standard deviation of the
    positions that retain a value."""
    points = [
        g.value for g in (mean_cells(cells) for cells in tensor.axis_groups(axis))
        if g.is_defined
    ]
    return _sample_std(points, mode)


def summarize(tensor: ResultTensor, spec: SummarySpec = SummarySpec()) -> MetricSummary:
    """Mean under the requested averaging order plus spreads across all
    three axes.  A spread over fewer than two retained positions is None; with a
    single run, sd_runs is always None."""
    try:
        mean = ordered_mean(tensor, spec.order)
    except NoDefinedCells:
        mean = None
    sds = {}
    for axis in AXES:
        try:
            sds[axis] = std_over(tensor, axis, spec.std_mode)
        except InsufficientPoints:
            sds[axis] = None
    return MetricSummary(mean, sds[VIDEOS], sds[PHASES], sds[RUNS])


def _check_grid(matrices: Mapping[int, Mapping[str, ConfusionMatrix]]):
    videos = tuple(sorted(matrices))
    if not videos:
        raise ValueError("need at least one video")
    runs = tuple(sorted(matrices[videos[0]]))
    for v in videos:
        if tuple(sorted(matrices[v])) != runs:
            raise ValueError(f"video {v} has a different run set")
    if not runs:
        raise ValueError("need at least one run")
    return videos, runs


def phase_metric_tensor(
    kind: str,
    matrices: Mapping[int, Mapping[str, ConfusionMatrix]],
    phase_count: int,
) -> ResultTensor:
    """Raw per-phase cells (no policy applied) for a video/run grid of
    confusion matrices."""
    videos, runs = _check_grid(matrices)
    return ResultTensor.build(
        range(phase_count),
        videos,
        runs,
        lambda p, v, r: phase_metric(kind, matrices[v][r], p),
    )


def video_metric_tensor(
    fn: Callable[[ConfusionMatrix], MetricCell],
    matrices: Mapping[int, Mapping[str, ConfusionMatrix]],
) -> ResultTensor:
    """Single-phase-axis tensor for video-level metrics (accuracy, macro
    means): fn maps one confusion matrix to one cell."""
    videos, runs = _check_grid(matrices)
    return ResultTensor.build(
        (None,), videos, runs, lambda p, v, r: fn(matrices[v][r])
    )


def accuracy_tensor(
    matrices: Mapping[int, Mapping[str, ConfusionMatrix]]
) -> ResultTensor:
    return video_metric_tensor(accuracy, matrices)


def macro_tensor(
    kind: str,
    matrices: Mapping[int, Mapping[str, ConfusionMatrix]],
    policy: UndefinedPolicy,
) -> ResultTensor:
    return video_metric_tensor(lambda m: macro_metric(kind, m, policy), matrices)


def macro_f1_of_means_tensor(
    matrices: Mapping[int, Mapping[str, ConfusionMatrix]],
    policy: UndefinedPolicy,
) -> ResultTensor:
    return video_metric_tensor(lambda m: macro_f1_of_means(m, policy), matrices)
