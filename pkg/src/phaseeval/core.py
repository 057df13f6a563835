"""Core domain types: phase vocabularies, label sequences, segments,
workflow graphs and the built-in cholecystectomy dataset splits.

Video ids are 1-based (matching the common file naming video01..video80),
time indices are 0-based frame positions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import PhaseEvalError


class OutOfRangeLabel(PhaseEvalError):
    """A label lies outside the declared phase vocabulary."""


class EmptySequence(PhaseEvalError):
    """A label sequence must contain at least one frame."""


class UnknownSplit(PhaseEvalError):
    """No built-in split is registered under the requested name."""


@dataclass(frozen=True)
class PhaseSet:
    """Label vocabulary: phases are the integers 0 .. count-1."""

    count: int
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("phase count must be at least 1")
        if self.names is not None and len(self.names) != self.count:
            raise ValueError("need exactly one name per phase")

    def __iter__(self):
        return iter(range(self.count))

    def __contains__(self, phase: int) -> bool:
        return 0 <= phase < self.count

    def name_of(self, phase: int) -> str:
        if self.names is None:
            return str(phase)
        return self.names[phase]


CHOLEC80_PHASE_NAMES = (
    "Preparation",
    "Calot triangle dissection",
    "Clipping and cutting",
    "Gallbladder dissection",
    "Gallbladder packaging",
    "Cleaning and coagulation",
    "Gallbladder retraction",
)


def cholec80_phases() -> PhaseSet:
    """The seven-phase cholecystectomy vocabulary."""
    return PhaseSet(7, CHOLEC80_PHASE_NAMES)


@dataclass(frozen=True)
class LabelSequence:
    """Frame-wise phase labels at a fixed temporal resolution.

    The default resolution of 1.0 seconds per frame matches annotations
    downsampled to 1 fps.
    """

    labels: tuple[int, ...]
    resolution_seconds: float = 1.0

    def __post_init__(self):
        labels = tuple(int(x) for x in self.labels)
        if not labels:
            raise EmptySequence("label sequence has no frames")
        if any(x < 0 for x in labels):
            raise OutOfRangeLabel("labels must be non-negative")
        if not self.resolution_seconds > 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, t: int) -> int:
        return self.labels[t]


def validate_sequence(seq: LabelSequence, phases: PhaseSet) -> None:
    """Raise OutOfRangeLabel if any frame label is outside the vocabulary."""
    for t, label in enumerate(seq.labels):
        if label >= phases.count:
            raise OutOfRangeLabel(
                f"label {label} at frame {t} exceeds phase range 0..{phases.count - 1}"
            )


@dataclass(frozen=True)
class Segment:
    """Maximal run of one phase; start and end are inclusive frame indices."""

    phase: int
    start: int
    end: int

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError("segment end precedes start")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def extract_segments(seq: LabelSequence) -> tuple[Segment, ...]:
    """Decompose a sequence into its maximal constant-phase runs.

    Consecutive segments always carry distinct phases, and concatenating
    the segments reproduces the sequence exactly.
    """
    segments = []
    start = 0
    labels = seq.labels
    for t in range(1, len(labels)):
        if labels[t] != labels[start]:
            segments.append(Segment(labels[start], start, t - 1))
            start = t
    segments.append(Segment(labels[start], start, len(labels) - 1))
    return tuple(segments)


@dataclass(frozen=True)
class WorkflowGraph:
    """Directed graph of permitted phase transitions; self-loops are not edges."""

    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop ({a}, {b}) is not a transition")
            if a < 0 or b < 0:
                raise ValueError("phase ids must be non-negative")
        object.__setattr__(self, "edges", edges)

    def has_edge(self, src: int, dst: int) -> bool:
        return (src, dst) in self.edges

    def successors(self, phase: int) -> tuple[int, ...]:
        return tuple(sorted(b for a, b in self.edges if a == phase))

    def predecessors(self, phase: int) -> tuple[int, ...]:
        return tuple(sorted(a for a, b in self.edges if b == phase))


def cholec80_graph() -> WorkflowGraph:
    """Transition structure of the seven cholecystectomy phases.

    Linear through the first four transitions, then packaging (4) and
    cleaning (5) may occur in either order, and retraction (6) may be
    interleaved with cleaning.
    """
    return WorkflowGraph(
        frozenset(
            {
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (3, 5),
                (4, 5),
                (4, 6),
                (5, 4),
                (5, 6),
                (6, 5),
            }
        )
    )


def linear_graph(count: int) -> WorkflowGraph:
    """Strictly sequential workflow 0 -> 1 -> ... -> count-1."""
    if count < 2:
        raise ValueError("a linear workflow needs at least two phases")
    return WorkflowGraph(frozenset((p, p + 1) for p in range(count - 1)))


@dataclass(frozen=True)
class SplitDefinition:
    """Named partition of video ids into train / validation / test lists."""

    name: str
    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        ids = list(self.train) + list(self.validation) + list(self.test)
        if len(set(ids)) != len(ids):
            raise ValueError(f"split {self.name!r} reuses a video id")


def _ids(first: int, last: int) -> tuple[int, ...]:
    return tuple(range(first, last + 1))


def cv_folds() -> tuple[SplitDefinition, ...]:
    """The five cross-validation folds of the 48:12:20 protocol.

    Validation blocks are contiguous 12-id windows over videos 1..60
    (fold k validates on 12k+1 .. 12k+12); videos 61..80 are a fixed
    test set shared by all folds.
    """
    folds = []
    for k in range(5):
        val = _ids(12 * k + 1, 12 * k + 12)
        train = tuple(v for v in _ids(1, 60) if v not in set(val))
        folds.append(
            SplitDefinition(f"48:12:20-cv/fold{k}", train, val, _ids(61, 80))
        )
    return tuple(folds)


_BUILTIN_SPLITS = {
    "32:8:40": lambda: SplitDefinition(
        "32:8:40", _ids(1, 32), _ids(33, 40), _ids(41, 80)
    ),
    "40:40": lambda: SplitDefinition("40:40", _ids(1, 40), (), _ids(41, 80)),
    "40:8:32": lambda: SplitDefinition(
        "40:8:32", _ids(1, 40), _ids(41, 48), _ids(49, 80)
    ),
    "40:20:20": lambda: SplitDefinition(
        "40:20:20", _ids(1, 40), _ids(41, 60), _ids(61, 80)
    ),
    "60:20": lambda: SplitDefinition("60:20", _ids(1, 60), (), _ids(61, 80)),
    "48:12:20-cv": lambda: cv_folds()[0],
}


def builtin_split_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTIN_SPLITS))


def resolve_split(name: str) -> SplitDefinition:
    """Look up a built-in split by name.

    The cross-validation protocol resolves to its first fold; use
    cv_folds() for all five.
    """
    try:
        factory = _BUILTIN_SPLITS[name]
    except KeyError:
        known = ", ".join(builtin_split_names())
        raise UnknownSplit(f"unknown split {name!r}; built-ins: {known}") from None
    return factory()
