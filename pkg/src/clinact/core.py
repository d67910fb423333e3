"""Domain types shared across the package.

Holds the 17-label action taxonomy (16 clinical actions plus background),
the 23-item competency rubric, the macro-category grouping used for process
models, and the small value types passed between pipeline stages.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np


class ClinactError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ClinactError, ValueError):
    """Input violates a documented precondition."""


class ParseError(ValidationError):
    """A file could not be decoded."""


class DegenerateInputError(ValidationError):
    pass


class EmptyEvaluationError(ValidationError):
    """Nothing left to evaluate after masking."""


class NoObservableItemsError(ValidationError):
    pass


class MappingError(ValidationError):
    pass


BACKGROUND = 0
NUM_CLASSES = 16
NUM_LABELS = NUM_CLASSES + 1

ACTION_NAMES: tuple[str, ...] = (
    "Background",
    "Perform Hand Hygiene",
    "Put on Gloves",
    "Check Patient Wristband",
    "Check Patient History Screen",
    "Examine Med Bottle",
    "Review Vital Signs Screen",
    "Assess Vital Signs (Palpate Wrist)",
    "Auscultate Lung Sounds",
    "Measure Apical Pulse",
    "Measure Temperature",
    "Measure Blood Pressure",
    "Writing",
    "Use Calculator",
    "Check Phone",
    "Prepare Medication",
    "Apply Medication to Patient",
)

# Screen-time ratio numerator: patient-history and vital-signs screens.
SCREEN_LABELS = frozenset({4, 6})

NUM_RUBRIC_ITEMS = 23

RUBRIC_ITEMS: tuple[str, ...] = (
    "Obtains pertinent data",
    "Performs follow-up assessments as needed",
    "Assesses the environment",
    "Communicates effectively with team",
    "Communicates effectively with patient",
    "Documents clearly, concisely, and accurately",
    "Responds to abnormal findings appropriately",
    "Promotes professionalism",
    "Interprets vital signs",
    "Interprets laboratory results",
    "Interprets subjective/objective data",
    "Prioritizes appropriately",
    "Performs evidence-based interventions",
    "Provides evidence-based rationale for interventions",
    "Evaluates evidence-based interventions and outcomes",
    "Reflects on clinical experience",
    "Delegates appropriately",
    "Uses patient identifiers",
    "Utilizes standardized practices and precautions",
    "Administers medications safely",
    "Manages technology and equipment",
    "Performs procedures correctly",
    "Reflects on potential hazards and errors",
)

# 1-based item numbers that are observable from silent egocentric video.
VIDEO_OBSERVABLE_ITEMS = frozenset({1, 2, 6, 9, 12, 13, 18, 19, 20, 21, 22})

VIDEO_OBSERVABLE_FLAGS: tuple[bool, ...] = tuple(
    (i + 1) in VIDEO_OBSERVABLE_ITEMS for i in range(NUM_RUBRIC_ITEMS)
)

MACRO_NAMES: tuple[str, ...] = (
    "Examination",
    "Hygiene",
    "Screen",
    "Writing",
    "Calculator",
    "Med Bottle",
    "Prep Med",
    "Apply Med",
)

_DEFAULT_MACRO: dict[int, str] = {
    7: "Examination",
    9: "Examination",
    8: "Examination",
    10: "Examination",
    11: "Examination",
    1: "Hygiene",
    2: "Hygiene",
    4: "Screen",
    6: "Screen",
    12: "Writing",
    13: "Calculator",
    5: "Med Bottle",
    15: "Prep Med",
    16: "Apply Med",
}
# Wristband (3) and Phone (14) belong to no macro category in the
# default grouping; they are dropped during macro aggregation.
_DEFAULT_EXCLUDED = frozenset({3, 14})


class ActionLabel(NamedTuple):
    id: int
    name: str


@dataclass(frozen=True)
class Taxonomy:
    """Bidirectional id/name lookup over the 17 action labels."""

    names: tuple[str, ...] = ACTION_NAMES

    def __post_init__(self):
        if len(self.names) != NUM_LABELS:
            raise ValidationError(f"taxonomy needs {NUM_LABELS} labels, got {len(self.names)}")
        if len(set(self.names)) != NUM_LABELS:
            raise ValidationError("taxonomy label names must be unique")
        if self.names[0] != "Background":
            raise ValidationError("label 0 must be named 'Background'")

    @property
    def labels(self) -> list[ActionLabel]:
        return [ActionLabel(i, n) for i, n in enumerate(self.names)]

    def name_of(self, label_id: int) -> str:
        if not 0 <= label_id < NUM_LABELS:
            raise ValidationError(f"label id {label_id} outside 0..{NUM_LABELS - 1}")
        return self.names[label_id]

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown action name {name!r}") from None


@dataclass(frozen=True)
class MacroMapping:
    """Assignment of clinical action ids to macro categories.

    ``excluded`` lists ids that are deliberately left out of every macro
    category; segments with those labels are dropped by
    :func:`clinact.procmodel.to_macro`. Any other id missing from
    ``macro_of`` is a mapping error.
    """

    macro_of: Mapping[int, str] = field(default_factory=lambda: dict(_DEFAULT_MACRO))
    excluded: frozenset = _DEFAULT_EXCLUDED

    def __post_init__(self):
        ids = set(self.macro_of)
        if BACKGROUND in ids or BACKGROUND in self.excluded:
            raise MappingError("background cannot be mapped to a macro category")
        if ids & set(self.excluded):
            raise MappingError(f"ids both mapped and excluded: {sorted(ids & set(self.excluded))}")
        covered = ids | set(self.excluded)
        if covered != set(range(1, NUM_CLASSES + 1)):
            missing = sorted(set(range(1, NUM_CLASSES + 1)) - covered)
            extra = sorted(covered - set(range(1, NUM_CLASSES + 1)))
            raise MappingError(f"mapping must cover ids 1..{NUM_CLASSES}; missing={missing} extra={extra}")

    @property
    def macros(self) -> list[str]:
        return sorted(set(self.macro_of.values()))

    def partition(self) -> dict[str, frozenset]:
        groups: dict[str, set] = {}
        for k, m in self.macro_of.items():
            groups.setdefault(m, set()).add(k)
        return {m: frozenset(v) for m, v in groups.items()}

    def lookup(self, label_id: int) -> Optional[str]:
        """Macro name for ``label_id``; None if the id is excluded."""
        if label_id in self.excluded:
            return None
        try:
            return self.macro_of[label_id]
        except KeyError:
            raise MappingError(f"label id {label_id} has no macro category") from None


def load_taxonomy_csv(path) -> tuple[Taxonomy, MacroMapping]:
    """Read an ``id,name,macro`` override file.

    An empty ``macro`` cell excludes that id from macro aggregation; the
    background row (id 0) must leave it empty.
    """
    names: dict[int, str] = {}
    macro: dict[int, str] = {}
    excluded = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["id", "name", "macro"]:
            raise ParseError(f"{path}: header must be 'id,name,macro'")
        for lineno, row in enumerate(reader, start=2):
            try:
                i = int(row["id"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}:{lineno}: bad id {row['id']!r}") from None
            if i in names:
                raise ParseError(f"{path}:{lineno}: duplicate id {i}")
            names[i] = row["name"].strip()
            m = (row["macro"] or "").strip()
            if i == BACKGROUND:
                if m:
                    raise MappingError(f"{path}:{lineno}: background cannot carry a macro")
            elif m:
                macro[i] = m
            else:
                excluded.add(i)
    if sorted(names) != list(range(NUM_LABELS)):
        raise ParseError(f"{path}: ids must be exactly 0..{NUM_LABELS - 1}")
    tax = Taxonomy(tuple(names[i] for i in range(NUM_LABELS)))
    return tax, MacroMapping(macro, frozenset(excluded))


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    session_id: str
    frames: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"{self.session_id}: frames must be a non-empty T x D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{self.session_id}: frames contain non-finite values")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class Timeline:
    session_id: str
    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 1:
            raise ValidationError("timeline labels must be one-dimensional")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.mod(arr, 1) == 0):
                raise ValidationError("timeline labels must be integers")
        arr = arr.astype(np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= NUM_LABELS):
            raise ValidationError(f"{self.session_id}: labels outside 0..{NUM_LABELS - 1}")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)

    def __len__(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Timeline):
            return NotImplemented
        return self.session_id == other.session_id and np.array_equal(self.labels, other.labels)

    __hash__ = None


class Segment(NamedTuple):
    label: int
    start: int
    duration: int

    @property
    def end(self) -> int:
        return self.start + self.duration


def video_observable_pct(items: Sequence[Optional[float]], item_flags: Sequence[bool] = VIDEO_OBSERVABLE_FLAGS) -> float:
    """Percentage score from the flagged rubric items that were rated.

    Computed as ``100 * mean(present flagged scores) / 5``; unrated items
    are skipped.
    """
    if len(items) != len(item_flags):
        raise ValidationError(f"expected {len(item_flags)} items, got {len(items)}")
    present = [s for s, flag in zip(items, item_flags) if flag and s is not None]
    if not present:
        raise NoObservableItemsError("no observable items rated")
    return 100.0 * (sum(present) / len(present)) / 5.0


@dataclass(frozen=True)
class CompetencyRecord:
    session_id: str
    items: tuple[Optional[float], ...]

    def __post_init__(self):
        items = tuple(self.items)
        if len(items) != NUM_RUBRIC_ITEMS:
            raise ValidationError(f"{self.session_id}: expected {NUM_RUBRIC_ITEMS} rubric items, got {len(items)}")
        for k, s in enumerate(items, start=1):
            if s is not None and not 1 <= s <= 5:
                raise ValidationError(f"{self.session_id}: item_{k} score {s} outside 1..5")
        object.__setattr__(self, "items", items)

    def item(self, number: int) -> Optional[float]:
        """Score for 1-based rubric item ``number``."""
        return self.items[number - 1]

    @property
    def video_observable_pct(self) -> float:
        return video_observable_pct(self.items)
