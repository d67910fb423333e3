"""Few-shot clinical action recognition, sequence analysis and competency statistics."""
from .core import (
    BACKGROUND,
    CompetencyRecord,
    FeatureSequence,
    MacroMapping,
    Segment,
    Taxonomy,
    Timeline,
    ValidationError,
)
from .estimator import PrototypeHMMSegmenter

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "CompetencyRecord",
    "FeatureSequence",
    "MacroMapping",
    "PrototypeHMMSegmenter",
    "Segment",
    "Taxonomy",
    "Timeline",
    "ValidationError",
    "__version__",
]
