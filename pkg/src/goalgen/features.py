"""Objects, their feature encoding, and the canonical enumerations.

Every object is one colour plus one shape. The feature basis is the
concatenation of the 4 colour indicators and the 6 shape indicators, in
the fixed order of FEATURE_NAMES; fitted saliency matrices use this row
order, so it must never change.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Colour(str, Enum):
    BLACK = "black"
    BLUE = "blue"
    GREEN = "green"
    RED = "red"


class Shape(str, Enum):
    CIRCLE = "circle"
    CROSS = "cross"
    DIAMOND = "diamond"
    HOLLOW_DIAMOND = "hollow-diamond"
    PLUS = "plus"
    RING = "ring"


FEATURE_NAMES: tuple[str, ...] = tuple(c.value for c in Colour) + tuple(
    s.value for s in Shape
)
N_FEATURES = len(FEATURE_NAMES)  # 10

# Colours/shapes that appear as training goals; green, circle and
# hollow-diamond are held out for evaluation only.
TRAINING_COLOURS: tuple[Colour, ...] = (Colour.BLACK, Colour.BLUE, Colour.RED)
TRAINING_SHAPES: tuple[Shape, ...] = (
    Shape.CROSS,
    Shape.DIAMOND,
    Shape.PLUS,
    Shape.RING,
)

_COLOUR_INDEX = {c: i for i, c in enumerate(Colour)}
_SHAPE_INDEX = {s: len(Colour) + i for i, s in enumerate(Shape)}


@dataclass(frozen=True, order=True)
class ObjectFeatures:
    """A coloured shape; the things agents may pursue."""

    colour: Colour
    shape: Shape

    def __post_init__(self) -> None:
        object.__setattr__(self, "colour", Colour(self.colour))
        object.__setattr__(self, "shape", Shape(self.shape))

    @property
    def name(self) -> str:
        return f"{self.colour.value} {self.shape.value}"

    def feature_indices(self) -> tuple[int, int]:
        """Indices of the two active components in the feature basis."""
        return _COLOUR_INDEX[self.colour], _SHAPE_INDEX[self.shape]


def encode_features(obj: ObjectFeatures | None) -> np.ndarray:
    """Two-hot feature vector of an object; the null object encodes to zeros."""
    vec = np.zeros(N_FEATURES)
    if obj is not None:
        ci, si = obj.feature_indices()
        vec[ci] = 1.0
        vec[si] = 1.0
    return vec


def enumerate_objects() -> list[ObjectFeatures]:
    """All 24 colour/shape combinations in canonical (colour-major) order."""
    return [ObjectFeatures(c, s) for c, s in itertools.product(Colour, Shape)]


def enumerate_training_goals() -> list[ObjectFeatures]:
    """The 12 objects eligible as training-stage goals."""
    return [
        ObjectFeatures(c, s)
        for c, s in itertools.product(TRAINING_COLOURS, TRAINING_SHAPES)
    ]


def enumerate_eval_pairs() -> list[tuple[ObjectFeatures, ObjectFeatures]]:
    """All 276 unordered object pairs, in canonical order."""
    objects = enumerate_objects()
    return list(itertools.combinations(objects, 2))


_OBJECT_ORDER = {obj: i for i, obj in enumerate(enumerate_objects())}


def object_index(obj: ObjectFeatures) -> int:
    """Position of an object in the canonical enumeration."""
    return _OBJECT_ORDER[obj]
