"""Frames of discernment, basic belief assignments and the relevance calculus.

Two fixed frames are used throughout the package:

* ``OCCUPANCY`` distinguishes five object classes, free space and void
  (space that cannot be observed, e.g. object interiors).  Mass may be
  assigned to each object singleton, to the union of all object classes,
  to free and to void.
* ``GROUND`` distinguishes street, sidewalk and other ground, plus their
  union for measurements of unknown ground type.

Evidence enters through :func:`not_relevant`, the probability that a single
measurement says nothing about a hypothesis in a cell.  Per-cell products of
these probabilities are kept as log sums; :func:`bba_from_log_accumulator`
turns a finished log sum back into a belief mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Tolerance for BBA invariant checks (mass bounds, sums).
MASS_EPS = 1e-9

# Occupancy frame members.
CAR = "car"
TWO_WHEELER = "two_wheeler"
PEDESTRIAN = "pedestrian"
OTHER_MOBILE = "other_mobile"
IMMOBILE = "immobile"
FREE = "free"
VOID = "void"

# Ground frame members.
STREET = "street"
SIDEWALK = "sidewalk"
OTHER_GROUND = "other_ground"

OBJECT_CLASSES = (CAR, TWO_WHEELER, PEDESTRIAN, OTHER_MOBILE, IMMOBILE)
GROUND_CLASSES = (STREET, SIDEWALK, OTHER_GROUND)

# Canonical semantic label vocabulary for sensor data.  Integer label codes
# index into this tuple; -1 marks an unlabeled element.
SEMANTIC_CLASSES = OBJECT_CLASSES + GROUND_CLASSES
UNLABELED = -1


def semantic_code(name: str) -> int:
    """Integer code of a semantic class name (-1 for None/unlabeled)."""
    if name is None or name == "unlabeled":
        return UNLABELED
    try:
        return SEMANTIC_CLASSES.index(name)
    except ValueError:
        raise ValueError(f"unknown semantic class {name!r}") from None


@dataclass(frozen=True)
class Frame:
    """A frame of discernment with a fixed list of addressable hypothesis sets.

    ``addressable`` holds the subsets that may carry direct belief mass, in
    layer order; ``layer_names`` gives each a stable name used for grid map
    layers and serialization.
    """

    name: str
    members: tuple[str, ...]
    addressable: tuple[frozenset, ...]
    layer_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.addressable) != len(self.layer_names):
            raise ValueError("addressable sets and layer names must align")
        full = frozenset(self.members)
        for hyp in self.addressable:
            if not hyp or not hyp <= full:
                raise ValueError(f"hypothesis {set(hyp)} outside frame {self.name}")

    @property
    def full_set(self) -> frozenset:
        return frozenset(self.members)

    def layer_index(self, layer: str) -> int:
        try:
            return self.layer_names.index(layer)
        except ValueError:
            raise KeyError(f"frame {self.name} has no layer {layer!r}") from None

    def hypothesis(self, layer: str) -> frozenset:
        return self.addressable[self.layer_index(layer)]

    def resolve_query(self, query) -> frozenset:
        """Accept a layer name, a member name or an iterable of members."""
        if isinstance(query, str):
            if query in self.layer_names:
                return self.hypothesis(query)
            if query in self.members:
                return frozenset((query,))
            raise KeyError(f"unknown hypothesis {query!r} for frame {self.name}")
        hyp = frozenset(query)
        if not hyp <= self.full_set:
            raise ValueError(f"hypothesis {set(hyp)} outside frame {self.name}")
        return hyp


OBJECT_SET = frozenset(OBJECT_CLASSES)

OCCUPANCY = Frame(
    name="occupancy",
    members=OBJECT_CLASSES + (FREE, VOID),
    addressable=(
        frozenset((CAR,)),
        frozenset((TWO_WHEELER,)),
        frozenset((PEDESTRIAN,)),
        frozenset((OTHER_MOBILE,)),
        frozenset((IMMOBILE,)),
        OBJECT_SET,
        frozenset((FREE,)),
        frozenset((VOID,)),
    ),
    layer_names=(CAR, TWO_WHEELER, PEDESTRIAN, OTHER_MOBILE, IMMOBILE, "object", FREE, VOID),
)

GROUND = Frame(
    name="ground",
    members=GROUND_CLASSES,
    addressable=(
        frozenset((STREET,)),
        frozenset((SIDEWALK,)),
        frozenset((OTHER_GROUND,)),
        frozenset(GROUND_CLASSES),
    ),
    layer_names=(STREET, SIDEWALK, OTHER_GROUND, "ground"),
)


def _check_unit_interval(name: str, value) -> None:
    arr = np.asarray(value, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")


def not_relevant(p_fp, p_occ, p_omega, p_ism):
    """Probability that a measurement is not relevant for a hypothesis in a cell.

    The four terms cover the disjoint ways a measurement can fail to support
    the queried hypothesis at the queried cell: it is a false positive, the
    reflecting surface does not occupy space, the semantic class does not
    match, or the reflection happened elsewhere.  Algebraically the sum equals
    ``1 - (1 - p_fp) * p_occ * p_omega * p_ism``.

    For ground-surface hypotheses callers pass ``1 - p_occ`` as the second
    argument, since ground evidence requires a non-occupying reflection.

    All arguments accept scalars or broadcastable arrays in [0, 1].
    """
    for name, value in (("p_fp", p_fp), ("p_occ", p_occ),
                        ("p_omega", p_omega), ("p_ism", p_ism)):
        _check_unit_interval(name, value)
    keep = 1.0 - np.asarray(p_fp, dtype=float)
    p_occ = np.asarray(p_occ, dtype=float)
    p_omega = np.asarray(p_omega, dtype=float)
    p_ism = np.asarray(p_ism, dtype=float)
    out = (np.asarray(p_fp, dtype=float)
           + keep * (1.0 - p_occ)
           + keep * p_occ * (1.0 - p_omega)
           + keep * p_occ * p_omega * (1.0 - p_ism))
    if out.ndim == 0:
        return float(out)
    return out


def bba_from_log_accumulator(log_sum):
    """Belief mass ``1 - exp(log_sum)`` for an accumulated log non-relevance sum.

    ``log_sum`` is the sum of ``log(not_relevant(...))`` over all contributing
    measurements and must be non-positive (up to ``MASS_EPS``).
    """
    arr = np.asarray(log_sum, dtype=float)
    if np.any(arr > MASS_EPS):
        raise ValueError("log accumulator must be <= 0")
    out = -np.expm1(np.minimum(arr, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class BBA:
    """An immutable basic belief assignment over one frame.

    ``masses`` aligns with ``frame.addressable``.  Mass not assigned to any
    addressable set is the residual and represents ignorance (implicit mass
    on the full frame).
    """

    frame: Frame
    masses: tuple

    @classmethod
    def from_dict(cls, frame: Frame, assignment: dict) -> "BBA":
        values = [0.0] * len(frame.addressable)
        for key, mass in assignment.items():
            hyp = frame.resolve_query(key)
            try:
                idx = frame.addressable.index(hyp)
            except ValueError:
                raise ValueError(
                    f"{set(hyp)} is not an addressable set of frame {frame.name}"
                ) from None
            values[idx] += float(mass)
        return cls(frame=frame, masses=tuple(values))

    def mass(self, query) -> float:
        hyp = self.frame.resolve_query(query)
        idx = self.frame.addressable.index(hyp)
        return self.masses[idx]

    @property
    def residual(self) -> float:
        return 1.0 - math.fsum(self.masses)


def pignistic(bba: BBA, query) -> float:
    """Pignistic probability of ``query`` under ``bba``.

    Each focal set spreads its mass uniformly over its members; residual mass
    is treated as mass on the full frame.
    """
    hyp = bba.frame.resolve_query(query)
    total = 0.0
    for focal, mass in zip(bba.frame.addressable, bba.masses):
        if mass:
            total += mass * len(hyp & focal) / len(focal)
    residual = bba.residual
    if residual > 0.0:
        full = bba.frame.full_set
        total += residual * len(hyp & full) / len(full)
    return total


def pignistic_layers(frame: Frame, layers: dict, query) -> np.ndarray:
    """Vectorized pignistic transform over per-layer mass arrays.

    ``layers`` maps layer names of ``frame`` to equally shaped arrays.
    Missing layers count as zero mass.  Residual mass per cell is treated as
    mass on the full frame.
    """
    hyp = frame.resolve_query(query)
    first = next(iter(layers.values()))
    total = np.zeros_like(first, dtype=float)
    mass_sum = np.zeros_like(first, dtype=float)
    for name, focal in zip(frame.layer_names, frame.addressable):
        arr = layers.get(name)
        if arr is None:
            continue
        coeff = len(hyp & focal) / len(focal)
        if coeff:
            total += coeff * arr
        mass_sum += arr
    full = frame.full_set
    residual = np.clip(1.0 - mass_sum, 0.0, None)
    total += residual * (len(hyp & full) / len(full))
    return total


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    problems: tuple
    mass_sum: float

    def __bool__(self) -> bool:
        return self.ok


def validate(bba: BBA) -> ValidationReport:
    """Check BBA invariants and report each violation with its magnitude."""
    problems = []
    for name, mass in zip(bba.frame.layer_names, bba.masses):
        if mass < -MASS_EPS:
            problems.append(f"mass[{name}] negative by {-mass:.3e}")
        if mass > 1.0 + MASS_EPS:
            problems.append(f"mass[{name}] exceeds 1 by {mass - 1.0:.3e}")
    total = math.fsum(bba.masses)
    if total > 1.0 + MASS_EPS:
        problems.append(f"mass sum exceeds 1 by {total - 1.0:.3e}")
    return ValidationReport(ok=not problems, problems=tuple(problems), mass_sum=total)
