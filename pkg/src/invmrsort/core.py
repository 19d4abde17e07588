"""MR-Sort models over gain, cost, single-peaked and single-valley criteria.

Evaluations stay in the criterion's own units here; scaling to [0, 1] is done
by the MIP layer only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np

WEIGHT_SUM_TOL = 1e-9


class ContractError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class Direction(str, Enum):
    GAIN = "gain"
    COST = "cost"
    SINGLE_PEAKED = "single-peaked"
    SINGLE_VALLEY = "single-valley"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, text: str) -> "Direction":
        key = str(text).strip().lower().rstrip(".")
        aliases = {
            "gain": cls.GAIN, "max": cls.GAIN, "g": cls.GAIN,
            "cost": cls.COST, "min": cls.COST, "c": cls.COST,
            "single-peaked": cls.SINGLE_PEAKED, "sp": cls.SINGLE_PEAKED,
            "single_peaked": cls.SINGLE_PEAKED, "peaked": cls.SINGLE_PEAKED,
            "single-valley": cls.SINGLE_VALLEY, "sv": cls.SINGLE_VALLEY,
            "single_valley": cls.SINGLE_VALLEY, "valley": cls.SINGLE_VALLEY,
            "unknown": cls.UNKNOWN, "?": cls.UNKNOWN, "": cls.UNKNOWN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown preference direction {text!r}") from None


@dataclass(frozen=True)
class CriterionSpec:
    name: str
    scale_min: float
    scale_max: float
    direction: Direction = Direction.UNKNOWN

    def __post_init__(self):
        if not self.scale_min < self.scale_max:
            raise ContractError(
                f"criterion {self.name!r}: scale_min must be < scale_max "
                f"(got {self.scale_min}, {self.scale_max})")

    def contains(self, value: float) -> bool:
        return self.scale_min <= value <= self.scale_max


# Approved sets. ``contains`` accepts scalars or numpy arrays.

@dataclass(frozen=True)
class GainAtLeast:
    b: float

    kind = "gain_at_least"
    direction = Direction.GAIN

    def contains(self, x):
        return x >= self.b

    def intervals(self, lo: float, hi: float) -> list[tuple[float, float]]:
        return [(max(lo, self.b), hi)] if self.b <= hi else []

    def to_dict(self) -> dict:
        return {"kind": self.kind, "b": self.b}


@dataclass(frozen=True)
class CostAtMost:
    b: float

    kind = "cost_at_most"
    direction = Direction.COST

    def contains(self, x):
        return x <= self.b

    def intervals(self, lo: float, hi: float) -> list[tuple[float, float]]:
        return [(lo, min(hi, self.b))] if self.b >= lo else []

    def to_dict(self) -> dict:
        return {"kind": self.kind, "b": self.b}


@dataclass(frozen=True)
class PeakInterval:
    lo: float
    hi: float

    kind = "peak_interval"
    direction = Direction.SINGLE_PEAKED

    def __post_init__(self):
        if self.lo > self.hi:
            raise ContractError(f"peak interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    def contains(self, x):
        if isinstance(x, np.ndarray):
            return (x >= self.lo) & (x <= self.hi)
        return self.lo <= x <= self.hi

    def intervals(self, lo: float, hi: float) -> list[tuple[float, float]]:
        a, b = max(lo, self.lo), min(hi, self.hi)
        return [(a, b)] if a <= b else []

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class ValleyComplement:
    """Everything outside the open interval ]lo, hi[."""

    lo: float
    hi: float

    kind = "valley_complement"
    direction = Direction.SINGLE_VALLEY

    def __post_init__(self):
        if self.lo > self.hi:
            raise ContractError(f"valley interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    def contains(self, x):
        if isinstance(x, np.ndarray):
            return (x <= self.lo) | (x >= self.hi)
        return x <= self.lo or x >= self.hi

    def intervals(self, lo: float, hi: float) -> list[tuple[float, float]]:
        if self.lo >= self.hi:
            return [(lo, hi)]
        out = []
        if self.lo >= lo:
            out.append((lo, min(hi, self.lo)))
        if self.hi <= hi:
            out.append((max(lo, self.hi), hi))
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


ApprovedSet = Union[GainAtLeast, CostAtMost, PeakInterval, ValleyComplement]

_KINDS = {cls.kind: cls for cls in (GainAtLeast, CostAtMost, PeakInterval, ValleyComplement)}


def widen_constant(value: float) -> tuple[float, float]:
    """A nonempty scale around a constant column value."""
    d = max(0.5, abs(value) * 1e-6)
    return value - d, value + d


def approved_set_from_dict(d: dict) -> ApprovedSet:
    try:
        cls = _KINDS[d["kind"]]
    except KeyError:
        raise ContractError(f"unknown approved-set kind in {d!r}") from None
    if cls in (GainAtLeast, CostAtMost):
        return cls(float(d["b"]))
    return cls(float(d["lo"]), float(d["hi"]))


def is_subset(inner: ApprovedSet, outer: ApprovedSet, lo: float, hi: float) -> bool:
    """Whether ``inner`` is contained in ``outer`` once both are cut to [lo, hi]."""
    outer_parts = outer.intervals(lo, hi)
    for a, b in inner.intervals(lo, hi):
        if not any(c <= a and b <= d for c, d in outer_parts):
            return False
    return True


@dataclass(frozen=True)
class Alternative:
    id: str
    evals: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "evals", tuple(float(v) for v in self.evals))


@dataclass
class LearningSet:
    alternatives: list[Alternative]
    categories: list[int]

    def __post_init__(self):
        if len(self.alternatives) != len(self.categories):
            raise ContractError("alternatives and categories must have equal lengths")
        self.categories = [int(c) for c in self.categories]
        if self.alternatives:
            n = len(self.alternatives[0].evals)
            if any(len(a.evals) != n for a in self.alternatives):
                raise ContractError("all alternatives must have the same number of evaluations")

    def __len__(self) -> int:
        return len(self.alternatives)

    @property
    def n_criteria(self) -> int:
        return len(self.alternatives[0].evals) if self.alternatives else 0

    @property
    def evals(self) -> np.ndarray:
        return np.array([a.evals for a in self.alternatives], dtype=float).reshape(
            len(self.alternatives), self.n_criteria)

    def distinct_categories(self) -> list[int]:
        return sorted(set(self.categories))

    def subset(self, mask: Sequence[bool]) -> "LearningSet":
        keep = [k for k, m in enumerate(mask) if m]
        return LearningSet([self.alternatives[k] for k in keep],
                           [self.categories[k] for k in keep])

    @classmethod
    def from_arrays(cls, evals, categories, ids=None) -> "LearningSet":
        evals = np.asarray(evals, dtype=float)
        if evals.ndim == 1:
            evals = evals[:, None]
        if ids is None:
            ids = [f"a{k}" for k in range(len(evals))]
        return cls([Alternative(str(i), tuple(row)) for i, row in zip(ids, evals)],
                   list(categories))


@dataclass(frozen=True)
class MRSortModel:
    """MR-Sort model with per-criterion, per-level approved sets.

    ``approved[i][h - 1]`` is the approved set of criterion ``i`` at level ``h``
    (``h = 1 .. p-1``); level ``h`` separates category ``h`` from ``h + 1``.
    """

    criteria: tuple[CriterionSpec, ...]
    weights: tuple[float, ...]
    lambda_: float
    approved: tuple[tuple[ApprovedSet, ...], ...]
    p: int = 2

    def __post_init__(self):
        object.__setattr__(self, "criteria", tuple(self.criteria))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "approved", tuple(tuple(row) for row in self.approved))
        object.__setattr__(self, "lambda_", float(self.lambda_))
        self.validate()

    @property
    def n(self) -> int:
        return len(self.criteria)

    def validate(self) -> None:
        n = self.n
        if self.p < 2:
            raise ContractError(f"p must be >= 2, got {self.p}")
        if len(self.weights) != n or len(self.approved) != n:
            raise ContractError("weights and approved sets must have one entry per criterion")
        if any(w < 0 for w in self.weights):
            raise ContractError("weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
            raise ContractError(f"weights must sum to 1, got {sum(self.weights)!r}")
        if not 0.5 <= self.lambda_ <= 1.0:
            raise ContractError(f"lambda must lie in [0.5, 1], got {self.lambda_}")
        for crit, row in zip(self.criteria, self.approved):
            if crit.direction is Direction.UNKNOWN:
                raise ContractError(f"criterion {crit.name!r} has no direction in a model")
            if len(row) != self.p - 1:
                raise ContractError(f"criterion {crit.name!r} needs {self.p - 1} approved sets")
            for s in row:
                if isinstance(s, (PeakInterval, ValleyComplement)):
                    if not (crit.contains(s.lo) and crit.contains(s.hi)):
                        raise ContractError(
                            f"criterion {crit.name!r}: interval [{s.lo}, {s.hi}] leaves the scale")
            for lower, upper in zip(row, row[1:]):
                if not is_subset(upper, lower, crit.scale_min, crit.scale_max):
                    raise ContractError(
                        f"criterion {crit.name!r}: approved sets are not embedded across levels")

    def directions(self) -> list[Direction]:
        return [c.direction for c in self.criteria]


def _check_indices(model: MRSortModel, criterion: int, level: int) -> None:
    if not 0 <= criterion < model.n:
        raise IndexError(f"criterion index {criterion} out of range 0..{model.n - 1}")
    if not 1 <= level <= model.p - 1:
        raise IndexError(f"level {level} out of range 1..{model.p - 1}")


def is_approved(model: MRSortModel, criterion: int, level: int, value: float) -> bool:
    """Boundary-inclusive membership of ``value`` in the approved set at ``level``."""
    _check_indices(model, criterion, level)
    return bool(model.approved[criterion][level - 1].contains(value))


# Coalition sums are compared with this absolute slack so that weights which
# add up to lambda only after float round-off still win.
WEIGHT_TOL = 1e-9


def category_from_approvals(approvals, weights, lambda_) -> int:
    """Category of one alternative given its approval matrix ``[criterion][level]``.

    Level 0 is a virtual always-winning coalition and level ``p`` an
    always-losing one, so the answer is the unique ``h`` whose lower level
    wins and whose own level loses.
    """
    approvals = np.asarray(approvals, dtype=bool)
    weights = np.asarray(weights, dtype=float)
    n_levels = approvals.shape[1]
    wins = [True]
    wins += [float(weights[approvals[:, k]].sum()) >= lambda_ - WEIGHT_TOL for k in range(n_levels)]
    wins.append(False)
    for h in range(1, n_levels + 2):
        if wins[h - 1] and not wins[h]:
            return h
    raise ContractError("no category satisfies the majority rule")  # unreachable


def _check_alternative(model: MRSortModel, evals: Sequence[float]) -> None:
    if len(evals) != model.n:
        raise ContractError(f"expected {model.n} evaluations, got {len(evals)}")
    for crit, v in zip(model.criteria, evals):
        if not crit.contains(v):
            raise ContractError(
                f"evaluation {v} outside the scale [{crit.scale_min}, {crit.scale_max}] "
                f"of criterion {crit.name!r}")


def assign(model: MRSortModel, alt: Union[Alternative, Sequence[float]]) -> int:
    evals = alt.evals if isinstance(alt, Alternative) else tuple(alt)
    _check_alternative(model, evals)
    approvals = [[s.contains(v) for s in row] for v, row in zip(evals, model.approved)]
    return category_from_approvals(approvals, model.weights, model.lambda_)


def assign_many(model: MRSortModel, evals) -> np.ndarray:
    """Vectorised :func:`assign` over the rows of an ``(m, n)`` array."""
    X = np.asarray(evals, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n:
        raise ContractError(f"expected an (m, {model.n}) evaluation array")
    lo = np.array([c.scale_min for c in model.criteria])
    hi = np.array([c.scale_max for c in model.criteria])
    if X.size and ((X < lo).any() or (X > hi).any()):
        raise ContractError("evaluations outside the criterion scales")
    w = np.asarray(model.weights)
    cats = np.ones(len(X), dtype=int)
    for h in range(1, model.p):
        approved = np.column_stack(
            [model.approved[i][h - 1].contains(X[:, i]) for i in range(model.n)]
        ) if len(X) else np.zeros((0, model.n), dtype=bool)
        wins = approved.astype(float) @ w >= model.lambda_ - WEIGHT_TOL
        # embedding makes the winning levels a prefix
        cats += wins
    return cats


def reencode_distance(criterion: CriterionSpec, approved: ApprovedSet,
                      value: float) -> tuple[float, float]:
    """Distance of ``value`` to the interval centre, and the interval half-width."""
    if not isinstance(approved, (PeakInterval, ValleyComplement)):
        raise ContractError(f"{approved.kind} sets have no distance re-encoding")
    if not criterion.contains(value):
        raise ContractError(f"{value} is outside the scale of {criterion.name!r}")
    centre = (approved.lo + approved.hi) / 2
    return abs(value - centre), (approved.hi - approved.lo) / 2


# --- JSON model schema -----------------------------------------------------

def model_to_dict(model: MRSortModel) -> dict:
    return {
        "criteria": [{"name": c.name, "min": c.scale_min, "max": c.scale_max,
                      "direction": c.direction.value} for c in model.criteria],
        "weights": list(model.weights),
        "lambda": model.lambda_,
        "p": model.p,
        "approved": [[s.to_dict() for s in row] for row in model.approved],
    }


def model_from_dict(d: dict) -> MRSortModel:
    criteria = [CriterionSpec(c["name"], float(c["min"]), float(c["max"]),
                              Direction.parse(c["direction"])) for c in d["criteria"]]
    approved = [[approved_set_from_dict(s) for s in row] for row in d["approved"]]
    return MRSortModel(criteria, [float(w) for w in d["weights"]], float(d["lambda"]),
                       approved, int(d.get("p", 2)))


def save_model(model: MRSortModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> MRSortModel:
    return model_from_dict(json.loads(Path(path).read_text()))
