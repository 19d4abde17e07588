"""Random ground-truth MR-Sort models and balanced example sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ContractError, CostAtMost, CriterionSpec, Direction, GainAtLeast, LearningSet,
    MRSortModel, PeakInterval, ValleyComplement, assign_many,
)

TYPES = (Direction.GAIN, Direction.COST, Direction.SINGLE_PEAKED, Direction.SINGLE_VALLEY)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n: int = 4
    q: int = 0
    p: int = 2
    learn_size: int = 200
    test_size: int = 1000
    grid: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.q <= self.n:
            raise ContractError(f"q must lie in 0..n, got q={self.q}, n={self.n}")
        if self.learn_size % self.p:
            raise ContractError("learn_size must be divisible by p for a balanced set")
        if self.p < 2:
            raise ContractError("p must be >= 2")

    @property
    def steps(self) -> int:
        return int(round(1 / self.grid))


def sample_weights(n: int, rng) -> list[float]:
    """Uniform draw from the weight simplex via sorted uniform spacings."""
    if n < 1:
        raise ContractError("n must be >= 1")
    cuts = np.sort(rng.random(n - 1))
    return np.diff(np.concatenate(([0.0], cuts, [1.0]))).tolist()


def _grid_values(steps: int, k: np.ndarray) -> list[float]:
    return [int(v) / steps for v in k]


def _sample_sets(kind: Direction, levels: int, steps: int, rng):
    """Nested approved sets for one criterion, profiles on the interior grid."""
    interior = np.arange(1, steps)  # grid points strictly inside (0, 1)
    if kind in (Direction.GAIN, Direction.COST):
        ks = np.sort(rng.choice(interior, size=levels, replace=False))
        if kind is Direction.GAIN:
            return [GainAtLeast(v) for v in _grid_values(steps, ks)]
        return [CostAtMost(v) for v in _grid_values(steps, ks[::-1])]
    while True:
        ks = np.sort(rng.choice(interior, size=2 * levels, replace=False))
        lows, highs = ks[:levels], ks[levels:][::-1]
        if kind is Direction.SINGLE_PEAKED:
            # level 1 outermost, shrinking inwards
            return [PeakInterval(lo, hi) for lo, hi in
                    zip(_grid_values(steps, lows), _grid_values(steps, highs))]
        # valleys widen with the level; the innermost one must reject a grid point
        lows, highs = lows[::-1], highs[::-1]
        if highs[0] - lows[0] >= 2:
            return [ValleyComplement(lo, hi) for lo, hi in
                    zip(_grid_values(steps, lows), _grid_values(steps, highs))]


def sample_model(cfg: GenConfig, rng):
    """Ground-truth model plus the direction knowledge handed to the learner.

    ``q`` randomly chosen criteria get a uniformly drawn type and are marked
    unknown; the others are known gain criteria.
    """
    n, levels = cfg.n, cfg.p - 1
    unknown = set(rng.choice(n, size=cfg.q, replace=False).tolist()) if cfg.q else set()
    types = [TYPES[rng.integers(4)] if i in unknown else Direction.GAIN for i in range(n)]
    weights = sample_weights(n, rng)
    lam = max(0.5, float(rng.random()))
    approved = [_sample_sets(t, levels, cfg.steps, rng) for t in types]
    criteria = [CriterionSpec(f"c{i}", 0.0, 1.0, t) for i, t in enumerate(types)]
    model = MRSortModel(criteria, weights, lam, approved, cfg.p)
    dk = [Direction.UNKNOWN if i in unknown else Direction.GAIN for i in range(n)]
    return model, dk


def sample_alternatives(n: int, size: int, rng, steps: int = 10) -> np.ndarray:
    """I.i.d. evaluations on the grid {0, 1/steps, ..., 1}."""
    return rng.integers(0, steps + 1, size=(size, n)) / steps


def sample_balanced_set(model: MRSortModel, size: int, rng, steps: int = 10,
                        budget_factor: int = 10_000) -> LearningSet:
    """Rejection-sample grid alternatives until every category holds size/p."""
    if size % model.p:
        raise ContractError("size must be divisible by p")
    quota = size // model.p
    kept = {c: [] for c in range(1, model.p + 1)}
    budget = size * budget_factor
    drawn = 0
    batch = max(256, 4 * size)
    while any(len(v) < quota for v in kept.values()):
        if drawn >= budget:
            raise GenerationError(
                f"could not balance {size} examples within {budget} draws "
                f"(per-category counts {[len(v) for v in kept.values()]})")
        X = sample_alternatives(model.n, min(batch, budget - drawn), rng, steps)
        drawn += len(X)
        for row, cat in zip(X, assign_many(model, X)):
            if len(kept[cat]) < quota:
                kept[cat].append(row)
    evals, cats = [], []
    for c in range(1, model.p + 1):
        evals.extend(kept[c])
        cats.extend([c] * quota)
    order = rng.permutation(len(cats))
    return LearningSet.from_arrays(np.array(evals)[order], np.array(cats)[order])


def generate_instance(cfg: GenConfig, rng=None, max_model_draws: int = 100):
    """Model, direction knowledge, balanced learning set and a test sample.

    Unbalanceable models are redrawn.  Test alternatives coinciding with a
    learning alternative are dropped so the two sets are disjoint.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    for _ in range(max_model_draws):
        model, dk = sample_model(cfg, rng)
        try:
            ls = sample_balanced_set(model, cfg.learn_size, rng, cfg.steps)
        except GenerationError:
            continue
        seen = {tuple(a.evals) for a in ls.alternatives}
        test = sample_alternatives(cfg.n, cfg.test_size, rng, cfg.steps)
        test = np.array([row for row in test if tuple(row) not in seen]).reshape(-1, cfg.n)
        return model, dk, ls, test
    raise GenerationError(f"no balanceable model in {max_model_draws} draws")


def instance_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


def learning_set_from_model(model: MRSortModel, X) -> LearningSet:
    X = np.asarray(X, dtype=float)
    return LearningSet.from_arrays(X, assign_many(model, X))

