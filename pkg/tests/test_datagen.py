import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import simple_model
from invmrsort.core import ContractError, Direction, GainAtLeast, LearningSet, assign_many
from invmrsort.datagen import (
    TYPES, GenConfig, GenerationError, generate_instance, instance_rng, sample_alternatives,
    sample_balanced_set, sample_model, sample_weights,
)


class _FixedRng:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def random(self, size):
        assert size == len(self.values)
        return self.values


def test_weights_single_criterion():
    assert sample_weights(1, np.random.default_rng(0)) == [1.0]


def test_weights_from_a_single_cut():
    assert sample_weights(2, _FixedRng([0.3])) == pytest.approx([0.3, 0.7])


def test_weights_are_uniform_on_the_simplex():
    rng = np.random.default_rng(7)
    W = np.array([sample_weights(3, rng) for _ in range(10_000)])
    assert np.abs(W.mean(axis=0) - 1 / 3).max() < 0.01


@given(n=st.integers(1, 12), seed=st.integers(0, 10_000))
def test_weights_sum_to_one(n, seed):
    w = sample_weights(n, np.random.default_rng(seed))
    assert len(w) == n and min(w) >= 0 and abs(sum(w) - 1) < 1e-12


def test_weights_need_a_criterion():
    with pytest.raises(ContractError):
        sample_weights(0, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ContractError):
        GenConfig(n=3, q=4)
    with pytest.raises(ContractError):
        GenConfig(p=3, learn_size=200)
    assert GenConfig(grid=0.1).steps == 10


def test_q0_is_all_known_gain():
    model, dk = sample_model(GenConfig(n=4, q=0), np.random.default_rng(1))
    assert dk == [Direction.GAIN] * 4
    assert all(c.direction is Direction.GAIN for c in model.criteria)


def test_q_equals_n_is_all_unknown():
    model, dk = sample_model(GenConfig(n=4, q=4), np.random.default_rng(1))
    assert dk == [Direction.UNKNOWN] * 4
    assert all(c.direction in TYPES for c in model.criteria)


def _on_grid(x):
    return abs(round(x * 10) - x * 10) < 1e-9


@pytest.mark.parametrize("p", [2, 3, 4])
def test_models_are_valid_over_many_seeds(p):
    for seed in range(1000 if p == 2 else 200):
        rng = np.random.default_rng(seed)
        model, dk = sample_model(GenConfig(n=3, q=3, p=p, learn_size=60), rng)
        model.validate()
        assert 0.5 <= model.lambda_ <= 1
        for row in model.approved:
            for s in row:
                params = [getattr(s, k) for k in ("b", "lo", "hi") if hasattr(s, k)]
                assert all(_on_grid(v) and 0 < v < 1 for v in params)
                if hasattr(s, "lo"):
                    assert s.lo < s.hi


def test_every_type_is_drawn():
    seen = set()
    for seed in range(50):
        model, _ = sample_model(GenConfig(n=4, q=4), np.random.default_rng(seed))
        seen |= {c.direction for c in model.criteria}
    assert seen == set(TYPES)


def test_balanced_two_categories():
    rng = np.random.default_rng(2)
    model, _ = sample_model(GenConfig(n=4, q=1), rng)
    ls = sample_balanced_set(model, 200, rng)
    assert ls.categories.count(1) == ls.categories.count(2) == 100
    assert list(assign_many(model, ls.evals)) == ls.categories
    assert all(_on_grid(v) for v in ls.evals.ravel())


def test_unbalanceable_model_errors_within_budget():
    # lambda = 1 with all weight on one criterion whose frontier no grid point reaches
    model = simple_model([[GainAtLeast(1.0)], [GainAtLeast(0.5)]], [1.0, 0.0], 1.0)
    rng = np.random.default_rng(0)
    ls = sample_balanced_set(model, 10, rng, budget_factor=10_000)
    assert ls.categories.count(2) == 5
    hopeless = simple_model([[GainAtLeast(0.5)]], [1.0], 0.5)
    with pytest.raises(GenerationError):
        sample_balanced_set(hopeless, 10, rng, steps=1, budget_factor=1)


def test_balanced_size_must_divide():
    model = simple_model([[GainAtLeast(0.5)]], [1.0], 0.5)
    with pytest.raises(ContractError):
        sample_balanced_set(model, 5, np.random.default_rng(0))


def test_seed_determinism():
    cfg = GenConfig(n=3, q=2, learn_size=40, test_size=50)
    a = generate_instance(cfg, instance_rng(5, 3, 2))
    b = generate_instance(cfg, instance_rng(5, 3, 2))
    assert a[0] == b[0] and a[1] == b[1]
    assert a[2].evals.tolist() == b[2].evals.tolist() and a[2].categories == b[2].categories
    assert np.array_equal(a[3], b[3])


def test_test_set_is_disjoint_from_learning_set():
    model, dk, ls, test = generate_instance(GenConfig(n=2, q=1, learn_size=40, test_size=200),
                                            instance_rng(1, 2, 1))
    seen = {tuple(r) for r in ls.evals}
    assert len(test) and not any(tuple(r) in seen for r in test)


def test_alternatives_on_grid():
    X = sample_alternatives(3, 100, np.random.default_rng(0))
    assert X.shape == (100, 3) and all(_on_grid(v) for v in X.ravel())
    assert X.min() >= 0 and X.max() <= 1


def test_generated_sets_are_restorable():
    from invmrsort.solve import learn
    model, dk, ls, _ = generate_instance(GenConfig(n=3, q=2, learn_size=30, test_size=10),
                                         instance_rng(9, 3, 2))
    assert isinstance(ls, LearningSet)
    assert learn(ls, dk)[1]["ca"] == 1.0
