"""Solver-agnostic mixed-integer program for learning MR-Sort models.

Every criterion is modelled as single-peaked (``sigma = 1``) or single-valley
(``sigma = 0``) around a centre ``bperp`` with half-width ``b``; gain and cost
criteria are the cases where the interval reaches an end of the scale.  The
absolute distance ``|a - bperp|`` is split into ``alpha_p``/``alpha_m`` with a
binary sign ``beta``, membership is ``delta``, weighted membership is ``c``
and ``gamma`` flags correctly restored examples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .core import ContractError, CriterionSpec, Direction, LearningSet

# Variable blocks in emission order.
SYMBOLS = ("alpha_p", "alpha_m", "beta", "sigma", "gamma", "delta", "c",
           "bperp", "b", "w", "lambda")

DirectionKnowledge = Sequence[Direction]


@dataclass(frozen=True)
class MipConfig:
    epsilon: float = 1e-3
    big_m_profile: float = 3.0   # (6b)-(6c) and the sigma-gated membership rows
    big_m_assign: float = 2.0    # coalition rows
    # Add redundant-but-valid rows linking memberships of equal, ordered and
    # nested values.  They cut no feasible point and shrink the search a lot.
    strengthen: bool = True


@dataclass(frozen=True)
class VarRef:
    id: int
    symbol: str
    lo: float
    hi: float
    binary: bool = False
    h: Optional[int] = None
    i: Optional[int] = None
    j: Optional[int] = None

    @property
    def name(self) -> str:
        parts = [self.symbol]
        if self.h is not None:
            parts.append(f"h{self.h}")
        if self.i is not None:
            parts.append(f"i{self.i}")
        if self.j is not None:
            parts.append(f"j{self.j}")
        return "_".join(parts)


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str  # "<=", ">=" or "="
    rhs: float


@dataclass(frozen=True)
class AffineTransform:
    """Maps raw criterion units to the unit interval: ``(x - offset) / scale``."""

    offset: float
    scale: float
    degenerate: bool = False

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def inverse(self, y):
        return self.offset + np.asarray(y, dtype=float) * self.scale

    def forward_scalar(self, x: float) -> float:
        return (x - self.offset) / self.scale

    def inverse_scalar(self, y: float) -> float:
        return self.offset + y * self.scale


@dataclass
class MipProblem:
    vars: list[VarRef] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: list[tuple[int, float]] = field(default_factory=list)
    sense: str = "max"
    meta: dict = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False)

    def add_var(self, symbol: str, lo: float, hi: float, binary: bool = False,
                h=None, i=None, j=None) -> VarRef:
        v = VarRef(len(self.vars), symbol, float(lo), float(hi), binary, h, i, j)
        key = (symbol, h, i, j)
        if key in self._index:
            raise ContractError(f"duplicate variable {v.name}")
        self._index[key] = v.id
        self.vars.append(v)
        return v

    def var(self, symbol: str, h=None, i=None, j=None) -> int:
        return self._index[(symbol, h, i, j)]

    def add(self, name: str, terms: Sequence[tuple[int, float]], sense: str, rhs: float) -> None:
        coeffs = tuple((int(k), float(c)) for k, c in terms if c != 0.0)
        self.constraints.append(Constraint(name, coeffs, sense, float(rhs)))

    def count(self, symbol: str) -> int:
        return sum(1 for v in self.vars if v.symbol == symbol)

    def counts(self) -> dict[str, int]:
        return {s: self.count(s) for s in SYMBOLS}

    @property
    def n_binaries(self) -> int:
        return sum(v.binary for v in self.vars)

    def to_arrays(self):
        """(objective, A, lower, upper, var_lo, var_hi, integrality) in minimisation form."""
        nv, nc = len(self.vars), len(self.constraints)
        c = np.zeros(nv)
        for k, coef in self.objective:
            c[k] -= coef if self.sense == "max" else -coef
        rows, cols, data = [], [], []
        lower = np.full(nc, -np.inf)
        upper = np.full(nc, np.inf)
        for r, con in enumerate(self.constraints):
            for k, coef in con.coeffs:
                rows.append(r)
                cols.append(k)
                data.append(coef)
            if con.sense in ("<=", "="):
                upper[r] = con.rhs
            if con.sense in (">=", "="):
                lower[r] = con.rhs
        A = sparse.csr_matrix((data, (rows, cols)), shape=(nc, nv))
        var_lo = np.array([v.lo for v in self.vars])
        var_hi = np.array([v.hi for v in self.vars])
        integrality = np.array([1 if v.binary else 0 for v in self.vars])
        return c, A, lower, upper, var_lo, var_hi, integrality

    def to_lp(self) -> str:
        """CPLEX-LP text of the problem."""
        names = [v.name for v in self.vars]
        out = [f"\\ {self.meta.get('title', 'inverse MR-Sort')}",
               "Maximize" if self.sense == "max" else "Minimize",
               " obj: " + _lp_expr(self.objective, names),
               "Subject To"]
        for con in self.constraints:
            expr = _lp_expr(con.coeffs, names) if con.coeffs else "0 " + names[0]
            out.append(f" {con.name}: {expr} {con.sense} {_num(con.rhs)}")
        out.append("Bounds")
        for v in self.vars:
            out.append(f" {_num(v.lo)} <= {v.name} <= {_num(v.hi)}")
        binaries = [v.name for v in self.vars if v.binary]
        if binaries:
            out.append("Binaries")
            out.extend(f" {name}" for name in binaries)
        out.append("End")
        return "\n".join(out) + "\n"

    def write_lp(self, path) -> None:
        Path(path).write_text(self.to_lp())


def _num(x: float) -> str:
    return repr(float(x))


def _lp_expr(terms, names) -> str:
    parts = []
    for k, coef in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = names[k] if mag == 1.0 else f"{_num(mag)} {names[k]}"
        parts.append(f"{sign} {body}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


# --- normalisation ---------------------------------------------------------

def normalize(ls: LearningSet, specs: Sequence[CriterionSpec]):
    """Affine-map every criterion's evaluations to [0, 1] using its scale.

    A criterion whose evaluations are all equal carries no information; it is
    mapped to the constant 0.5 and flagged ``degenerate``.
    """
    X = ls.evals
    if len(specs) != ls.n_criteria:
        raise ContractError("one CriterionSpec per criterion is required")
    transforms = []
    for i, spec in enumerate(specs):
        col = X[:, i]
        if len(col) and col.min() == col.max():
            transforms.append(AffineTransform(float(col[0]) - 0.5, 1.0, degenerate=True))
        else:
            transforms.append(AffineTransform(spec.scale_min, spec.scale_max - spec.scale_min))
    Y = np.column_stack([t.forward(X[:, i]) for i, t in enumerate(transforms)]) if len(X) else X
    out = LearningSet.from_arrays(Y.reshape(len(X), len(specs)), ls.categories,
                                  [a.id for a in ls.alternatives])
    return out, transforms


# --- builders --------------------------------------------------------------

def _check_inputs(ls: LearningSet, dk: DirectionKnowledge, p: int):
    if len(ls) == 0:
        raise ContractError("empty learning set")
    if p < 2:
        raise ContractError(f"p must be >= 2, got {p}")
    X = ls.evals
    if (X < 0).any() or (X > 1).any():
        raise ContractError("evaluations must be normalised to [0, 1] before building")
    if len(dk) != ls.n_criteria:
        raise ContractError("direction knowledge needs one entry per criterion")
    bad = [c for c in ls.categories if not 1 <= c <= p]
    if bad:
        raise ContractError(f"category {bad[0]} outside 1..{p}")
    return X


def build_two_category(ls: LearningSet, dk: DirectionKnowledge,
                       cfg: MipConfig = MipConfig(), **kwargs) -> MipProblem:
    if len(ls) == 0:
        raise ContractError("empty learning set")
    cats = ls.distinct_categories()
    if len(cats) > 2 or any(c not in (1, 2) for c in cats):
        raise ContractError("two-category builder needs categories {1, 2}; "
                            "use build_p_category")
    return build_p_category(ls, dk, 2, cfg, **kwargs)


def build_p_category(ls: LearningSet, dk: DirectionKnowledge, p: int,
                     cfg: MipConfig = MipConfig(), *,
                     multiplicity: Optional[Sequence[float]] = None,
                     transforms: Optional[Sequence[AffineTransform]] = None,
                     criteria: Optional[Sequence[CriterionSpec]] = None) -> MipProblem:
    """Build the program for ``p`` ordered categories.

    Parameters
    ----------
    ls : LearningSet
        Examples with evaluations already normalised to [0, 1].
    dk : sequence of Direction
        Per criterion, a known direction or ``Direction.UNKNOWN``.
    p : int
        Number of categories; levels ``h = 1 .. p-1`` each get their own
        profile and membership variables, ``sigma`` is shared.
    multiplicity : sequence of float, optional
        Objective weight of each example (used when identical examples are
        merged); defaults to 1.
    transforms, criteria : optional
        Stored in ``meta`` so solutions can be mapped back to raw units.
    """
    X = _check_inputs(ls, dk, p)
    m, n = X.shape
    eps, M, Ma = cfg.epsilon, cfg.big_m_profile, cfg.big_m_assign
    levels = range(1, p)
    if multiplicity is None:
        multiplicity = [1.0] * m
    data_min, data_max = X.min(axis=0), X.max(axis=0)

    prob = MipProblem()
    prob.meta = {
        "n": n, "m": m, "p": p, "epsilon": eps,
        "big_m": {"profile": M, "assign": Ma},
        "directions": [Direction(d) for d in dk],
        "data_min": data_min.tolist(), "data_max": data_max.tolist(),
        "transforms": list(transforms) if transforms is not None
        else [AffineTransform(0.0, 1.0)] * n,
        "criteria": list(criteria) if criteria is not None else None,
        "categories": list(ls.categories),
        "multiplicity": list(multiplicity),
    }

    def per_example(symbol, lo, hi, binary=False):
        for h in levels:
            for i in range(n):
                for j in range(m):
                    prob.add_var(symbol, lo, hi, binary, h=h, i=i, j=j)

    per_example("alpha_p", 0, 1)
    per_example("alpha_m", 0, 1)
    per_example("beta", 0, 1, binary=True)
    for i in range(n):
        prob.add_var("sigma", 0, 1, True, i=i)
    for j in range(m):
        prob.add_var("gamma", 0, 1, True, j=j)
    per_example("delta", 0, 1, binary=True)
    per_example("c", 0, 1)
    for h in levels:
        for i in range(n):
            prob.add_var("bperp", 0, 1, h=h, i=i)
    for h in levels:
        for i in range(n):
            prob.add_var("b", 0, 0.5, h=h, i=i)
    for i in range(n):
        prob.add_var("w", 0, 1, i=i)
    lam = prob.add_var("lambda", 0.5, 1).id

    v = prob.var
    for h in levels:
        for i in range(n):
            sig, bp, b = v("sigma", i=i), v("bperp", h, i), v("b", h, i)
            for j in range(m):
                ap, am = v("alpha_p", h, i, j), v("alpha_m", h, i, j)
                beta, d = v("beta", h, i, j), v("delta", h, i, j)
                c, w = v("c", h, i, j), v("w", i=i)
                tag = f"h{h}_i{i}_j{j}"
                # bperp - a = alpha_p - alpha_m, at most one side nonzero
                prob.add(f"abs_{tag}", [(bp, 1), (ap, -1), (am, 1)], "=", X[j, i])
                prob.add(f"absp_{tag}", [(ap, 1), (beta, -M)], "<=", 0)
                prob.add(f"absm_{tag}", [(am, 1), (beta, M)], "<=", M)
                # single-valley rows, relaxed when sigma = 1
                prob.add(f"sv1_{tag}", [(ap, 1), (am, 1), (b, -1), (sig, M), (d, -M)], ">=", -M)
                prob.add(f"sv2_{tag}", [(ap, 1), (am, 1), (b, -1), (d, -M), (sig, -M)], "<=", -eps)
                # single-peaked rows, relaxed when sigma = 0
                prob.add(f"sp1_{tag}", [(b, 1), (ap, -1), (am, -1), (sig, -M), (d, -M)], ">=", -2 * M)
                prob.add(f"sp2_{tag}", [(b, 1), (ap, -1), (am, -1), (d, -M), (sig, M)], "<=", M - eps)
                # c = w * delta
                prob.add(f"cw1_{tag}", [(c, 1), (d, -1)], "<=", 0)
                prob.add(f"cw2_{tag}", [(c, 1), (d, -1), (w, -1)], ">=", -1)
                prob.add(f"cw3_{tag}", [(c, 1), (w, -1)], "<=", 0)
            prob.add(f"prof_lo_h{h}_i{i}", [(bp, 1), (b, -1)], ">=", 0)
            prob.add(f"prof_hi_h{h}_i{i}", [(bp, 1), (b, 1)], "<=", 1)

    prob.add("weights_sum", [(v("w", i=i), 1) for i in range(n)], "=", 1)

    for j, cat in enumerate(ls.categories):
        g = v("gamma", j=j)
        if cat >= 2:
            terms = [(v("c", cat - 1, i, j), 1) for i in range(n)]
            prob.add(f"up_j{j}", terms + [(lam, -1), (g, -Ma)], ">=", -Ma)
        if cat <= p - 1:
            terms = [(v("c", cat, i, j), 1) for i in range(n)]
            prob.add(f"down_j{j}", terms + [(lam, -1), (g, Ma)], "<=", Ma - eps)

    # Nested approved sets: single-peaked intervals shrink as h grows,
    # single-valley intervals (the disapproved part) widen.
    for h in range(1, p - 1):
        for i in range(n):
            sig = v("sigma", i=i)
            bp0, b0 = v("bperp", h, i), v("b", h, i)
            bp1, b1 = v("bperp", h + 1, i), v("b", h + 1, i)
            lo_diff = [(bp1, 1), (b1, -1), (bp0, -1), (b0, 1)]    # lo^{h+1} - lo^h
            hi_diff = [(bp1, 1), (b1, 1), (bp0, -1), (b0, -1)]    # hi^{h+1} - hi^h
            prob.add(f"nest_sp_lo_h{h}_i{i}", lo_diff + [(sig, -1)], ">=", -1)
            prob.add(f"nest_sp_hi_h{h}_i{i}", hi_diff + [(sig, 1)], "<=", 1)
            prob.add(f"nest_sv_lo_h{h}_i{i}", lo_diff + [(sig, -1)], "<=", 0)
            prob.add(f"nest_sv_hi_h{h}_i{i}", hi_diff + [(sig, 1)], ">=", 0)

    for i, d in enumerate(prob.meta["directions"]):
        sig = v("sigma", i=i)
        if d is Direction.UNKNOWN:
            continue
        prob.add(f"known_sigma_i{i}", [(sig, 1)], "=",
                 0 if d is Direction.SINGLE_VALLEY else 1)
        for h in levels:
            bp, b = v("bperp", h, i), v("b", h, i)
            if d is Direction.GAIN:
                prob.add(f"known_gain_h{h}_i{i}", [(bp, 1), (b, 1)], ">=", data_max[i])
            elif d is Direction.COST:
                prob.add(f"known_cost_h{h}_i{i}", [(bp, 1), (b, -1)], "<=", data_min[i])

    if cfg.strengthen:
        _add_cuts(prob, X, levels)

    prob.objective = [(v("gamma", j=j), float(multiplicity[j])) for j in range(m)]
    return prob


# Above this many distinct values only triples with an adjacent end are used.
FULL_TRIPLES_MAX = 30


def _triples(k: int):
    """Index triples a < b < c for the convexity cuts."""
    if k <= FULL_TRIPLES_MAX:
        return itertools.combinations(range(k), 3)
    near = {(b - 1, b, c) for b in range(1, k - 1) for c in range(b + 1, k)}
    near |= {(a, b, b + 1) for b in range(1, k - 1) for a in range(b)}
    return sorted(near)


def _add_cuts(prob: MipProblem, X: np.ndarray, levels) -> None:
    """Valid inequalities on the membership binaries.

    Membership of a value is a function of the value alone, approved sets
    are intervals (sigma = 1) or interval complements (sigma = 0), gain and
    cost sets are up- and down-sets, and a value approved at level h+1 is
    approved at level h.
    """
    v = prob.var
    directions = prob.meta["directions"]
    for i in range(X.shape[1]):
        values, first = np.unique(X[:, i], return_index=True)
        reps = first.tolist()
        sig = v("sigma", i=i)
        for h in levels:
            for j in range(X.shape[0]):
                r = reps[int(np.searchsorted(values, X[j, i]))]
                if r != j:
                    prob.add(f"tie_d_h{h}_i{i}_j{j}",
                             [(v("delta", h, i, j), 1), (v("delta", h, i, r), -1)], "=", 0)
                    prob.add(f"tie_c_h{h}_i{i}_j{j}",
                             [(v("c", h, i, j), 1), (v("c", h, i, r), -1)], "=", 0)
                if h > 1:
                    prob.add(f"nest_d_h{h}_i{i}_j{j}",
                             [(v("delta", h, i, j), 1), (v("delta", h - 1, i, j), -1)], "<=", 0)
            d = [v("delta", h, i, r) for r in reps]
            k = len(d)
            if directions[i] in (Direction.GAIN, Direction.COST):
                up = directions[i] is Direction.GAIN
                for t in range(k - 1):
                    lo, hi = (d[t], d[t + 1]) if up else (d[t + 1], d[t])
                    prob.add(f"mono_h{h}_i{i}_t{t}", [(lo, 1), (hi, -1)], "<=", 0)
                continue
            for a, b, c in _triples(k):
                tag = f"h{h}_i{i}_{a}_{b}_{c}"
                # peaks: middle approved if both ends are
                prob.add(f"cvx_sp_{tag}", [(d[b], 1), (d[a], -1), (d[c], -1), (sig, -1)], ">=", -2)
                # valleys: middle rejected if both ends are
                prob.add(f"cvx_sv_{tag}", [(d[b], 1), (d[a], -1), (d[c], -1), (sig, -1)], "<=", 0)
