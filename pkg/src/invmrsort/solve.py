"""Solving, interpreting and certifying inverse MR-Sort programs."""

from __future__ import annotations

import itertools
import logging
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from .core import (
    ContractError, CostAtMost, CriterionSpec, Direction, GainAtLeast, LearningSet,
    MRSortModel, PeakInterval, ValleyComplement, category_from_approvals, widen_constant,
)
from .mip import (
    AffineTransform, DirectionKnowledge, MipConfig, MipProblem, build_p_category, normalize,
)

log = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
SOLVER_ENV = "INVMRSORT_SOLVER_CMD"

OPTIMAL, FEASIBLE, INFEASIBLE, TIMEOUT, ERROR = (
    "optimal", "feasible", "infeasible", "timeout", "error")


class SolverError(RuntimeError):
    pass


class InterpretationError(RuntimeError):
    pass


class LearningError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class MipSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    gap: float = 0.0
    wall_time_s: float = 0.0

    @property
    def has_values(self) -> bool:
        return self.x is not None and self.status in (OPTIMAL, FEASIBLE, TIMEOUT)

    def value(self, problem: MipProblem, symbol: str, h=None, i=None, j=None) -> float:
        return float(self.x[problem.var(symbol, h, i, j)])

    def by_name(self, problem: MipProblem) -> dict[str, float]:
        return {v.name: float(self.x[v.id]) for v in problem.vars}


class SolverBackend(Protocol):
    def solve(self, problem: MipProblem, time_limit: Optional[float] = None,
              threads: int = 1) -> MipSolution: ...


def finalize(problem: MipProblem, x, status: str, objective=None, gap=0.0,
             wall_time_s=0.0) -> MipSolution:
    """Snap binaries and cross-check the objective against the gamma values."""
    x = np.array(x, dtype=float)
    binary = np.array([v.binary for v in problem.vars])
    frac = np.abs(x[binary] - np.round(x[binary]))
    if frac.size and frac.max() > INTEGRALITY_TOL:
        raise SolverError(f"binary variable off by {frac.max():.2e} from an integer")
    x[binary] = np.round(x[binary])
    recomputed = sum(coef * x[k] for k, coef in problem.objective)
    if objective is not None and abs(objective - recomputed) > 1e-6 * max(1.0, abs(recomputed)):
        raise SolverError(f"solver objective {objective} disagrees with sum of gamma {recomputed}")
    return MipSolution(status, x, float(recomputed), gap, wall_time_s)


@dataclass
class HighsBackend:
    """In-process HiGHS through :func:`scipy.optimize.milp`.

    HiGHS's branch-and-bound runs on one thread, so ``threads`` is accepted
    for interface compatibility only; runs are deterministic.
    """

    mip_rel_gap: float = 0.0
    presolve: bool = True

    def solve(self, problem: MipProblem, time_limit: Optional[float] = None,
              threads: int = 1) -> MipSolution:
        from scipy.optimize import Bounds, LinearConstraint, milp

        c, A, lower, upper, var_lo, var_hi, integrality = problem.to_arrays()
        options = {"disp": False, "presolve": self.presolve, "mip_rel_gap": self.mip_rel_gap}
        if time_limit is not None:
            options["time_limit"] = float(time_limit)
        t0 = time.perf_counter()
        res = milp(c, constraints=LinearConstraint(A, lower, upper),
                   bounds=Bounds(var_lo, var_hi), integrality=integrality, options=options)
        elapsed = time.perf_counter() - t0
        if res.status == 0:
            return finalize(problem, res.x, OPTIMAL, -res.fun, 0.0, elapsed)
        if res.status == 1:
            if res.x is None:
                return MipSolution(TIMEOUT, wall_time_s=elapsed)
            gap = float(getattr(res, "mip_gap", float("nan")) or 0.0)
            return finalize(problem, res.x, FEASIBLE, -res.fun, gap, elapsed)
        if res.status == 2:
            return MipSolution(INFEASIBLE, wall_time_s=elapsed)
        return MipSolution(ERROR, wall_time_s=elapsed)


def read_solution_file(path) -> dict[str, float]:
    """Parse ``name value`` pairs, one per line; other lines are ignored."""
    values = {}
    for line in Path(path).read_text().splitlines():
        parts = line.replace("=", " ").replace(",", " ").split()
        if len(parts) != 2:
            continue
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            continue
    return values


@dataclass
class FileBackend:
    """Interop with external solvers through an LP file and a solution file.

    ``command`` is a shell template with ``{lp}``, ``{sol}``, ``{time_limit}``
    and ``{threads}`` placeholders; it must write ``name value`` lines to
    ``{sol}``.  Without a command, ``solution_path`` must already exist.
    """

    command: Optional[str] = None
    solution_path: Optional[str] = None
    lp_path: Optional[str] = None

    @classmethod
    def from_env(cls) -> Optional["FileBackend"]:
        cmd = os.environ.get(SOLVER_ENV)
        return cls(command=cmd) if cmd else None

    def solve(self, problem: MipProblem, time_limit: Optional[float] = None,
              threads: int = 1) -> MipSolution:
        with tempfile.TemporaryDirectory() as tmp:
            lp = Path(self.lp_path or Path(tmp) / "problem.lp")
            sol = Path(self.solution_path or Path(tmp) / "problem.sol")
            problem.write_lp(lp)
            t0 = time.perf_counter()
            if self.command:
                cmd = self.command.format(lp=shlex.quote(str(lp)), sol=shlex.quote(str(sol)),
                                          time_limit=time_limit if time_limit else 1e9,
                                          threads=threads)
                proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
                if proc.returncode != 0:
                    log.warning("external solver failed: %s", proc.stderr.strip())
                    return MipSolution(ERROR, wall_time_s=time.perf_counter() - t0)
            elapsed = time.perf_counter() - t0
            if not sol.exists():
                return MipSolution(TIMEOUT, wall_time_s=elapsed)
            values = read_solution_file(sol)
        missing = [v.name for v in problem.vars if v.name not in values]
        if missing:
            raise SolverError(f"solution file lacks {len(missing)} variables, e.g. {missing[0]}")
        x = [values[v.name] for v in problem.vars]
        return finalize(problem, x, OPTIMAL, None, 0.0, elapsed)


def default_backend() -> SolverBackend:
    return FileBackend.from_env() or HighsBackend()


# --- interpretation --------------------------------------------------------

def classify(sigma: int, los, his, dmin: float, dmax: float, known: Direction) -> Direction:
    """Criterion type from the per-level intervals (normalised units).

    With one level this is exactly the six-case reading of the optimal
    solution; with several levels a monotone reading is kept only if it
    holds at every level, so the approved sets stay embedded.
    """
    if known is not Direction.UNKNOWN:
        return known
    if sigma == 1:
        if all(lo <= dmin for lo in los):
            return Direction.COST
        if all(hi >= dmax for hi in his):
            return Direction.GAIN
        return Direction.SINGLE_PEAKED
    if all(lo < dmin for lo in los):
        return Direction.GAIN
    if all(hi > dmax for hi in his):
        return Direction.COST
    return Direction.SINGLE_VALLEY


def interpret(problem: MipProblem, sol: MipSolution, data_min=None, data_max=None,
              margin: float = 0.0) -> MRSortModel:
    """Turn a solution into an :class:`MRSortModel` in raw criterion units.

    ``data_min``/``data_max`` are the normalised per-criterion extremes of the
    learning set (taken from ``problem.meta`` by default).  ``margin`` moves
    every frontier by that amount into the epsilon gap the program keeps
    around rejected evaluations (intervals widen, valleys narrow, lambda
    drops), so re-evaluating the model does not sit on solver round-off.
    """
    if not sol.has_values:
        raise InterpretationError(f"cannot interpret a solution with status {sol.status!r}")
    meta = problem.meta
    n, p = meta["n"], meta["p"]
    dmin = list(meta["data_min"] if data_min is None else data_min)
    dmax = list(meta["data_max"] if data_max is None else data_max)
    transforms: Sequence[AffineTransform] = meta["transforms"]
    criteria = meta.get("criteria")
    known = meta["directions"]
    levels = range(1, p)

    weights = np.array([sol.value(problem, "w", i=i) for i in range(n)])
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    lam = min(1.0, max(0.5, sol.value(problem, "lambda") - margin))

    specs, approved = [], []
    for i in range(n):
        sigma = int(round(sol.value(problem, "sigma", i=i)))
        bp = [sol.value(problem, "bperp", h, i) for h in levels]
        b = [max(0.0, sol.value(problem, "b", h, i)) for h in levels]
        if sigma == 1:
            los = [c - r - margin for c, r in zip(bp, b)]
            his = [c + r + margin for c, r in zip(bp, b)]
        else:
            r_eff = [max(0.0, r - margin) for r in b]
            los = [c - r for c, r in zip(bp, r_eff)]
            his = [c + r for c, r in zip(bp, r_eff)]
        # the program nests levels exactly; remove solver round-off
        tighten, loosen = (max, min) if sigma == 1 else (min, max)
        for k in range(1, len(los)):
            los[k] = tighten(los[k], los[k - 1])
            his[k] = max(loosen(his[k], his[k - 1]), los[k])
        kind = classify(sigma, los, his, dmin[i], dmax[i], known[i])
        t = transforms[i]
        raw = lambda y: t.inverse_scalar(y)  # noqa: E731
        if criteria is not None:
            base = criteria[i]
            lo_s, hi_s = base.scale_min, base.scale_max
            name = base.name
        else:
            lo_s, hi_s, name = t.inverse_scalar(0.0), t.inverse_scalar(1.0), f"c{i}"
        row = []
        for lo, hi in zip(los, his):
            lo_c, hi_c = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
            if kind is Direction.COST:
                row.append(CostAtMost(raw(hi if sigma == 1 else lo)))
            elif kind is Direction.GAIN:
                row.append(GainAtLeast(raw(lo if sigma == 1 else hi)))
            elif kind is Direction.SINGLE_PEAKED:
                row.append(PeakInterval(min(max(raw(lo_c), lo_s), hi_s),
                                        min(max(raw(hi_c), lo_s), hi_s)))
            else:
                row.append(ValleyComplement(min(max(raw(lo_c), lo_s), hi_s),
                                            min(max(raw(hi_c), lo_s), hi_s)))
        specs.append(CriterionSpec(name, lo_s, hi_s, kind))
        approved.append(row)
    return MRSortModel(specs, weights.tolist(), lam, approved, p)


# --- learning --------------------------------------------------------------

def _default_specs(ls: LearningSet) -> list[CriterionSpec]:
    X = ls.evals
    specs = []
    for i in range(ls.n_criteria):
        lo, hi = float(X[:, i].min()), float(X[:, i].max())
        if 0.0 <= lo and hi <= 1.0:
            lo, hi = 0.0, 1.0
        elif lo == hi:
            lo, hi = widen_constant(lo)
        specs.append(CriterionSpec(f"c{i}", lo, hi))
    return specs


def merge_duplicates(ls: LearningSet):
    """Collapse identical (evaluations, category) examples.

    Returns the reduced set, the multiplicity of each kept example and, for
    each original example, the index of its representative.
    """
    keys, reps, counts, owner = {}, [], [], []
    for k, (alt, cat) in enumerate(zip(ls.alternatives, ls.categories)):
        key = (alt.evals, cat)
        if key not in keys:
            keys[key] = len(reps)
            reps.append(k)
            counts.append(0)
        counts[keys[key]] += 1
        owner.append(keys[key])
    kept = set(reps)
    return ls.subset([k in kept for k in range(len(ls))]), counts, owner


@dataclass
class LearnConfig:
    mip: MipConfig = field(default_factory=MipConfig)
    time_limit: Optional[float] = None
    threads: int = 1
    merge_duplicates: bool = True


def learn(ls: LearningSet, dk: Optional[DirectionKnowledge] = None, p: Optional[int] = None,
          backend: Optional[SolverBackend] = None, cfg: Optional[LearnConfig] = None,
          criteria: Optional[Sequence[CriterionSpec]] = None):
    """Normalise, build, solve and interpret.

    Returns ``(model, diagnostics)``; ``diagnostics["ca"]`` is the share of
    learning examples the optimum restores.
    """
    cfg = cfg or LearnConfig()
    backend = backend or default_backend()
    if len(ls) == 0:
        raise ContractError("empty learning set")
    p = p or max(2, max(ls.categories))
    dk = list(dk) if dk is not None else [Direction.UNKNOWN] * ls.n_criteria
    criteria = list(criteria) if criteria is not None else _default_specs(ls)

    norm, transforms = normalize(ls, criteria)
    if cfg.merge_duplicates:
        reduced, counts, _ = merge_duplicates(norm)
    else:
        reduced, counts = norm, [1] * len(norm)
    problem = build_p_category(reduced, dk, p, cfg.mip, multiplicity=counts,
                               transforms=transforms, criteria=criteria)
    sol = backend.solve(problem, time_limit=cfg.time_limit, threads=cfg.threads)
    diagnostics = {
        "status": sol.status,
        "objective": sol.objective,
        "n_examples": len(ls),
        "n_distinct_examples": len(reduced),
        "ca": sol.objective / len(ls) if sol.has_values else float("nan"),
        "gap": sol.gap,
        "wall_time_s": sol.wall_time_s,
        "degenerate_criteria": [c.name for c, t in zip(criteria, transforms) if t.degenerate],
    }
    if not sol.has_values:
        raise LearningError(f"solver returned {sol.status} without a solution", diagnostics)
    model = interpret(problem, sol, margin=cfg.mip.epsilon / 2)
    return model, diagnostics


# --- brute-force oracle ----------------------------------------------------

ORACLE_MAX_CRITERIA = 3
ORACLE_MAX_EXAMPLES = 12


def _candidate_sets(direction: Direction, half_grid: list[float]):
    """Approved sets with endpoints on the half-step grid of [0, 1]."""
    pairs = list(itertools.combinations_with_replacement(half_grid, 2))
    if direction is Direction.GAIN:
        return [GainAtLeast(t) for t in half_grid]
    if direction is Direction.COST:
        return [CostAtMost(t) for t in half_grid]
    sp = [PeakInterval(lo, hi) for lo, hi in pairs]
    sv = [ValleyComplement(lo, hi) for lo, hi in pairs]
    if direction is Direction.SINGLE_PEAKED:
        return sp
    if direction is Direction.SINGLE_VALLEY:
        return sv
    return sp + sv


def _weight_grid(n: int, steps: int):
    for comp in itertools.product(range(steps + 1), repeat=n):
        if sum(comp) == steps:
            yield comp


def brute_force_oracle(ls: LearningSet, dk: Optional[DirectionKnowledge] = None,
                       grid_step: float = 0.1):
    """Exhaustive search over a grid of two-category models.

    Criterion types, interval endpoints (on a grid of half ``grid_step`` so
    that interval centres and half-widths land on it), integer weight
    compositions and majority thresholds in [0.5, 1] are enumerated; the
    maximum number of restored examples and one model reaching it are
    returned.
    """
    n, m = ls.n_criteria, len(ls)
    if n > ORACLE_MAX_CRITERIA or m > ORACLE_MAX_EXAMPLES:
        raise ContractError(f"oracle limited to n <= {ORACLE_MAX_CRITERIA}, "
                            f"|L| <= {ORACLE_MAX_EXAMPLES} (got n={n}, |L|={m})")
    if grid_step < 0.1 - 1e-12:
        raise ContractError("grid_step must be >= 0.1")
    if m == 0:
        raise ContractError("empty learning set")
    if any(c not in (1, 2) for c in ls.categories):
        raise ContractError("oracle handles two categories only")
    X = ls.evals
    if (X < 0).any() or (X > 1).any():
        raise ContractError("oracle expects evaluations in [0, 1]")
    dk = list(dk) if dk is not None else [Direction.UNKNOWN] * n
    steps = int(round(1 / grid_step))
    half = [k / (2 * steps) for k in range(2 * steps + 1)]
    target = np.array(ls.categories) == 2

    # distinct approval patterns per criterion, keeping one set per pattern
    patterns = []
    for i in range(n):
        seen = {}
        for s in _candidate_sets(Direction(dk[i]), half):
            key = tuple(bool(s.contains(float(v))) for v in X[:, i])
            seen.setdefault(key, s)
        patterns.append(seen)
    keys = [np.array(list(p.keys()), dtype=np.int8).reshape(len(p), m) for p in patterns]
    sets = [list(p.values()) for p in patterns]

    # coalition code of every example under every pattern combination
    codes = np.zeros([len(k) for k in keys] + [m], dtype=np.int8)
    for i, k in enumerate(keys):
        shape = [1] * n + [m]
        shape[i] = len(k)
        codes = codes + (k << i).reshape(shape)

    best, witness = -1, None
    families = {}
    for comp in _weight_grid(n, steps):
        for lam_k in range((steps + 1) // 2, steps + 1):
            if 2 * lam_k < steps:
                continue
            wins = tuple(sum(comp[i] for i in range(n) if mask >> i & 1) >= lam_k
                         for mask in range(2 ** n))
            families.setdefault(wins, (comp, lam_k))
    for wins, (comp, lam_k) in families.items():
        correct = (np.array(wins)[codes] == target).sum(axis=-1)
        score = int(correct.max())
        if score > best:
            best = score
            idx = np.unravel_index(int(correct.argmax()), correct.shape)
            witness = (comp, lam_k, idx)
    comp, lam_k, idx = witness
    criteria = []
    approved = []
    for i in range(n):
        s = sets[i][idx[i]]
        criteria.append(CriterionSpec(f"c{i}", 0.0, 1.0, s.direction))
        approved.append([s])
    model = MRSortModel(criteria, [c / steps for c in comp], max(0.5, lam_k / steps), approved, 2)
    check = sum(category_from_approvals([[s[0].contains(v)] for s, v in zip(approved, a.evals)],
                                        model.weights, model.lambda_) == cat
                for a, cat in zip(ls.alternatives, ls.categories))
    if check != best:
        raise RuntimeError("oracle witness does not reproduce its score")  # internal guard
    return best, model
