"""Evaluation metrics and replicated synthetic experiments."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ContractError, CriterionSpec, Direction, MRSortModel, assign_many
from .datagen import GenConfig, generate_instance, instance_rng
from .solve import OPTIMAL, HighsBackend, LearnConfig, LearningError, SolverBackend, learn

log = logging.getLogger(__name__)

CSV_HEADER = ("n", "q", "seed", "status", "wall_time_s", "ca", "cag", "pdr")
BUCKETS = ("low", "mid", "high")


def cag(true_model: MRSortModel, learned_model: MRSortModel, test_set) -> float:
    """Share of ``test_set`` rows both models put in the same category."""
    if true_model.n != learned_model.n or true_model.p != learned_model.p:
        raise ContractError("models do not share a criteria schema")
    X = np.asarray(test_set, dtype=float)
    if len(X) == 0:
        raise ContractError("empty test set")
    return float(np.mean(assign_many(true_model, X) == assign_many(learned_model, X)))


def pdr(true_types: Sequence[Direction], learned_types: Sequence[Direction],
        unknown_mask: Sequence[bool]) -> float:
    """Fraction of criteria flagged in ``unknown_mask`` whose type was recovered."""
    if not len(true_types) == len(learned_types) == len(unknown_mask):
        raise ContractError("type lists and mask differ in length")
    idx = [i for i, u in enumerate(unknown_mask) if u]
    if not idx:
        raise ContractError("PDR is undefined without unknown criteria (q = 0)")
    hits = sum(Direction(true_types[i]) is Direction(learned_types[i]) for i in idx)
    return hits / len(idx)


def weight_bucket(w: float, n: int) -> str:
    """Bucket of a criterion weight: ``[0, 1/2n]``, ``(1/2n, 2/n)`` or ``[2/n, 1]``."""
    if w <= 1 / (2 * n):
        return "low"
    if w < 2 / n:
        return "mid"
    return "high"


@dataclass
class ReplicaRecord:
    n: int
    q: int
    seed: int
    status: str
    wall_time_s: float = float("nan")
    ca: float = float("nan")
    cag: float = float("nan")
    pdr: float = float("nan")
    # (weight, restored) for every unknown criterion
    unknown: list = field(default_factory=list)
    error: str = ""

    @property
    def terminated(self) -> bool:
        return self.status == OPTIMAL


def _mean(xs):
    xs = [x for x in xs if x == x]
    return statistics.fmean(xs) if xs else float("nan")


@dataclass
class ExperimentReport:
    records: list[ReplicaRecord] = field(default_factory=list)

    def cell(self, n: int, q: int) -> list[ReplicaRecord]:
        return [r for r in self.records if r.n == n and r.q == q]

    def cells(self) -> list[tuple[int, int]]:
        return sorted({(r.n, r.q) for r in self.records})

    @staticmethod
    def median_time(records) -> float:
        """Median wall time over terminated replicas only (NaN if none)."""
        times = [r.wall_time_s for r in records if r.terminated]
        return statistics.median(times) if times else float("nan")

    @staticmethod
    def terminated_count(records) -> int:
        return sum(r.terminated for r in records)

    @staticmethod
    def mean_cag(records) -> float:
        return _mean(r.cag for r in records if r.terminated)

    @staticmethod
    def mean_pdr(records) -> float:
        return _mean(r.pdr for r in records if r.terminated)

    @staticmethod
    def pdr_by_weight_bucket(records) -> dict[str, float]:
        """Restoration rate of unknown criteria grouped by their true weight."""
        hits = {b: [] for b in BUCKETS}
        for r in records:
            if r.terminated:
                for w, ok in r.unknown:
                    hits[weight_bucket(w, r.n)].append(float(ok))
        return {b: _mean(v) for b, v in hits.items()}

    def aggregates(self) -> dict:
        out = {}
        for n, q in self.cells():
            rs = self.cell(n, q)
            out[f"n={n},q={q}"] = {
                "n": n, "q": q, "replicas": len(rs),
                "median_time": self.median_time(rs),
                "terminated_count": self.terminated_count(rs),
                "mean_cag": self.mean_cag(rs),
                "mean_pdr": self.mean_pdr(rs),
                "pdr_by_weight_bucket": self.pdr_by_weight_bucket(rs),
            }
        return out

    def table2(self) -> dict:
        """``{q: {n: (median_time, terminated_count)}}``, rows q and columns n."""
        table: dict = {}
        for n, q in self.cells():
            rs = self.cell(n, q)
            table.setdefault(q, {})[n] = (self.median_time(rs), self.terminated_count(rs))
        return table

    def table3(self) -> dict[str, float]:
        """PDR by weight bucket, pooled over every cell with unknown criteria."""
        return self.pdr_by_weight_bucket([r for r in self.records if r.q > 0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow([r.n, r.q, r.seed, r.status] +
                            ["" if x != x else repr(float(x))
                             for x in (r.wall_time_s, r.ca, r.cag, r.pdr)])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, float) and x != x:
                return None
            if isinstance(x, dict):
                return {str(k): clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x
        payload = {
            "aggregates": self.aggregates(),
            "table2": {q: {n: {"median_time": t, "terminated": k} for n, (t, k) in row.items()}
                       for q, row in self.table2().items()},
            "table3": self.table3(),
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(clean(payload), indent=2, sort_keys=True)


def run_replica(n: int, q: int, seed: int, *, backend: Optional[SolverBackend] = None,
                time_limit: Optional[float] = None, learn_size: int = 200,
                test_size: int = 1000, p: int = 2) -> ReplicaRecord:
    """Generate one instance, learn it and score the result; never raises."""
    rec = ReplicaRecord(n, q, seed, "error")
    try:
        cfg = GenConfig(n=n, q=q, p=p, learn_size=learn_size, test_size=test_size, seed=seed)
        truth, dk, ls, test = generate_instance(cfg, instance_rng(seed, n, q))
        criteria = [CriterionSpec(c.name, c.scale_min, c.scale_max) for c in truth.criteria]
        t0 = time.perf_counter()
        try:
            learned, diag = learn(ls, dk, p=p, backend=backend or HighsBackend(),
                                  cfg=LearnConfig(time_limit=time_limit), criteria=criteria)
        except LearningError as exc:
            rec.status = exc.diagnostics.get("status", "error")
            rec.wall_time_s = time.perf_counter() - t0
            return rec
        rec.status = diag["status"]
        rec.wall_time_s = diag["wall_time_s"]
        rec.ca = diag["ca"]
        rec.cag = cag(truth, learned, test)
        mask = [d is Direction.UNKNOWN for d in dk]
        true_types = [c.direction for c in truth.criteria]
        got_types = [c.direction for c in learned.criteria]
        if q:
            rec.pdr = pdr(true_types, got_types, mask)
        rec.unknown = [(truth.weights[i], true_types[i] is got_types[i])
                       for i in range(n) if mask[i]]
    except Exception as exc:  # a failed replica must not abort the sweep
        log.warning("replica n=%s q=%s seed=%s failed: %s", n, q, seed, exc)
        rec.status, rec.error = "error", f"{type(exc).__name__}: {exc}"
    return rec


def _run_job(args):
    n, q, seed, kwargs = args
    return run_replica(n, q, seed, **kwargs)


def run_experiment(ns: Sequence[int], qs: Sequence[int], replicas: int, *,
                   backend: Optional[SolverBackend] = None, time_limit: Optional[float] = None,
                   learn_size: int = 200, test_size: int = 1000, p: int = 2,
                   base_seed: int = 0, workers: int = 1) -> ExperimentReport:
    """Sweep the ``ns`` x ``qs`` grid with ``replicas`` seeded runs per cell.

    Cells with ``q > n`` are skipped.  Replica ``k`` uses seed
    ``base_seed + k``, mixed with ``(n, q)`` when drawing the instance.
    """
    if replicas < 1:
        raise ContractError("replicas must be >= 1")
    kwargs = dict(backend=backend, time_limit=time_limit, learn_size=learn_size,
                  test_size=test_size, p=p)
    jobs = [(n, q, base_seed + k, kwargs) for n in ns for q in qs if q <= n
            for k in range(replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]
    return ExperimentReport(records)
