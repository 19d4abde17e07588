"""Synthetic stand-in for the ASA anaesthesia-risk dataset.

The real patient records are not redistributable.  This generator keeps the
structure that matters for the three-phase preprocessing study: the 14
clinical columns with their domains, four ASA labels merged into two
categories at roughly 2:1, and a glycemia column whose good values form an
interval.

Rows are built from "healthy" background profiles.  Every non-normal group
reuses a background profile, so glycemia (and, for one group, respiratory
failure) is the only thing that separates it from a normal patient:

========  =====  ==============  ===========================  ========
group     rows   glycemia        other columns                category
========  =====  ==============  ===========================  ========
normal    425    [0.90, 1.20]    background                   2
resp      97     [0.90, 1.20]    background, resp. failure=1  1
hypo      177    [0.50, 0.89]    background                   2
hypo-bad  6      copies of hypo rows                          1
hyper     193    [1.21, 3.80]    background                   1
========  =====  ==============  ===========================  ========

Each hypo-bad row duplicates a hypo profile present twice in the hypo
group, so on the full set approving low glycemia always pays off and the
learned criterion is monotone.  Dropping the ``resp`` rows and then the
category-2 ``hypo`` rows leaves a set only an interval on glycemia
separates.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

COLUMNS = (
    ("age", 0, 105), ("diabetic", 0, 1), ("hypertension", 0, 1),
    ("respiratory_failure", 0, 1), ("heart_failure", 0, 1), ("heart_rate", 55, 123),
    ("heart_rate_steadiness", 0, 1), ("pacemaker", 0, 1), ("av_block", 0, 1),
    ("lv_hypertrophy", 0, 1), ("oxygen_saturation", 43, 100), ("glycemia", 0.5, 3.8),
    ("systolic_bp", 9, 20.5), ("diastolic_bp", 5, 13),
)
HEADER = ("patient_id",) + tuple(c[0] for c in COLUMNS) + ("asa",)
GROUP_SIZES = {"normal": 425, "resp": 97, "hypo": 177, "hypo_bad": 6, "hyper": 193}
N_ROWS = sum(GROUP_SIZES.values())
DEFAULT_SEED = 2021


def _background(rng, size: int) -> list[dict]:
    rows = []
    for _ in range(size):
        rows.append({
            "age": int(rng.integers(18, 86)),
            "diabetic": int(rng.random() < 0.1),
            "hypertension": int(rng.random() < 0.2),
            "respiratory_failure": 0,
            "heart_failure": int(rng.random() < 0.05),
            "heart_rate": int(rng.integers(58, 100)),
            "heart_rate_steadiness": int(rng.random() < 0.9),
            "pacemaker": int(rng.random() < 0.03),
            "av_block": int(rng.random() < 0.03),
            "lv_hypertrophy": int(rng.random() < 0.05),
            "oxygen_saturation": int(rng.integers(92, 101)),
            "systolic_bp": float(rng.integers(20, 33)) / 2,
            "diastolic_bp": float(rng.integers(12, 19)) / 2,
        })
    return rows


def _glycemia(rng, lo: float, hi: float, size: int) -> list[float]:
    """Values on the 0.01 g/l grid in ``[lo, hi]``."""
    ks = rng.integers(int(round(lo * 100)), int(round(hi * 100)) + 1, size=size)
    return [int(k) / 100 for k in ks]


def generate(seed: int = DEFAULT_SEED) -> list[list[str]]:
    """Header plus 898 string rows, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    g = GROUP_SIZES
    base = _background(rng, g["normal"])
    pick = lambda k: [dict(base[int(i)]) for i in rng.integers(0, len(base), size=k)]  # noqa: E731

    rows = []
    for prof, gl in zip(base, _glycemia(rng, 0.9, 1.2, g["normal"])):
        rows.append((prof, gl, 2))
    for prof, gl in zip(pick(g["resp"]), _glycemia(rng, 0.9, 1.2, g["resp"])):
        prof["respiratory_failure"] = 1
        rows.append((prof, gl, 1))
    n_unique = g["hypo"] - g["hypo_bad"]
    hypo = list(zip(pick(n_unique), _glycemia(rng, 0.5, 0.89, n_unique)))
    twins = [hypo[int(i)] for i in rng.choice(n_unique, size=g["hypo_bad"], replace=False)]
    for prof, gl in hypo + twins:
        rows.append((dict(prof), gl, 2))
    for prof, gl in twins:
        rows.append((dict(prof), gl, 1))
    # hyperglycemia is right-skewed: most values close to the normal range
    hyper = np.minimum(3.8, 1.21 + rng.exponential(0.45, size=g["hyper"]))
    for prof, gl in zip(pick(g["hyper"]), np.round(hyper, 2)):
        rows.append((prof, float(gl), 1))

    order = rng.permutation(len(rows))
    out = [list(HEADER)]
    for k, idx in enumerate(order):
        prof, gl, cat = rows[int(idx)]
        label = ("ASA1", "ASA2")[rng.integers(2)] if cat == 2 else ("ASA3", "ASA4")[rng.integers(2)]
        cells = [f"P{k + 1:04d}"]
        for name, _, _ in COLUMNS:
            cells.append(repr(gl) if name == "glycemia" else str(prof[name]))
        cells.append(label)
        out.append(cells)
    return out


def write_csv(path, seed: int = DEFAULT_SEED) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(generate(seed))
    return path


def _data(name: str):
    return resources.files("invmrsort").joinpath("data", name)


def schema_path() -> Path:
    return Path(str(_data("asa_schema.json")))


def dataset_path() -> Path:
    """The shipped CSV, generated with :data:`DEFAULT_SEED`."""
    return Path(str(_data("asa_synthetic.csv")))


def phase_predicate(phase: int) -> dict:
    """Removal predicate turning the phase ``phase - 1`` set into phase ``phase``."""
    if phase not in (2, 3):
        raise ValueError("phases 2 and 3 have removal predicates")
    return json.loads(_data(f"asa_phase{phase}.json").read_text(encoding="utf-8"))
