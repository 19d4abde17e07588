"""Command-line interface: ``invmrsort <command> ...`` (also ``python -m invmrsort``)."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import asa
from .core import ContractError, Direction, assign_many, load_model, save_model
from .dataset import (
    DatasetSchema, distinct_counts, filter_csv, load_csv, load_predicate, load_schema,
    save_schema, write_csv,
)
from .datagen import GenConfig, generate_instance, instance_rng
from .metrics import run_experiment
from .mip import MipConfig, build_p_category, normalize
from .solve import (
    FileBackend, HighsBackend, LearnConfig, LearningError, SolverError, brute_force_oracle,
    default_backend, learn, merge_duplicates,
)

log = logging.getLogger("invmrsort")


def _plain_schema(path, directions: Optional[str]) -> DatasetSchema:
    """Schema for files laid out as ``id, criteria..., category``."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if not header or len(header) < 3:
        raise ContractError(f"{path}: expected a header 'id,<criteria...>,category'")
    names = header[1:-1]
    dirs = [Direction.parse(d) for d in directions.split(",")] if directions else None
    if dirs is not None and len(dirs) != len(names):
        raise ContractError(f"--directions lists {len(dirs)} entries for {len(names)} criteria")
    return DatasetSchema.for_criteria(names, dirs, category=header[-1], id_column=header[0])


def _dataset(args):
    schema = load_schema(args.schema) if args.schema else _plain_schema(args.data, args.directions)
    return schema, load_csv(args.data, schema)


def _backend(args):
    if getattr(args, "solver_cmd", None):
        return FileBackend(command=args.solver_cmd)
    return default_backend()


def _dump(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# --- commands --------------------------------------------------------------

def cmd_learn(args) -> int:
    _, data = _dataset(args)
    cfg = LearnConfig(MipConfig(epsilon=args.epsilon), args.time_limit, args.threads)
    try:
        model, diag = learn(data.learning_set, data.directions, p=args.p,
                            backend=_backend(args), cfg=cfg, criteria=data.criteria)
    except LearningError as exc:
        _dump(exc.diagnostics, args.diagnostics)
        raise
    save_model(model, args.out)
    diag["model"] = str(args.out)
    diag["directions"] = {c.name: c.direction.value for c in model.criteria}
    _dump(diag, args.diagnostics)
    return 0


def cmd_assign(args) -> int:
    model = load_model(args.model)
    with open(args.data, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ContractError(f"{args.data} is empty")
        rows = [r for r in reader if r]
    names = [c.name for c in model.criteria]
    missing = [n for n in names if n not in header]
    if missing:
        raise ContractError(f"columns missing from {args.data}: {', '.join(missing)}")
    cols = [header.index(n) for n in names]
    try:
        X = np.array([[float(r[k]) for k in cols] for r in rows], dtype=float).reshape(-1, len(cols))
    except ValueError as exc:
        raise ContractError(f"non-numeric evaluation: {exc}") from None
    cats = assign_many(model, X)
    id_col = header.index(args.id_column) if args.id_column in header else None
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([args.id_column, "category"])
        for k, (row, cat) in enumerate(zip(rows, cats)):
            w.writerow([row[id_col] if id_col is not None else k + 1, int(cat)])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_generate(args) -> int:
    cfg = GenConfig(n=args.n, q=args.q, p=args.p, learn_size=args.learn_size,
                    test_size=args.test_size, grid=args.grid, seed=args.seed)
    model, dk, ls, test = generate_instance(cfg, instance_rng(args.seed, args.n, args.q))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [c.name for c in model.criteria]
    write_csv(out / "learning.csv", ls, names)
    with open(out / "test.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", *names])
        for k, row in enumerate(test):
            w.writerow([f"t{k}", *(repr(float(v)) for v in row)])
    save_model(model, out / "model.json")
    scales = [(c.scale_min, c.scale_max) for c in model.criteria]
    save_schema(DatasetSchema.for_criteria(names, dk, scales=scales), out / "schema.json")
    print(json.dumps({"out_dir": str(out), "learning": len(ls), "test": len(test),
                      "directions": [d.value for d in dk]}))
    return 0


def cmd_experiment(args) -> int:
    backend = FileBackend(command=args.solver_cmd) if args.solver_cmd else HighsBackend()
    report = run_experiment(args.n, args.q, args.replicas, backend=backend,
                            time_limit=args.time_limit, learn_size=args.learn_size,
                            test_size=args.test_size, p=args.p, base_seed=args.seed,
                            workers=args.workers)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    else:
        sys.stdout.write(report.to_csv())
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_export_lp(args) -> int:
    _, data = _dataset(args)
    norm, transforms = normalize(data.learning_set, data.criteria)
    counts = [1] * len(norm)
    if args.merge:
        norm, counts, _ = merge_duplicates(norm)
    p = args.p or max(2, max(norm.categories))
    prob = build_p_category(norm, data.directions, p, MipConfig(epsilon=args.epsilon,
                                                                 strengthen=not args.plain),
                            multiplicity=counts, transforms=transforms, criteria=data.criteria)
    prob.write_lp(args.out)
    print(json.dumps({"lp": str(args.out), "variables": len(prob.vars),
                      "constraints": len(prob.constraints), "binaries": prob.n_binaries}))
    return 0


def cmd_oracle(args) -> int:
    _, data = _dataset(args)
    norm, _ = normalize(data.learning_set, data.criteria)
    best, witness = brute_force_oracle(norm, data.directions, grid_step=args.grid)
    result = {"best_objective": best, "n_examples": len(norm), "ca": best / len(norm)}
    if args.out:
        save_model(witness, args.out)
        result["witness"] = str(args.out)
    print(json.dumps(result))
    return 0


def cmd_filter(args) -> int:
    schema = load_schema(args.schema) if args.schema else _plain_schema(args.data, None)
    n_in, n_out = filter_csv(args.data, args.out, schema, load_predicate(args.predicate))
    print(json.dumps({"rows_in": n_in, "rows_out": n_out, "out": str(args.out)}))
    return 0


def cmd_make_asa(args) -> int:
    asa.write_csv(args.out, args.seed)
    if args.schema_out:
        Path(args.schema_out).write_text(asa.schema_path().read_text(encoding="utf-8"),
                                         encoding="utf-8")
    print(json.dumps({"out": str(args.out), "rows": asa.N_ROWS}))
    return 0


def cmd_describe(args) -> int:
    _, data = _dataset(args)
    ls = data.learning_set
    cats = {int(c): int(sum(1 for x in ls.categories if x == c)) for c in ls.distinct_categories()}
    print(json.dumps({
        "rows": len(ls), "categories": cats,
        "criteria": [{"name": c.name, "min": c.scale_min, "max": c.scale_max,
                      "direction": d.value, "values": k}
                     for c, d, k in zip(data.criteria, data.directions, distinct_counts(ls))],
    }, indent=2))
    return 0


# --- parser ----------------------------------------------------------------

def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_data(p, schema_required=False):
    p.add_argument("--data", required=True, help="CSV file with a header line")
    p.add_argument("--schema", required=schema_required,
                   help="schema JSON; default layout is id,<criteria...>,category")
    p.add_argument("--directions",
                   help="comma-separated directions when no schema is given "
                        "(gain, cost, single-peaked, single-valley, unknown)")


def _add_solver(p):
    p.add_argument("--time-limit", type=_positive_float, default=None, help="seconds")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--solver-cmd", default=None,
                   help="external solver command with {lp} {sol} {time_limit} {threads}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invmrsort",
                                     description="Learn MR-Sort models with non-monotone criteria.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a model from assignment examples")
    _add_data(p)
    _add_solver(p)
    p.add_argument("--p", type=int, default=None, help="number of categories")
    p.add_argument("--epsilon", type=_positive_float, default=1e-3)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--diagnostics", help="write diagnostics JSON here instead of stdout")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("assign", help="assign categories with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--id-column", default="id")
    p.add_argument("--out")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("generate", help="write a random model and balanced example sets")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--learn-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--grid", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("experiment", help="replicated synthetic sweep")
    p.add_argument("--n", type=int, nargs="+", default=[4])
    p.add_argument("--q", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--replicas", type=int, default=10)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--learn-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", help="per-replica CSV (default: stdout)")
    p.add_argument("--json", help="aggregate JSON with the pivot tables")
    _add_solver(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("export-lp", help="write the program in LP format")
    _add_data(p)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--epsilon", type=_positive_float, default=1e-3)
    p.add_argument("--merge", action="store_true", help="merge duplicate examples")
    p.add_argument("--plain", action="store_true", help="omit the strengthening rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_lp)

    p = sub.add_parser("oracle", help="exhaustive optimum for a tiny data set")
    _add_data(p)
    p.add_argument("--grid", type=float, default=0.1)
    p.add_argument("--out", help="write the witness model (normalised units) here")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("filter", help="drop rows matching a predicate JSON")
    _add_data(p)
    p.add_argument("--predicate", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("make-asa", help="write the synthetic ASA-like data set")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=asa.DEFAULT_SEED)
    p.add_argument("--schema-out", help="also copy the matching schema here")
    p.set_defaults(func=cmd_make_asa)

    p = sub.add_parser("describe", help="row, category and distinct-value counts")
    _add_data(p)
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ContractError, LearningError, SolverError, ValueError, OSError, KeyError) as exc:
        print(f"invmrsort {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
