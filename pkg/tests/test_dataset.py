import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invmrsort import asa
from invmrsort.core import Direction, LearningSet
from invmrsort.dataset import (
    DataError, DatasetSchema, SchemaError, distinct_counts, filter_csv, filter_rows, load_csv,
    load_schema, write_csv,
)


@pytest.fixture(scope="module")
def asa_schema():
    return load_schema(asa.schema_path())


@pytest.fixture(scope="module")
def asa_data(asa_schema):
    return load_csv(asa.dataset_path(), asa_schema)


def test_asa_category_merge(asa_data):
    ls = asa_data.learning_set
    assert len(ls) == 898
    n2 = ls.categories.count(2)
    assert n2 + ls.categories.count(1) == 898
    assert n2 / 898 == pytest.approx(0.67, abs=0.01)
    assert set(asa_data.labels) == {"ASA1", "ASA2", "ASA3", "ASA4"}
    assert all((c == 2) == (lab in ("ASA1", "ASA2"))
               for c, lab in zip(ls.categories, asa_data.labels))


def test_asa_schema_roles(asa_schema, asa_data):
    assert len(asa_schema.criteria) == 8
    assert asa_data.directions.count(Direction.UNKNOWN) == 1
    assert asa_schema.criterion_names()[-1] == "glycemia"
    spec = asa_data.criteria[-1]
    assert spec.scale_min == min(asa_data.learning_set.evals[:, -1])


def test_asa_has_all_table_columns():
    header = asa.dataset_path().read_text().splitlines()[0].split(",")
    assert len(header) == 16 and header[0] == "patient_id" and header[-1] == "asa"


def test_phase_filters(asa_data, asa_schema):
    names = asa_schema.criterion_names()
    ls2 = filter_rows(asa_data.learning_set, names, asa.phase_predicate(2))
    assert len(ls2) == 801
    ls3 = filter_rows(ls2, names, asa.phase_predicate(3))
    assert len(ls3) == 624
    g = ls3.evals[:, names.index("glycemia")]
    cats = np.array(ls3.categories)
    assert ((g >= 0.9) & (g <= 1.2))[cats == 2].all()
    assert ((g < 0.9) | (g > 1.2))[cats == 1].all()


def test_remove_nothing_predicate(asa_data, asa_schema):
    names = asa_schema.criterion_names()
    same = filter_rows(asa_data.learning_set, names, {"category": [], "conditions": []})
    assert same == asa_data.learning_set
    same = filter_rows(asa_data.learning_set, names,
                       {"conditions": [{"criterion": "age", "op": ">", "value": 1000}]})
    assert same == asa_data.learning_set


def test_unknown_criterion_in_predicate(asa_data, asa_schema):
    with pytest.raises(SchemaError):
        filter_rows(asa_data.learning_set, asa_schema.criterion_names(),
                    {"conditions": [{"criterion": "heart_rate", "op": "<", "value": 1}]})
    with pytest.raises(SchemaError):
        filter_rows(asa_data.learning_set, asa_schema.criterion_names(),
                    {"conditions": [{"criterion": "age", "op": "~", "value": 1}]})


def test_pipeline_is_byte_deterministic(tmp_path, asa_schema):
    outputs = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        d.mkdir()
        src = asa.write_csv(d / "phase1.csv")
        filter_csv(src, d / "phase2.csv", asa_schema, asa.phase_predicate(2))
        filter_csv(d / "phase2.csv", d / "phase3.csv", asa_schema, asa.phase_predicate(3))
        outputs.append([(d / f"phase{k}.csv").read_bytes() for k in (1, 2, 3)])
    assert outputs[0] == outputs[1]
    assert outputs[0][0] == asa.dataset_path().read_bytes()
    assert [len(b.decode().splitlines()) - 1 for b in outputs[0]] == [898, 801, 624]


def test_distinct_counts(asa_data):
    counts = distinct_counts(asa_data.learning_set)
    assert counts[1:5] == [2, 2, 2, 2]
    assert counts[-1] > 50


# --- loading errors --------------------------------------------------------

def _plain(tmp_path, text, schema=None):
    f = tmp_path / "d.csv"
    f.write_text(text)
    schema = schema or DatasetSchema.for_criteria(["x", "y"])
    return lambda: load_csv(f, schema)


def test_header_only_is_empty(tmp_path):
    with pytest.raises(DataError, match="no rows"):
        _plain(tmp_path, "id,x,y,category\n")()


def test_empty_file(tmp_path):
    with pytest.raises(DataError):
        _plain(tmp_path, "")()


def test_missing_column(tmp_path):
    with pytest.raises(SchemaError, match="y"):
        _plain(tmp_path, "id,x,category\na,1,1\n")()


def test_non_numeric_cell_reports_line(tmp_path):
    with pytest.raises(DataError) as err:
        _plain(tmp_path, "id,x,y,category\na,1,2,1\nb,1,oops,2\n")()
    assert err.value.line == 3 and "oops" in str(err.value)


def test_unmapped_label(tmp_path):
    schema = DatasetSchema.from_dict({
        "columns": [{"name": "x", "role": "criterion"}, {"name": "lab", "role": "category"}],
        "category_map": {"good": 2, "bad": 1}})
    with pytest.raises(DataError, match="ugly") as err:
        _plain(tmp_path, "x,lab\n1,good\n2,ugly\n", schema)()
    assert err.value.line == 3


def test_off_scale_value(tmp_path):
    schema = DatasetSchema.from_dict({
        "columns": [{"name": "x", "role": "criterion", "min": 0, "max": 1},
                    {"name": "c", "role": "category"}]})
    with pytest.raises(DataError, match="outside"):
        _plain(tmp_path, "x,c\n0.5,1\n1.5,2\n", schema)()


def test_schema_invariants():
    with pytest.raises(SchemaError):
        DatasetSchema.from_dict({"columns": [{"name": "x", "role": "criterion"}]})
    with pytest.raises(SchemaError):
        DatasetSchema.from_dict({"columns": [{"name": "c", "role": "category"}]})
    with pytest.raises(SchemaError):
        DatasetSchema.from_dict({"columns": [{"name": "x", "role": "weird"},
                                             {"name": "c", "role": "category"}]})


def test_schema_round_trip(tmp_path, asa_schema):
    from invmrsort.dataset import save_schema
    save_schema(asa_schema, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json") == asa_schema
    assert json.loads((tmp_path / "s.json").read_text())["category_map"]["ASA3"] == 1


def test_counts_add_up(tmp_path):
    text = "id,x,y,category\n" + "".join(f"r{k},{k},{k % 3},{1 + k % 2}\n" for k in range(17))
    data = _plain(tmp_path, text)()
    assert len(data.learning_set) == 17
    assert [a.id for a in data.learning_set.alternatives][:2] == ["r0", "r1"]


@given(st.lists(st.tuples(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True),
                          st.floats(allow_nan=False, allow_infinity=False),
                          st.integers(1, 5)), min_size=1, max_size=30))
def test_export_load_is_bit_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    ls = LearningSet.from_arrays([[a, b] for a, b, _ in rows], [c for _, _, c in rows])
    write_csv(path, ls, ["x", "y"])
    back = load_csv(path, DatasetSchema.for_criteria(["x", "y"])).learning_set
    assert back.categories == ls.categories
    assert back.evals.tobytes() == ls.evals.tobytes()
