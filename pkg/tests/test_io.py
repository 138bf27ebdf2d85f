import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casecube.cohort import Cohort, SimCohortSpec, generate_cohort
from casecube.design import DesignSpec
from casecube.errors import ConfigurationError, ParseError, SchemaError
from casecube.io import (design_from_config, design_to_config, emit_summary_table, parse_cohort_csv,
                         parse_config_text, write_cohort_csv)
from casecube.simulation import ReplicationSummary


def write(tmp_path, text, name="c.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_round_trip(tmp_path):
    spec = SimCohortSpec(50, beta_true=(0.7, 0.0, 0.2), model_columns=(0, 2), aux_columns=(1,))
    c = generate_cohort(spec, np.random.default_rng(1)).with_strata(np.arange(50) % 3)
    write_cohort_csv(c, tmp_path / "c.csv")
    assert parse_cohort_csv(tmp_path / "c.csv") == c


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e6, allow_nan=False), st.booleans(),
                          st.floats(-1e9, 1e9, allow_nan=False, allow_infinity=False)), max_size=20))
def test_round_trip_is_exact(tmp_path_factory, rows):
    n = len(rows)
    c = Cohort([r[0] for r in rows], np.array([r[1] for r in rows], dtype=bool),
               np.array([[r[2]] for r in rows]).reshape(n, 1), np.zeros((n, 0)), np.zeros(n, dtype=int))
    path = tmp_path_factory.mktemp("rt") / "c.csv"
    write_cohort_csv(c, path)
    assert parse_cohort_csv(path) == c


def test_header_only_gives_empty_cohort(tmp_path):
    c = parse_cohort_csv(write(tmp_path, "id,time,event,z1,zs1,zs2,stratum\n"))
    assert c.n == 0 and c.covariate_dim == 1 and c.aux_dim == 2


def test_bad_event_names_the_line(tmp_path):
    path = write(tmp_path, "id,time,event,z1,stratum\n1,0.5,1,0.1,0\n2,0.7,2,0.3,0\n")
    with pytest.raises(SchemaError, match="line 3"):
        parse_cohort_csv(path)


def test_non_numeric_field_names_the_line(tmp_path):
    path = write(tmp_path, "id,time,event,z1,stratum\n1,0.5,1,abc,0\n")
    with pytest.raises(ParseError, match="line 2") as info:
        parse_cohort_csv(path)
    assert info.value.line == 2


@pytest.mark.parametrize("text", [
    "id,time,event,z1\n",
    "id,time,event,zs1,z1,stratum\n",
    "id,time,event,z1,stratum\n1,0.5,1,0.1\n",
    "id,time,event,z1,stratum\n2,0.5,1,0.1,0\n",
    "id,time,event,z1,stratum\n1,-0.5,1,0.1,0\n",
    "",
])
def test_schema_errors(tmp_path, text):
    with pytest.raises(SchemaError):
        parse_cohort_csv(write(tmp_path, text))


def table1_like():
    return [
        ReplicationSummary("FC", np.array([0.6864]), None, np.array([0.0410]), None, coef_names=("z1",)),
        ReplicationSummary("SRS", np.array([0.6941]), np.array([0.1246]), np.array([0.1215]),
                           np.array([3.0390]), 12, 1988, coef_names=("z1",)),
    ]


def test_summary_table_format():
    lines = emit_summary_table(table1_like()).splitlines()
    assert lines[0].split("\t") == ["Design", "Coef", "Mean", "SD", "SE", "SE1", "SE2", "RE", "Excluded"]
    assert lines[1].split("\t") == ["FC", "z1", "0.6864", "", "0.0410", "", "", "", "0"]
    assert lines[2].split("\t") == ["SRS", "z1", "0.6941", "0.1246", "0.1215", "", "", "3.0390", "12"]


def test_tsv_and_csv_differ_only_in_delimiter():
    tsv = emit_summary_table(table1_like(), "tsv")
    csv = emit_summary_table(table1_like(), "csv")
    assert tsv.replace("\t", ",") == csv
    with pytest.raises(ConfigurationError):
        emit_summary_table(table1_like(), "xlsx")


def test_census_summary_row():
    s = ReplicationSummary("census", np.array([0.5]), np.array([0.0]), np.array([0.0]), np.array([0.0]))
    lines = emit_summary_table([s]).splitlines()
    assert len(lines) == 2 and lines[1].split("\t")[7] == "0.0000"


def test_config_text():
    cfg = parse_config_text("# experiment\nreps = 200\nsubcohort_size=100  # n\n\n--seed = 7\n")
    assert cfg == {"reps": "200", "subcohort-size": "100", "seed": "7"}
    with pytest.raises(ParseError, match="line 1"):
        parse_config_text("reps 200")


def test_design_config_round_trip():
    spec = DesignSpec.stratified("BSc", {1: 120, 0: 160, 4: 120}, range(16), "case_cohort", seed=4)
    back = design_from_config(parse_config_text(design_to_config(spec)))
    assert back == spec
    simple = design_from_config({"design": "srs", "subcohort-size": "50"})
    assert simple == DesignSpec.simple("SRS", 50)
    with pytest.raises(ConfigurationError):
        design_from_config({"design": "bs"})
    with pytest.raises(ConfigurationError):
        design_from_config({"design": "bs", "strata": "0:x"})
