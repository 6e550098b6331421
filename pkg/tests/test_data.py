import numpy as np
import pytest

from ipwdist import Arm, DataError, Observation, Sample, Schema, emit_csv, ingest_csv, validate
from ipwdist.data import discrete_cells, require_both_arms


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_arm_parse_accepts_names_and_codes():
    assert Arm.parse("treated") is Arm.TREATED
    assert Arm.parse("Control") is Arm.CONTROL
    assert Arm.parse(1) is Arm.TREATED
    assert Arm.parse("0") is Arm.CONTROL
    with pytest.raises(ValueError):
        Arm.parse("placebo")


def test_sample_rejects_bad_inputs():
    with pytest.raises(DataError):
        Sample(np.zeros((3, 1)), np.array([0, 1, 2]), np.zeros(3))
    with pytest.raises(DataError):
        Sample(np.zeros((3, 1)), np.array([0, 1, 1]), np.array([0.0, np.nan, 1.0]))
    with pytest.raises(DataError):
        Sample(np.zeros((2, 1)), np.array([0, 1, 1]), np.zeros(3))
    with pytest.raises(DataError):
        Sample(np.zeros((0, 1)), np.zeros(0, dtype=int), np.zeros(0))


def test_sample_is_read_only_copy():
    x = np.zeros((2, 1))
    s = Sample(x, np.array([0, 1]), np.array([1.0, 2.0]))
    x[0, 0] = 9.0
    assert s.x[0, 0] == 0.0
    with pytest.raises(ValueError):
        s.y[0] = 5.0


def test_rows_round_trip():
    rows = [Observation((1.0, 2.0), 1, 3.5), Observation((0.0, -1.0), 0, 2.0)]
    s = Sample.from_rows(rows)
    assert s.n == 2 and s.l == 2
    assert s.rows == rows


def test_csv_round_trip_is_bit_exact(tmp_path, rng):
    s = Sample(rng.normal(size=(20, 2)), rng.integers(0, 2, 20), rng.normal(size=20) * 1e3)
    emit_csv(s, tmp_path / "s.csv")
    back = ingest_csv(tmp_path / "s.csv", Schema(x=("x1", "x2")))
    assert back == s


def test_ingest_named_columns(tmp_path):
    p = write(tmp_path / "d.csv", "age,treat,wage\n30,1,5.5\n40,0,7\n")
    s = ingest_csv(p, Schema(y="wage", t="treat", x=("age",)))
    np.testing.assert_array_equal(s.y, [5.5, 7.0])
    np.testing.assert_array_equal(s.t, [1, 0])


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("y,t,x\n", "empty"),
        ("y,t\n1,0\n", "missing column"),
        ("y,t,x\n1,0,0\nabc,1,0\n", "row 2"),
        ("y,t,x\n1,0,0\n2,2,0\n", "row 2"),
        ("y,t,x\n1,,0\n", "row 1"),
    ],
)
def test_ingest_reports_bad_rows(tmp_path, text, fragment):
    p = write(tmp_path / "bad.csv", text)
    with pytest.raises(DataError, match=fragment):
        ingest_csv(p)


def test_validate_flags_empty_arm_and_small_n():
    s = Sample(np.zeros((5, 1)), np.ones(5, dtype=int), np.arange(5.0))
    rep = validate(s)
    assert not rep.ok
    assert any("control" in f for f in rep.flags)
    assert any("n below asymptotic regime" in w for w in rep.warnings)
    with pytest.raises(DataError):
        require_both_arms(s)


def test_validate_flags_cell_without_overlap():
    x = np.array([[0.0]] * 4 + [[1.0]] * 4)
    t = np.array([0, 1, 0, 1, 1, 1, 1, 1])
    rep = validate(Sample(x, t, np.arange(8.0)))
    assert rep.flags and not rep.ok


def test_discrete_cells_threshold():
    x = np.arange(10.0)[:, None]
    cells, inverse = discrete_cells(x)
    assert len(cells) == 10
    np.testing.assert_array_equal(cells[inverse].ravel(), x.ravel())
    assert discrete_cells(np.arange(11.0)[:, None]) is None
