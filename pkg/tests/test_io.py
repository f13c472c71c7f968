import math

import numpy as np
import pytest

from riccilab.errors import ConfigError, InvalidStateError
from riccilab.fixtures import get_fixture
from riccilab.geometry import GridSpec, HomothetyState, RadialState
from riccilab.io import csv_text, fmt, json_text, load_manifest, read_csv, read_snapshot, write_snapshot


@pytest.mark.parametrize("name", ["flat-torus", "cone", "sphere-homothety", "flat-product"])
def test_snapshot_round_trip(tmp_path, name):
    kw = {"flat-torus": {"n": 16}, "cone": {"n": 64}, "sphere-homothety": {"n": 32}, "flat-product": {"n": 16}}[name]
    st = get_fixture(name).state(**kw)
    p = write_snapshot(tmp_path / "a.snap", st)
    back = read_snapshot(p)
    assert type(back) is type(st) and back.t == st.t
    assert back.curvature().sup_rm == pytest.approx(st.curvature().sup_rm, rel=1e-15, abs=1e-300)
    assert write_snapshot(tmp_path / "b.snap", back).read_bytes() == p.read_bytes()


def test_truncated_snapshot_is_rejected(tmp_path):
    st = RadialState(np.zeros(16), GridSpec.radial(16, 1.0))
    p = write_snapshot(tmp_path / "a.snap", st)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(InvalidStateError):
        read_snapshot(p)


def test_homothety_snapshot_has_no_payload(tmp_path):
    p = write_snapshot(tmp_path / "h.snap", HomothetyState(3, -1.0, 2.0, t=0.5))
    back = read_snapshot(p)
    assert (back.dim, back.K0, back.c, back.t) == (3, -1.0, 2.0, 0.5)


def test_number_formatting():
    assert fmt(0.1) == "0.1"
    assert fmt(np.float64(1e-300)) == "1e-300"
    assert fmt(float("nan")) == "nan"
    assert fmt(True) == "true" and fmt(np.int64(3)) == "3"
    assert fmt(["a", "b"]) == "a;b"


def test_csv_round_trip(tmp_path):
    rows = [{"a": 1.0 / 3.0, "b": "x"}, {"a": math.inf, "b": "y"}]
    p = tmp_path / "t.csv"
    p.write_text(csv_text(("a", "b"), rows))
    back = read_csv(p)
    assert float(back[0]["a"]) == 1.0 / 3.0 and back[1]["a"] == "inf"


def test_json_is_sorted_and_finite():
    text = json_text({"b": float("nan"), "a": np.float64(2.0)})
    assert text.index('"a"') < text.index('"b"')
    assert "NaN" not in text


def test_missing_manifest(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_manifest(tmp_path)
    assert exc.value.path == "run_dir"
