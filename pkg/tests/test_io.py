import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slowvoter.io import read_csv, read_json, to_jsonable, write_csv, write_json


@given(st.lists(st.floats(allow_nan=False, allow_infinity=True), min_size=1, max_size=8))
def test_csv_round_trip_keeps_every_bit(values):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        path = write_csv(Path(tmp) / "t.csv", ["k", "v"], [[i, np.float64(v)] for i, v in enumerate(values)])
        header, cols = read_csv(path)
    assert header == ["k", "v"]
    assert cols["v"] == [float(v) for v in values]


def test_csv_labels_and_row_checks(tmp_path):
    path = write_csv(tmp_path / "a" / "t.csv", ["side", "x"], [["+", 1.5], ["-", np.float32(0.25)]])
    assert path.read_text() == "side,x\n+,1.5\n-,0.25\n"
    assert read_csv(path)[1]["side"] == ["+", "-"]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", ["a", "b"], [[1]])


def test_json_conversion(tmp_path):
    obj = {"a": np.arange(3), "b": (1.0, math.inf), 3: np.float64(-math.inf), "c": math.nan}
    assert to_jsonable(obj) == {"a": [0, 1, 2], "b": [1.0, "inf"], "3": "-inf", "c": "nan"}
    path = write_json(tmp_path / "x.json", obj)
    assert read_json(path)["a"] == [0, 1, 2]
    assert path.read_text().startswith('{\n  "3"')
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
