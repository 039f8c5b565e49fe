import json

import numpy as np

from rfsde.io import RunManifest, file_sha256, format_number, risk_curve_svg, to_jsonable, write_csv, write_json


def test_format_number():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(2.0) == "2"
    assert format_number(np.float32(0.5)) == "0.5"
    assert format_number(np.int64(7)) == "7"
    assert format_number(True) == "1"
    assert format_number(float("nan")) == "nan"
    assert format_number(float("-inf")) == "-inf"
    assert format_number("lower") == "lower"
    assert float(format_number(1 / 3)) == 1 / 3


def test_csv(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["t", "x"], [(0.0, 1 / 3), (0.5, 2)])
    text = p.read_bytes().decode()
    assert text == "t,x\n0,0.33333333333333331\n0.5,2\n"


def test_json_round_trip(tmp_path):
    obj = {"b": [0.1, np.float64(1e-300), np.int32(3)], "a": {"nan": float("nan"), "ok": True}, "arr": np.arange(2)}
    p = write_json(tmp_path / "a.json", obj)
    text = p.read_text()
    back = json.loads(text)
    assert back == {"a": {"nan": None, "ok": True}, "arr": [0, 1], "b": [0.1, 1e-300, 3]}
    assert text.index('"a"') < text.index('"arr"') < text.index('"b"')
    assert "0.10000000000000001" in text
    assert to_jsonable((1, 2)) == [1, 2]


def test_manifest(tmp_path):
    out = write_csv(tmp_path / "x.csv", ["a"], [(1,)])
    m = RunManifest("0.1.0", "trend", "abc", 5, "pcg", {"n": 4}, 1)
    m.add_output(out)
    m.timings["wall_seconds"] = 0.5
    data = json.loads(m.write(tmp_path / "manifest.json").read_text())
    assert data["outputs"] == [{"file": "x.csv", "sha256": file_sha256(out)}]
    assert data["master_seed"] == 5 and data["timings"]["wall_seconds"] == 0.5


def test_svg():
    svg = risk_curve_svg([0.1, 0.05, 0.025], [1e-2, 3e-3, 1e-3], slope=1.6, intercept=-1.0)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "slope 1.600" in svg
