import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fracobstacle.errors import IoError
from fracobstacle.report import (ExperimentReport, emit_report, plot_traces, read_csv, read_jsonl,
                                 write_csv, write_jsonl)

SVG = "{http://www.w3.org/2000/svg}"


def test_jsonl_round_trip(tmp_path):
    recs = [{"a": 1, "b": np.float64(0.5), "c": [np.int64(2), True]}, {"a": math.nan, "d": {"x": np.bool_(False)}}]
    write_jsonl(tmp_path / "r.jsonl", recs)
    back = read_jsonl(tmp_path / "r.jsonl")
    assert back[0] == {"a": 1, "b": 0.5, "c": [2, True]}
    assert math.isnan(back[1]["a"]) and back[1]["d"] == {"x": False}


def test_csv_header_only_and_values(tmp_path):
    write_csv(tmp_path / "e.csv", ("x", "y"), [])
    assert (tmp_path / "e.csv").read_text() == "x,y\n"
    write_csv(tmp_path / "v.csv", ("x", "y"), [{"x": 0.1, "y": True}])
    row = read_csv(tmp_path / "v.csv")[0]
    assert float(row["x"]) == 0.1 and row["y"] == "True"


def _series_groups(path):
    root = ET.parse(path).getroot()
    out = []
    for g in root.iter(SVG + "g"):
        if g.get("id", "").startswith("line2d"):
            uses = g.findall(f".//{SVG}use")
            if uses and g.find(f".//{SVG}path") is not None:
                out.append(len(uses))
    return out


def test_svg_markers_and_labels(tmp_path):
    path = tmp_path / "f.svg"
    plot_traces(path, [0.5, 0.25, 0.125, 0.0625], {"mean": [1.0, 1.1, 0.95, 1.02]}, "eps", "rescaled sum")
    text = path.read_text()
    assert 4 in _series_groups(path)
    assert "<!-- eps -->" in text and "<!-- rescaled sum -->" in text


def test_emit_report_layout(tmp_path):
    rep = ExperimentReport("sample", {"seed": 1}, records=[{"k": 1}],
                           tables={"t": (("a",), [{"a": 1}])}, texts={"x.txt": "hi\n"}, wall_clock=0.1)
    names = {p.split("/")[-1] for p in emit_report(rep, tmp_path / "o")}
    assert names == {"t.csv", "runs.jsonl", "x.txt", "report.json"}
    assert (tmp_path / "o" / "timing.json").exists()


def test_emit_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_report(ExperimentReport("sample", {}), blocker / "sub")
