"""
レポート出力のテスト
"""
import numpy as np
import pytest

from utils.errors import InvalidParameterError
from utils.file_manager import file_manager
from utils.report_writer import ReportRecord, load_report, records_to_csv, write_report, write_table_csv


def test_csv_layout():
    text = records_to_csv([
        ReportRecord("mape", 16.5, "percent", "a->b"),
        ReportRecord("completed", True, "bool"),
        ReportRecord("samples", np.int64(3), "count"),
    ])
    assert text.splitlines() == [
        "metric,value,unit,provenance",
        "mape,16.5,percent,a->b",
        "completed,true,bool,",
        "samples,3,count,",
    ]


def test_numpy_values_are_plain():
    record = ReportRecord("x", np.float64(0.25), "ratio")
    assert type(record.value) is float


@pytest.mark.parametrize("kwargs", [
    {"metric": "", "value": 1, "unit": "count"},
    {"metric": "x", "value": 1, "unit": ""},
    {"metric": "x", "value": float("nan"), "unit": "s"},
    {"metric": "x", "value": float("inf"), "unit": "s"},
])
def test_invalid_records(kwargs):
    with pytest.raises(InvalidParameterError):
        ReportRecord(**kwargs)


def test_write_and_load(tmp_path):
    records = [ReportRecord("mean_kbps", 1000.0, "kbps", "v"), ReportRecord("stall_flag", "stall", "label")]
    csv_path, json_path = write_report(records, tmp_path / "out", {"seed": 42})
    assert csv_path.read_text(encoding="utf-8").startswith("metric,value,unit,provenance\n")
    assert load_report(json_path) == records
    assert file_manager.load_json(json_path)["config"] == {"seed": 42}


def test_same_input_same_bytes(tmp_path):
    records = [ReportRecord("a", 0.1 + 0.2, "ratio")]
    first = write_report(records, tmp_path / "one", {"k": 1})
    second = write_report(records, tmp_path / "two", {"k": 1})
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_table_csv(tmp_path):
    path = write_table_csv(("t", "value", "pearson"), [(0.0, 1.5, None), (1.0, np.float64(2.0), 0.9)],
                           tmp_path / "table.csv")
    assert path.read_text(encoding="utf-8").splitlines() == ["t,value,pearson", "0.0,1.5,", "1.0,2.0,0.9"]
