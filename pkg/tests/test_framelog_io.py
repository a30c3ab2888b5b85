"""
正規化CSVの読み書きのテスト
"""
import pytest

from conftest import make_log
from framelog.framelog_io import load_framelog_csv, read_framelog_csv, save_framelog_csv, write_framelog_csv
from framelog.mp4_parser import parse_mp4
from traces.itag import lookup_itag
from utils.errors import EmptyLog, MalformedLog, ParseError, SchemaError


def test_round_trip_preserves_log():
    log = make_log([(0.0, 1200), (0.04, 300), (1 / 3, 310)], video_id="abc", itag=22, declared_duration=1.0)
    assert read_framelog_csv(write_framelog_csv(log)) == log


def test_round_trip_of_parsed_mp4(fixture_a):
    log = parse_mp4(fixture_a, video_id="fixture-a")
    restored = read_framelog_csv(write_framelog_csv(log))
    assert restored == log
    assert restored.itag.resolution == "360p"


def test_file_round_trip(tmp_path):
    log = make_log([(0.0, 10), (0.5, 20)], video_id="f")
    path = save_framelog_csv(log, tmp_path / "nested" / "f.csv")
    assert load_framelog_csv(path) == log


def test_missing_metadata_uses_defaults():
    log = read_framelog_csv("index,pts_seconds,size_bytes\n0,0.0,10\n1,0.5,20\n")
    assert log.video_id == ""
    assert log.itag == lookup_itag(134)
    assert [frame.is_key for frame in log.frames] == [None, None]


def test_overrides_take_precedence():
    text = "# video_id=a\n# itag=22\nindex,pts_seconds,size_bytes,is_key\n0,0.0,10,1\n"
    log = read_framelog_csv(text, video_id="b", itag=lookup_itag(18))
    assert log.video_id == "b"
    assert log.itag.itag == 18
    assert log.frames[0].is_key is True


def test_decreasing_pts_is_malformed():
    text = "index,pts_seconds,size_bytes,is_key\n0,1.0,10,\n1,0.5,10,\n"
    with pytest.raises(MalformedLog):
        read_framelog_csv(text)


def test_no_rows_is_empty():
    with pytest.raises(EmptyLog):
        read_framelog_csv("index,pts_seconds,size_bytes,is_key\n")


@pytest.mark.parametrize("text", ["", "# video_id=x\n", "pts,size\n0,1\n"])
def test_bad_header(text):
    with pytest.raises(SchemaError):
        read_framelog_csv(text)


def test_non_numeric_cell_reports_line():
    text = "# video_id=x\nindex,pts_seconds,size_bytes,is_key\n0,0.0,10,\n1,abc,10,\n"
    with pytest.raises(ParseError) as excinfo:
        read_framelog_csv(text)
    assert excinfo.value.line == 4


def test_bad_key_flag():
    with pytest.raises(ParseError):
        read_framelog_csv("index,pts_seconds,size_bytes,is_key\n0,0.0,10,maybe\n")
