import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from clinact.core import ParseError, ValidationError
from clinact.ingest import (
    COMPETENCY_HEADER,
    Dataset,
    Session,
    encode_features,
    load_dataset,
    read_annotations,
    read_competency,
    read_features,
    save_dataset,
    write_annotations,
    write_competency,
    write_features,
)


def _binary(t, d, values, magic=b"FSEQ", version=1):
    return struct.pack("<4sIII", magic, version, t, d) + struct.pack(f"<{len(values)}f", *values)


def test_read_binary_features(tmp_path):
    p = tmp_path / "a.fseq"
    p.write_bytes(_binary(2, 3, [1, 0, 0, 0, 1, 0]))
    fs = read_features(p)
    assert fs.session_id == "a"
    np.testing.assert_array_equal(fs.frames, [[1, 0, 0], [0, 1, 0]])


def test_read_csv_features(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("frame,f0,f1\n0,0.5,0.5\n1,0.1,0.9\n", encoding="utf-8")
    fs = read_features(p)
    np.testing.assert_allclose(fs.frames, [[0.5, 0.5], [0.1, 0.9]])


def test_features_are_not_normalized(tmp_path):
    p = tmp_path / "c.fseq"
    p.write_bytes(_binary(1, 2, [3, 4]))
    np.testing.assert_array_equal(read_features(p).frames, [[3, 4]])


def test_truncated_payload_names_expected_and_actual(tmp_path):
    p = tmp_path / "t.fseq"
    p.write_bytes(_binary(10, 2, [0.5] * 18))
    with pytest.raises(ParseError, match=r"expected 80 bytes.*got 72"):
        read_features(p)


@pytest.mark.parametrize(
    "blob, pattern",
    [
        (_binary(1, 1, [1.0], magic=b"XXXX"), "bad magic"),
        (_binary(1, 1, [1.0], version=2), "version"),
        (b"FSEQ", "header truncated"),
        (_binary(1, 2, [1.0, float("inf")]), "offset 20"),
    ],
)
def test_binary_parse_errors(tmp_path, blob, pattern):
    p = tmp_path / "bad.fseq"
    p.write_bytes(blob)
    with pytest.raises(ParseError, match=pattern):
        read_features(p)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False, width=32)))
def test_binary_round_trip_is_byte_exact(tmp_path_factory, frames):
    p = tmp_path_factory.mktemp("rt") / "x.fseq"
    write_features(p, frames)
    raw = p.read_bytes()
    again = tmp_path_factory.mktemp("rt") / "y.fseq"
    write_features(again, read_features(p).frames)
    assert again.read_bytes() == raw == encode_features(frames)


def _ann(tmp_path, rows, name="s.csv"):
    p = tmp_path / name
    p.write_text("start_frame,end_frame,action_id\n" + "".join(f"{a},{b},{c}\n" for a, b, c in rows), encoding="utf-8")
    return p


def test_annotations_expand_to_timeline(tmp_path):
    t = read_annotations(_ann(tmp_path, [(0, 2, 3), (4, 6, 5)]), 6)
    assert t.labels.tolist() == [3, 3, 0, 0, 5, 5]


def test_empty_annotations_are_all_background(tmp_path):
    assert read_annotations(_ann(tmp_path, []), 4).labels.tolist() == [0, 0, 0, 0]


def test_overlap_is_rejected_on_second_row(tmp_path):
    with pytest.raises(ValidationError, match=r":3: .*overlaps"):
        read_annotations(_ann(tmp_path, [(0, 3, 1), (2, 5, 2)]), 6)


@pytest.mark.parametrize("row", [(0, 2, 17), (0, 2, 0), (3, 3, 1), (4, 2, 1), (0, 9, 1)])
def test_invalid_annotation_rows(tmp_path, row):
    with pytest.raises(ValidationError, match=":2:"):
        read_annotations(_ann(tmp_path, [row]), 6)


@given(st.lists(st.tuples(st.integers(1, 16), st.integers(1, 5), st.integers(0, 4)), max_size=8))
def test_labeled_run_lengths_equal_interval_lengths(tmp_path_factory, rows_spec):
    rows, pos = [], 0
    for lab, length, gap in rows_spec:
        pos += gap
        rows.append((pos, pos + length, lab))
        pos += length
    n = pos + 1
    t = read_annotations(_ann(tmp_path_factory.mktemp("a"), rows), n)
    assert int(np.count_nonzero(t.labels)) == sum(b - a for a, b, _ in rows)


def test_annotation_write_read_round_trip(tmp_path):
    labels = np.array([0, 1, 1, 2, 2, 2, 0, 0, 7])
    p = tmp_path / "w.csv"
    write_annotations(p, labels)
    assert read_annotations(p, labels.size).labels.tolist() == labels.tolist()


def _comp(tmp_path, rows):
    p = tmp_path / "comp.csv"
    p.write_text(",".join(COMPETENCY_HEADER) + "\n" + "".join(",".join(r) + "\n" for r in rows), encoding="utf-8")
    return p


def test_competency_all_fives(tmp_path):
    recs = read_competency(_comp(tmp_path, [["s1"] + ["5"] * 23]))
    assert recs[0].video_observable_pct == 100.0


def test_competency_item4_missing_others_three(tmp_path):
    row = ["s1"] + ["3"] * 23
    row[4] = ""
    rec = read_competency(_comp(tmp_path, [row]))[0]
    assert rec.item(4) is None
    assert rec.video_observable_pct == 60.0


def test_competency_out_of_range(tmp_path):
    row = ["s1"] + ["3"] * 23
    row[18] = "7"
    with pytest.raises(ValidationError, match="item_18"):
        read_competency(_comp(tmp_path, [row]))


def test_competency_round_trip(tmp_path):
    row = ["s1"] + ["3"] * 23
    row[2] = ""
    row[5] = "4.25"
    recs = read_competency(_comp(tmp_path, [row]))
    out = tmp_path / "again.csv"
    write_competency(out, recs)
    assert read_competency(out) == recs
    assert out.read_text(encoding="utf-8") == _comp(tmp_path, [row]).read_text(encoding="utf-8")


def test_dataset_requires_matching_lengths():
    from clinact.core import FeatureSequence, Timeline

    fs = FeatureSequence("a", np.ones((3, 2)))
    with pytest.raises(ValidationError):
        Dataset([Session(fs, Timeline("a", [1, 1]))])
    with pytest.raises(ValidationError):
        Dataset([Session(fs, Timeline("a", [1, 1, 1])), Session(fs, Timeline("a", [1, 1, 1]))])


def test_save_and_load_dataset(tmp_path):
    from clinact.core import FeatureSequence, Timeline

    ds = Dataset([
        Session(FeatureSequence("a", np.eye(3, dtype=np.float32)), Timeline("a", [1, 1, 0])),
        Session(FeatureSequence("b", np.ones((2, 3))), Timeline("b", [0, 2])),
    ])
    paths = save_dataset(ds, tmp_path)
    back = load_dataset(paths["features"], paths["annotations"])
    assert back.session_ids == ["a", "b"]
    np.testing.assert_array_equal(back.sessions[0].features.frames, np.eye(3))
    assert back.sessions[1].truth.labels.tolist() == [0, 2]
