import csv
import hashlib
import json
import subprocess
import sys

import pytest

from clinact.cli import main

SYNTH = ["--n-sessions", "4", "--n-classes", "5", "--dim", "8", "--frames-min", "300", "--frames-max", "400"]


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    assert main(["synth", "--out", str(out), "--seed", "7", *SYNTH]) == 0
    return out


def _data(cohort):
    return ["--features", str(cohort / "features"), "--annotations", str(cohort / "annotations")]


def test_synth_twice_gives_identical_trees(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--seed", "7", *SYNTH]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    assert (tmp_path / "a" / "manifest.json").exists()
    assert (tmp_path / "a" / "synth_config.json").exists()


def test_decode_missing_features_is_usage_error(capsys):
    assert main(["decode", "--support-features", "x", "--support-annotations", "y", "--out", "z"]) == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["bogus"], ["synth", "--out", "x", "--frobnicate"]])
def test_unknown_subcommand_or_flag(argv, capsys):
    assert main(argv) == 1


def test_io_error_exit_code(tmp_path, capsys):
    rc = main(["eval-cross", "--features", str(tmp_path / "nope"), "--annotations", str(tmp_path / "nope"),
               "--out", str(tmp_path / "r.csv")])
    assert rc == 2
    assert "I/O error" in capsys.readouterr().err


def test_validation_error_exit_code(tmp_path, cohort):
    rc = main(["eval-cross", *_data(cohort), "--shots", "0", "--out", str(tmp_path / "r.csv")])
    assert rc == 1


def test_eval_cross_one_row_per_session(tmp_path, cohort):
    rpt = tmp_path / "rpt.csv"
    argv = ["eval-cross", *_data(cohort), "--shots", "10", "--proto", "mean", "--tau", "5", "--seed", "1", "--out", str(rpt)]
    assert main(argv) == 0
    rows = list(csv.DictReader(rpt.open()))
    assert [r["session_id"] for r in rows] == ["S01", "S02", "S03", "S04"]
    assert (tmp_path / "rpt.details.csv").exists()
    manifest = json.loads((tmp_path / "rpt.manifest.json").read_text())
    assert manifest["subcommand"] == "eval-cross" and manifest["seed"] == 1
    assert "--out" not in manifest["argv"]
    assert [o["path"] for o in manifest["outputs"]] == ["rpt.csv", "rpt.details.csv"]


def test_manifest_replays_to_identical_outputs(tmp_path, cohort):
    first = tmp_path / "one" / "rpt.csv"
    assert main(["eval-within", *_data(cohort), "--shots", "3", "--replicates", "2", "--out", str(first)]) == 0
    manifest = json.loads((tmp_path / "one" / "rpt.manifest.json").read_text())
    second = tmp_path / "two" / "rpt.csv"
    assert main(manifest["argv"] + ["--out", str(second)]) == 0
    replayed = json.loads((tmp_path / "two" / "rpt.manifest.json").read_text())
    assert replayed["outputs"] == manifest["outputs"]
    assert hashlib.sha256(second.read_bytes()).hexdigest() == manifest["outputs"][0]["sha256"]


def test_every_subcommand_runs(tmp_path, cohort):
    comp = str(cohort / "competency.csv")
    rpt = tmp_path / "rpt.csv"
    assert main(["eval-cross", *_data(cohort), "--shots", "3", "--out", str(rpt)]) == 0
    assert main(["sequence", *_data(cohort), "--out", str(tmp_path / "seq")]) == 0
    assert main(["confounds", *_data(cohort), "--out", str(tmp_path / "conf.csv")]) == 0
    assert main(["correlate", "--reports", str(rpt), "--competency", comp, "--confounds", str(tmp_path / "conf.csv"),
                 "--out", str(tmp_path / "corr")]) == 0
    assert main(["per-item", "--reports", str(rpt), "--competency", comp, "--out", str(tmp_path / "items.csv")]) == 0
    assert main(["procmodel", *_data(cohort), "--competency", comp, "--min-seg-frames", "5",
                 "--out", str(tmp_path / "pm")]) == 0
    ann = sorted((cohort / "annotations").iterdir())
    assert main(["irr", "--rater1", str(ann[0]), "--rater2", str(ann[0]), "--features",
                 str(sorted((cohort / "features").iterdir())[0]), "--out", str(tmp_path / "irr.csv")]) == 0
    assert "cohens_kappa,1.0" in (tmp_path / "irr.csv").read_text()
    assert main(["decode", "--features", str(cohort / "features"), "--support-features", str(cohort / "features"),
                 "--support-annotations", str(cohort / "annotations"), "--shots", "2", "--out", str(tmp_path / "dec")]) == 0
    assert len(list((tmp_path / "dec").glob("*.csv"))) == 4
    for d in ("seq", "corr", "pm", "dec"):
        assert (tmp_path / d / "manifest.json").exists()
    for f in ("conf", "items", "irr"):
        assert (tmp_path / f"{f}.manifest.json").exists()
    assert (tmp_path / "pm" / "diff.dot").read_text().startswith('digraph "diff"')


def test_no_writes_outside_out(tmp_path, cohort):
    before = _tree(cohort)
    out = tmp_path / "only"
    assert main(["sequence", *_data(cohort), "--out", str(out)]) == 0
    assert _tree(cohort) == before
    assert {p.name for p in tmp_path.iterdir()} == {"only"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "clinact", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
