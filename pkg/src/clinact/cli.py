"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
Every run writes a ``*.manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .core import ClinactError, MacroMapping, ValidationError, load_taxonomy_csv
from .estimator import PrototypeHMMSegmenter
from .fewshot import sample_support
from .harness import (
    EvalConfig,
    compute_confounds,
    competency_analysis,
    cross_sample_eval,
    per_item_analysis,
    read_confounds,
    within_sample_eval,
    write_confounds,
    write_details,
    write_rows,
    CrossSampleResult,
)
from .ingest import (
    ANNOTATION_SUFFIX,
    FEATURE_SUFFIX,
    load_dataset,
    read_annotations,
    read_competency,
    read_features,
    save_dataset,
    write_annotations,
)
from .metrics import cohens_kappa, label_set_jaccard, miou, per_class_iou, read_reports, write_reports
from .procmodel import build_model, diff_models, export_dot, to_macro, write_edges
from .sequence import run_length_encode, sequence_features, transitions, write_segments
from .stats import median_split
from .synth import SynthConfig, generate_cohort

log = logging.getLogger("clinact")


class UsageError(ClinactError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=5.0, help="emission temperature")
    p.add_argument("--alpha", type=float, default=1.0, help="Laplace pseudo-count")
    p.add_argument("--shots", type=int, default=10, help="support frames per class per session")
    p.add_argument("--proto", choices=("mean", "clustered"), default="mean")
    p.add_argument("--min-seg-frames", type=int, default=25)
    p.add_argument("--f1-thresholds", type=_floats, default=(0.1, 0.25, 0.5))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--include-background", action="store_true")
    p.add_argument("--replicates", type=int, default=None)


def _eval_config(a) -> EvalConfig:
    return EvalConfig(
        shots=a.shots,
        strategy=a.proto,
        tau=a.tau,
        alpha=a.alpha,
        min_frames=a.min_seg_frames,
        f1_thresholds=a.f1_thresholds,
        include_background=a.include_background,
        seed=a.seed,
        replicates=a.replicates,
    )


def _digest(path: Path) -> dict:
    path = Path(path)
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode())
            h.update(hashlib.sha256(p.read_bytes()).digest())
        return {"path": str(path), "sha256": h.hexdigest(), "kind": "dir"}
    return {"path": str(path), "sha256": hashlib.sha256(path.read_bytes()).hexdigest(), "kind": "file"}


def _strip_out(argv: Sequence[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        out.append(tok)
    return out


def write_manifest(path: Path, sub: str, args, argv: Sequence[str], inputs: Sequence, outputs: Sequence[Path], base: Path) -> None:
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())
              if k not in ("out", "func", "command")}
    manifest = {
        "subcommand": sub,
        "tool_version": __version__,
        "seed": getattr(args, "seed", None),
        "config": config,
        "argv": _strip_out(argv),
        "inputs": [_digest(p) for p in inputs if p is not None],
        "outputs": [
            {"path": Path(o).relative_to(base).as_posix() if Path(o).is_relative_to(base) else Path(o).name,
             "sha256": hashlib.sha256(Path(o).read_bytes()).hexdigest()}
            for o in outputs
        ],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _file_outputs(out: str, *suffixes: str) -> tuple[Path, ...]:
    """``rpt.csv`` -> (rpt.csv, rpt.<suffix>...) in the same directory."""
    p = Path(out)
    p.parent.mkdir(parents=True, exist_ok=True)
    stem = p.name[:-len(p.suffix)] if p.suffix else p.name
    return (p,) + tuple(p.with_name(f"{stem}.{s}") for s in suffixes)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


# ---------------------------------------------------------------- subcommands


def cmd_synth(a, argv):
    cfg = SynthConfig(
        n_sessions=a.n_sessions,
        n_classes=a.n_classes,
        feat_dim=a.dim,
        frames_min=a.frames_min,
        frames_max=a.frames_max,
        sigma0=a.sigma0,
        sigma1=a.sigma1,
        eps0=a.eps0,
        eps1=a.eps1,
        mean_segment_len=a.mean_seg_len,
        fps=a.fps,
        seed=a.seed,
    )
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_cohort(cfg)
    paths = save_dataset(ds, out)
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    outputs = sorted(q for q in out.rglob("*") if q.is_file() and q.name != "manifest.json")
    write_manifest(out / "manifest.json", "synth", a, argv, [], outputs, out)
    print(f"wrote {len(ds)} sessions to {out} (features/, annotations/, {paths['competency'].name})")


def _dataset(a, competency: bool = False):
    return load_dataset(a.features, a.annotations, a.competency if competency else None, a.fps)


def cmd_decode(a, argv):
    support = load_dataset(a.support_features, a.support_annotations, fps=a.fps)
    cfg = _eval_config(a)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed]))
    sups = [sample_support(s.truth, s.features, cfg.shots, rng) for s in support]
    est = PrototypeHMMSegmenter(**cfg.estimator_params()).fit_supports(sups, [s.truth for s in support], rng)
    fpath = Path(a.features)
    files = sorted(p for p in fpath.iterdir() if p.suffix in (FEATURE_SUFFIX, ".csv")) if fpath.is_dir() else [fpath]
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for f in files:
        feats = read_features(f, f.stem, a.fps)
        pred = est.predict(feats)
        dest = out / f"{f.stem}{ANNOTATION_SUFFIX}"
        write_annotations(dest, pred)
        outputs.append(dest)
        print(f"{f.stem}: {feats.n_frames} frames, {len(run_length_encode(pred, 1))} segments")
    write_manifest(out / "manifest.json", "decode", a, argv, [fpath, a.support_features, a.support_annotations], outputs, out)


def _write_eval(a, argv, result: CrossSampleResult, cfg: EvalConfig, sub: str):
    rpt, details, man = _file_outputs(a.out, "details.csv", "manifest.json")
    write_reports(rpt, result.reports)
    write_details(details, result, sorted(set(cfg.f1_thresholds) | {cfg.f1_threshold}))
    write_manifest(man, sub, a, argv, [a.features, a.annotations], [rpt, details], rpt.parent)
    s = result.summary()
    print(f"{sub}: {len(result.reports)} sessions, shots={cfg.shots}, proto={cfg.strategy}")
    print("  " + "  ".join(f"{k.upper()} {_fmt(m)} +- {_fmt(sd)}" for k, (m, sd) in s.items()))


def cmd_eval_within(a, argv):
    ds = _dataset(a)
    cfg = _eval_config(a)
    res = CrossSampleResult([within_sample_eval(s, cfg, i) for i, s in enumerate(ds)])
    _write_eval(a, argv, res, cfg, "eval-within")


def cmd_eval_cross(a, argv):
    ds = _dataset(a)
    cfg = _eval_config(a)
    _write_eval(a, argv, cross_sample_eval(ds, cfg), cfg, "eval-cross")


def cmd_sequence(a, argv):
    ds = _dataset(a)
    out = Path(a.out)
    (out / "segments").mkdir(parents=True, exist_ok=True)
    outputs = []
    trans_path, feat_path = out / "transitions.csv", out / "sequence_features.csv"
    with open(trans_path, "w", newline="", encoding="utf-8") as tf, open(feat_path, "w", newline="", encoding="utf-8") as ff:
        tw, fw = csv.writer(tf, lineterminator="\n"), csv.writer(ff, lineterminator="\n")
        tw.writerow(["session_id", "from", "to", "count"])
        fw.writerow(["session_id", "segments", "transition_count", "unique_action_count", "screen_time_ratio"])
        for s in ds:
            segs = run_length_encode(s.truth, a.min_seg_frames)
            seg_path = out / "segments" / f"{s.session_id}.csv"
            write_segments(seg_path, segs)
            outputs.append(seg_path)
            tc = transitions(segs)
            for i, j in zip(*np.nonzero(tc.counts)):
                tw.writerow([s.session_id, int(i) + 1, int(j) + 1, int(tc.counts[i, j])])
            sf = sequence_features(segs, s.truth)
            fw.writerow([s.session_id, len(segs), sf.transition_count, sf.unique_action_count, repr(sf.screen_time_ratio)])
    outputs += [trans_path, feat_path]
    write_manifest(out / "manifest.json", "sequence", a, argv, [a.features, a.annotations], outputs, out)
    print(f"sequence: {len(ds)} sessions -> {out}")


def cmd_correlate(a, argv):
    reports = read_reports(a.reports)
    records = {r.session_id: r for r in read_competency(a.competency)}
    confounds = None
    inputs = [a.reports, a.competency]
    if a.confounds:
        confounds = read_confounds(a.confounds)
        inputs.append(a.confounds)
    elif a.features and a.annotations:
        confounds = compute_confounds(_dataset(a))
        inputs += [a.features, a.annotations]
    rows, crows = competency_analysis(reports, records, confounds)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    assoc = out / "association.csv"
    write_rows(assoc, rows)
    outputs = [assoc]
    if crows:
        write_rows(out / "confound_association.csv", crows)
        outputs.append(out / "confound_association.csv")
    paired = [r for r in reports if r.session_id in records]
    groups = median_split(
        [records[r.session_id].video_observable_pct for r in paired],
        {"MOF": [r.mof for r in paired], "mIoU": [r.miou for r in paired], "F1": [r.f1 for r in paired]},
        [r.session_id for r in paired],
    )
    gpath = out / "groups.csv"
    with open(gpath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "n", "split_value", "metric", "mean", "std"])
        for name, n, table in (("higher", groups.n_higher, groups.higher), ("lower", groups.n_lower, groups.lower)):
            for metric, (m, sd) in table.items():
                w.writerow([name, n, repr(groups.split_value), metric, repr(m), repr(sd)])
    outputs.append(gpath)
    write_manifest(out / "manifest.json", "correlate", a, argv, inputs, outputs, out)
    for r in rows:
        tail = f"rho={r.rho:+.3f} p={r.p:.3f} r={r.pearson_r:+.3f} n={r.n}" if r.status == "ok" else r.status
        print(f"{r.feature:<26} {tail}")


def cmd_per_item(a, argv):
    rows = per_item_analysis(read_reports(a.reports), read_competency(a.competency))
    path, man = _file_outputs(a.out, "manifest.json")
    write_rows(path, rows)
    write_manifest(man, "per-item", a, argv, [a.reports, a.competency], [path], path.parent)
    for r in rows[:5]:
        print(f"{r.feature:<50} rho={r.rho:+.3f} p={r.p:.3f} n={r.n}" if r.status == "ok" else f"{r.feature:<50} {r.status}")


def cmd_confounds(a, argv):
    cs = compute_confounds(_dataset(a))
    path, man = _file_outputs(a.out, "manifest.json")
    write_confounds(path, cs)
    write_manifest(man, "confounds", a, argv, [a.features, a.annotations], [path], path.parent)
    print(f"confounds: {len(cs.session_ids)} sessions, mean coverage {cs.coverage.mean():.3f}")


def cmd_procmodel(a, argv):
    mapping = MacroMapping()
    inputs = [a.features, a.annotations, a.competency]
    if a.taxonomy:
        _, mapping = load_taxonomy_csv(a.taxonomy)
        inputs.append(a.taxonomy)
    ds = _dataset(a, competency=True)
    sessions = [s for s in ds if s.competency is not None]
    if len(sessions) < 2:
        raise ValidationError("process-model comparison needs at least two sessions with competency records")
    groups = median_split([s.competency.video_observable_pct for s in sessions], {}, [s.session_id for s in sessions])
    macro = {s.session_id: to_macro(run_length_encode(s.truth, a.min_seg_frames), mapping) for s in sessions}
    micro = not a.no_micro_self_loops
    hi = build_model([macro[i] for i in groups.higher_ids], micro)
    outputs = []
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edges(out / "higher_edges.csv", hi)
    (out / "higher.dot").write_text(export_dot(hi, "higher", a.threshold), encoding="utf-8")
    outputs += [out / "higher_edges.csv", out / "higher.dot"]
    if groups.lower_ids:
        lo = build_model([macro[i] for i in groups.lower_ids], micro)
        write_edges(out / "lower_edges.csv", lo)
        (out / "lower.dot").write_text(export_dot(lo, "lower", a.threshold), encoding="utf-8")
        diff = diff_models(hi, lo, a.threshold, ("higher", "lower"))
        (out / "diff.dot").write_text(export_dot(diff, "diff"), encoding="utf-8")
        outputs += [out / "lower_edges.csv", out / "lower.dot", out / "diff.dot"]
        print(f"procmodel: split {groups.split_value:.1f}%, higher n={groups.n_higher}, lower n={groups.n_lower}, "
              f"{len(diff.shared)} shared / {len(diff.unique)} unique edges")
    else:
        print(f"procmodel: all {groups.n_higher} sessions at or above the median; no lower-group model")
    write_manifest(out / "manifest.json", "procmodel", a, argv, inputs, outputs, out)


def cmd_irr(a, argv):
    if a.num_frames is not None:
        n = a.num_frames
    elif a.features:
        n = read_features(a.features).n_frames
    else:
        raise ValidationError("irr needs --num-frames or --features to size the timelines")
    t1 = read_annotations(a.rater1, n)
    t2 = read_annotations(a.rater2, n)
    kappa = cohens_kappa(t1, t2, a.hz, a.fps)
    ious = per_class_iou(t2, t1)
    mean_iou = miou(t2, t1) if ious else float("nan")
    jac = label_set_jaccard(t1, t2)
    path, man = _file_outputs(a.out, "manifest.json")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["cohens_kappa", repr(kappa)])
        w.writerow(["mean_class_iou", repr(mean_iou)])
        w.writerow(["label_set_jaccard", repr(jac)])
        for c, v in sorted(ious.items()):
            w.writerow([f"iou_class_{c}", repr(v)])
    write_manifest(man, "irr", a, argv, [a.rater1, a.rater2], [path], path.parent)
    print(f"kappa={kappa:.3f} mean IoU={mean_iou:.3f} jaccard={jac:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clinact", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def data_args(p, required=True):
        p.add_argument("--features", required=required, help="directory of feature files")
        p.add_argument("--annotations", required=required, help="directory of annotation CSVs")

    p = sub.add_parser("decode", help="label query sessions from support sessions")
    _shared(p)
    p.add_argument("--features", required=True, help="query feature file or directory")
    p.add_argument("--support-features", required=True)
    p.add_argument("--support-annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    for name, func in (("eval-within", cmd_eval_within), ("eval-cross", cmd_eval_cross)):
        p = sub.add_parser(name, help=f"{name.split('-')[1]}-sample evaluation")
        _shared(p)
        data_args(p)
        p.add_argument("--out", required=True, help="report CSV path")
        p.set_defaults(func=func)

    p = sub.add_parser("sequence", help="segments, transitions and sequence features")
    _shared(p)
    data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sequence)

    p = sub.add_parser("correlate", help="metric-competency association tables")
    _shared(p)
    data_args(p, required=False)
    p.add_argument("--reports", required=True)
    p.add_argument("--competency", required=True)
    p.add_argument("--confounds", help="confound CSV from the confounds subcommand")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("per-item", help="MOF association per rubric item")
    _shared(p)
    p.add_argument("--reports", required=True)
    p.add_argument("--competency", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_per_item)

    p = sub.add_parser("confounds", help="annotation confound statistics")
    _shared(p)
    data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_confounds)

    p = sub.add_parser("procmodel", help="macro process models for higher/lower competency groups")
    _shared(p)
    data_args(p)
    p.add_argument("--competency", required=True)
    p.add_argument("--threshold", type=float, default=0.05, help="edge display threshold")
    p.add_argument("--taxonomy", help="id,name,macro override CSV")
    p.add_argument("--no-micro-self-loops", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_procmodel)

    p = sub.add_parser("irr", help="inter-rater agreement between two annotation files")
    _shared(p)
    p.add_argument("--rater1", required=True)
    p.add_argument("--rater2", required=True)
    p.add_argument("--num-frames", type=int)
    p.add_argument("--features", help="feature file used to size the timelines")
    p.add_argument("--hz", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_irr)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sessions", type=int, default=22)
    p.add_argument("--n-classes", type=int, default=16)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--frames-min", type=int, default=2500)
    p.add_argument("--frames-max", type=int, default=3500)
    p.add_argument("--sigma0", type=float, default=0.3)
    p.add_argument("--sigma1", type=float, default=0.6)
    p.add_argument("--eps0", type=float, default=0.05)
    p.add_argument("--eps1", type=float, default=0.4)
    p.add_argument("--mean-seg-len", type=float, default=60.0)
    p.add_argument("--fps", type=float, default=25.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, argv)
    except (OSError, UnicodeDecodeError) as exc:
        print(f"clinact {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    except ClinactError as exc:
        print(f"clinact {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
