"""Directly-follows process models over macro action categories."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .core import BACKGROUND, MacroMapping, Segment, ValidationError


class MacroSegment(NamedTuple):
    macro: str
    start: int
    duration: int
    parts: int = 1  # micro segments merged into this one


def to_macro(segs: Sequence[Segment], mapping: Optional[MacroMapping] = None) -> list[MacroSegment]:
    """Relabel segments by macro category and merge equal neighbours.

    Segments whose label the mapping excludes are dropped before merging.
    """
    mapping = mapping or MacroMapping()
    out: list[MacroSegment] = []
    for s in segs:
        if s.label == BACKGROUND:
            raise ValidationError("background segments must be stripped before macro aggregation")
        m = mapping.lookup(s.label)
        if m is None:
            continue
        if out and out[-1].macro == m:
            prev = out[-1]
            out[-1] = MacroSegment(m, prev.start, prev.duration + s.duration, prev.parts + 1)
        else:
            out.append(MacroSegment(m, s.start, s.duration, 1))
    return out


@dataclass
class ProcessModel:
    nodes: dict[str, int] = field(default_factory=dict)
    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def edges(self) -> dict[tuple[str, str], float]:
        """``P(to | from)`` normalized over every recorded successor of ``from``."""
        out_tot: dict[str, int] = {}
        for (a, _), c in self.counts.items():
            out_tot[a] = out_tot.get(a, 0) + c
        return {e: c / out_tot[e[0]] for e, c in self.counts.items()}

    def probability(self, a: str, b: str) -> float:
        return self.edges.get((a, b), 0.0)


def build_model(sessions: Iterable[Sequence[MacroSegment]], count_self_loops_from_micro: bool = True) -> ProcessModel:
    """Pool consecutive-pair counts across sessions.

    With ``count_self_loops_from_micro`` a macro segment built from ``m``
    micro segments adds ``m - 1`` self-loop counts, and node counts are in
    micro segments.
    """
    model = ProcessModel()
    for segs in sessions:
        for s in segs:
            weight = s.parts if count_self_loops_from_micro else 1
            model.nodes[s.macro] = model.nodes.get(s.macro, 0) + weight
            if count_self_loops_from_micro and s.parts > 1:
                e = (s.macro, s.macro)
                model.counts[e] = model.counts.get(e, 0) + s.parts - 1
        for a, b in zip(segs, segs[1:]):
            e = (a.macro, b.macro)
            model.counts[e] = model.counts.get(e, 0) + 1
    if not model.counts:
        raise ValidationError("no transitions to build a process model from")
    return model


class DiffEdge(NamedTuple):
    source: str
    target: str
    p1: float
    p2: float
    owner: str  # "both", "m1" or "m2"


@dataclass
class ModelDiff:
    nodes: list[str]
    shared: list[DiffEdge]
    unique: list[DiffEdge]
    threshold: float
    names: tuple[str, str] = ("m1", "m2")


def diff_models(m1: ProcessModel, m2: ProcessModel, display_threshold: float = 0.05,
                names: tuple[str, str] = ("m1", "m2")) -> ModelDiff:
    e1, e2 = m1.edges, m2.edges
    shown1 = {e for e, p in e1.items() if p >= display_threshold}
    shown2 = {e for e, p in e2.items() if p >= display_threshold}
    shared, unique = [], []
    for e in sorted(shown1 | shown2):
        p1, p2 = e1.get(e, 0.0), e2.get(e, 0.0)
        if e in shown1 and e in shown2:
            shared.append(DiffEdge(e[0], e[1], p1, p2, "both"))
        else:
            unique.append(DiffEdge(e[0], e[1], p1, p2, names[0] if e in shown1 else names[1]))
    nodes = sorted(set(m1.nodes) | set(m2.nodes))
    return ModelDiff(nodes, shared, unique, display_threshold, tuple(names))


def _pct(p: float) -> str:
    return f"{round(100 * p):d}%"


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(obj, name: str = "process", display_threshold: float = 0.0) -> str:
    """Graphviz DOT text for a :class:`ProcessModel` or :class:`ModelDiff`."""
    lines = [f"digraph {_q(name)} {{", "  rankdir=LR;", "  node [shape=ellipse];"]
    if isinstance(obj, ProcessModel):
        for n in sorted(obj.nodes):
            lines.append(f"  {_q(n)} [label={_q(f'{n} ({obj.nodes[n]})')}];")
        for (a, b), p in sorted(obj.edges.items()):
            if p >= display_threshold:
                lines.append(f"  {_q(a)} -> {_q(b)} [label={_q(_pct(p))}];")
    elif isinstance(obj, ModelDiff):
        for n in obj.nodes:
            lines.append(f"  {_q(n)};")
        edges = sorted(obj.shared + obj.unique, key=lambda e: (e.source, e.target))
        for e in edges:
            if e.owner == "both":
                label = f"{obj.names[0]} {_pct(e.p1)} / {obj.names[1]} {_pct(e.p2)}"
                style = 'color="green"'
            else:
                label = f"{e.owner} {_pct(e.p1 if e.owner == obj.names[0] else e.p2)}"
                style = 'color="red"'
            lines.append(f"  {_q(e.source)} -> {_q(e.target)} [label={_q(label)}, {style}];")
    else:
        raise ValidationError(f"cannot export {type(obj).__name__} as DOT")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_edges(path, model: ProcessModel) -> None:
    probs = model.edges
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "count", "probability"])
        for (a, b) in sorted(model.counts):
            w.writerow([a, b, model.counts[(a, b)], repr(probs[(a, b)])])
