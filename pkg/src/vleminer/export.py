"""Text renderings: layered DOT graphs of transition models and rule tables.

Output is UTF-8 with LF line endings. Transition probabilities are printed
with six decimals; rule confidences and supports use the shortest exact
float repr so that parsing them back gives the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence
from dataclasses import dataclass

from .exceptions import EmptyModel
from .guha import Hypothesis
from .markov import TransitionModel

RULE_COLUMNS = ["antecedent", "succedent", "a", "b", "c", "d", "confidence", "support", "quantifier"]

# categorical node fills, cycled by state index
NODE_PALETTE = (
    "#f7f7f7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5",
    "#c7e9c0", "#a1d99b", "#74c476", "#fdd0a2", "#fdae6b", "#fd8d3c",
)


@dataclass(frozen=True)
class GraphStyle:
    min_edge_probability: float = 0.01
    color_low: str = "#ffffff"
    color_high: str = "#ff0000"
    name: str = "transitions"

    def __post_init__(self):
        if not 0 <= self.min_edge_probability <= 1:
            raise ValueError(f"min_edge_probability must be in [0, 1], got {self.min_edge_probability}")


def _rgb(hex_color: str) -> tuple[int, int, int]:
    h = hex_color.lstrip("#")
    return int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)


def edge_color(probability: float, style: GraphStyle = GraphStyle()) -> str:
    """Linear RGB blend from ``color_low`` (p = 0) to ``color_high`` (p = 1)."""
    p = min(max(float(probability), 0.0), 1.0)
    lo, hi = _rgb(style.color_low), _rgb(style.color_high)
    mixed = (round(a + (b - a) * p) for a, b in zip(lo, hi))
    return "#" + "".join(f"{c:02x}" for c in mixed)


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def node_id(week: int, state: int) -> str:
    return f"w{week}_s{state}"


def to_dot(model: TransitionModel, style: GraphStyle = GraphStyle()) -> str:
    """Layered digraph: one rank per week, edges only from week w to the next."""
    if not model.defined.any():
        raise EmptyModel("model has no defined transition rows")
    occupancy = model.occupancy()
    probs = model.probabilities
    labels = model.space.labels
    lines = [f"digraph {_quote(style.name)} {{",
             "  rankdir=TB;",
             '  node [shape=box, style="rounded,filled", fontname="Helvetica"];',
             '  edge [fontname="Helvetica", fontsize=9];']
    for t, week in enumerate(model.weeks):
        lines.append(f"  subgraph {_quote(f'week_{week}')} {{")
        lines.append("    rank=same;")
        for s in range(model.space.n_states):
            if occupancy[t, s] > 0:
                fill = NODE_PALETTE[s % len(NODE_PALETTE)]
                label = f"Week {week}\\n{labels[s]}\\nn={int(occupancy[t, s])}"
                lines.append(f'    {node_id(week, s)} [label="{label}", fillcolor="{fill}"];')
        lines.append("  }")
    for t, (w0, w1) in enumerate(zip(model.weeks, model.weeks[1:])):
        for i in range(model.space.n_states):
            for j in range(model.space.n_states):
                p = probs[t, i, j]
                if model.counts[t, i, j] == 0 or p < style.min_edge_probability:
                    continue
                lines.append(f'  {node_id(w0, i)} -> {node_id(w1, j)} '
                             f'[color="{edge_color(p, style)}", label="{p:.6f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _rule_row(h: Hypothesis) -> list:
    t = h.table
    text = h.antecedent_text or " & ".join(f"{lit.attribute}={lit.category}" for lit in h.antecedent)
    return [text, h.succedent.value, t.a, t.b, t.c, t.d, repr(h.confidence), repr(h.support), h.quantifier]


def rules_to_table(hypotheses: Sequence[Hypothesis]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RULE_COLUMNS)
    for h in hypotheses:
        w.writerow(_rule_row(h))
    return buf.getvalue()


def rules_to_json(hypotheses: Sequence[Hypothesis]) -> str:
    records = [dict(zip(RULE_COLUMNS, _rule_row(h))) for h in hypotheses]
    for rec in records:
        rec["confidence"] = float(rec["confidence"])
        rec["support"] = float(rec["support"])
    return json.dumps({"columns": RULE_COLUMNS, "hypotheses": records}, indent=2, sort_keys=True) + "\n"


def parse_rules_table(text: str) -> list[dict]:
    """Read :func:`rules_to_table` output back, numeric fields typed."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        for key in ("a", "b", "c", "d"):
            row[key] = int(row[key])
        row["confidence"] = float(row["confidence"])
        row["support"] = float(row["support"])
        out.append(row)
    return out
