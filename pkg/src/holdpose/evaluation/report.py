"""Results files, text tables in the two published layouts, and bar charts."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from .experiment import RESULT_COLUMNS, Summary, Variant, summarize
from .splits import Protocol

POSE_TABLE_COLUMNS = (("PoseGroup", "Pose Group"), ("RandomPoses", "Random Poses (5 test)"),
                      ("Uniform", "Uniform Random Split"))
POSE_TABLE_ROWS = (("T", "Tactile"), ("V", "Vision"), ("VT", "Vision + Tactile"))
OBJECT_TABLE_ROWS = (
    (Variant.LSTM_WC, "LSTM-WC (Ceiling)"),
    (Variant.MAJORITY, "Majority Classifier (Baseline)"),
    (Variant.LSTM_P, "LSTM-P (Baseline)"),
    (Variant.LINEAR, "Linear (Baseline)"),
    (Variant.LSTM, "LSTM (Ours)"),
    (Variant.LSTM_DRS, "LSTM+DRS (Ours)"),
)
OBJECT_TABLE_COLUMNS = (("V", "Vision"), ("T", "Tactile"), ("VT", "Both"))


def write_results(path, rows: Iterable[dict], append: bool = False) -> Path:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, extrasaction="ignore")
        if new:
            w.writeheader()
        for r in rows:
            w.writerow(r)
    return path


def read_results(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("seed", "split_seed", "n_test"):
            r[k] = int(r[k])
        for k in ("accuracy", "accuracy_on_Sneq"):
            r[k] = float(r[k])
    return rows


def _cell(s: Summary | None) -> str:
    if s is None:
        return "-"
    return f"{100 * s.mean:.2f} ± {100 * s.std:.2f}"


def _render(title: str, header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "-" * len(line(header))
    return "\n".join([title, sep, line(header), sep, *[line(r) for r in body], sep])


def pose_table(summaries: Sequence[Summary], variant: Variant = Variant.LSTM_DRS) -> str:
    """Unseen-pose layout: feature rows against split-protocol columns (test accuracy %)."""
    idx = {(s.protocol, s.modalities): s for s in summaries if s.variant == Variant(variant).value}
    present = [(tag, label) for tag, label in POSE_TABLE_ROWS if any(k[1] == tag for k in idx)]
    body = [[label] + [_cell(idx.get((p, tag))) for p, _ in POSE_TABLE_COLUMNS] for tag, label in present]
    header = ["Features"] + [label for _, label in POSE_TABLE_COLUMNS]
    return _render(f"Generalization to unseen poses ({Variant(variant).value}, test accuracy %)", header, body)


def object_table(summaries: Sequence[Summary]) -> str:
    """Unseen-object layout: classifier rows against modality columns."""
    idx = {(s.variant, s.modalities): s for s in summaries if s.protocol == Protocol.UNSEEN_OBJECTS.value}
    body = [[label] + [_cell(idx.get((v.value, tag))) for tag, _ in OBJECT_TABLE_COLUMNS]
            for v, label in OBJECT_TABLE_ROWS]
    header = ["Classifier"] + [label for _, label in OBJECT_TABLE_COLUMNS]
    return _render("Generalization to unseen objects (test accuracy %)", header, body)


def deltas(summaries: Sequence[Summary], a: Variant = Variant.LSTM_DRS, b: Variant = Variant.LSTM) -> list[str]:
    idx = {(s.protocol, s.variant, s.modalities): s for s in summaries}
    out = []
    for (p, v, m), s in sorted(idx.items()):
        other = idx.get((p, Variant(b).value, m))
        if v == Variant(a).value and other is not None:
            out.append(f"{p} {m}: {v} - {other.variant} = {100 * (s.mean - other.mean):+.2f} points "
                       f"(on S-neq: {100 * (s.mean_sneq - other.mean_sneq):+.2f})")
    return out


def summary_csv(summaries: Sequence[Summary]) -> str:
    lines = ["protocol,variant,modalities,mean_accuracy,std_accuracy,mean_accuracy_on_Sneq,n_runs"]
    for s in summaries:
        sneq = "" if math.isnan(s.mean_sneq) else f"{s.mean_sneq:.6f}"
        lines.append(f"{s.protocol},{s.variant},{s.modalities},{s.mean:.6f},{s.std:.6f},{sneq},{s.n_runs}")
    return "\n".join(lines) + "\n"


def full_report(rows: Sequence[dict]) -> str:
    summaries = summarize(rows)
    parts = []
    if any(s.protocol != Protocol.UNSEEN_OBJECTS.value for s in summaries):
        parts.append(pose_table(summaries))
    if any(s.protocol == Protocol.UNSEEN_OBJECTS.value for s in summaries):
        parts.append(object_table(summaries))
    d = deltas(summaries)
    if d:
        parts.append("Differences\n" + "\n".join(d))
    return "\n\n".join(parts) + "\n"


def bar_chart(summaries: Sequence[Summary], path, title: str = "") -> Path:
    """Grouped bars (one group per protocol/variant, one bar per modality set) as a vector file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = sorted({(s.protocol, s.variant) for s in summaries})
    tags = [t for t, _ in POSE_TABLE_ROWS if any(s.modalities == t for s in summaries)]
    idx = {(s.protocol, s.variant, s.modalities): s for s in summaries}
    width = 0.8 / max(len(tags), 1)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.4 * len(groups) + 1), 3.5))
    for j, tag in enumerate(tags):
        xs, ys, es = [], [], []
        for i, g in enumerate(groups):
            s = idx.get((*g, tag))
            if s is not None:
                xs.append(i + j * width)
                ys.append(100 * s.mean)
                es.append(100 * s.std)
        ax.bar(xs, ys, width, yerr=es, label=dict(POSE_TABLE_ROWS)[tag], capsize=2)
    ax.set_xticks([i + width * (len(tags) - 1) / 2 for i in range(len(groups))])
    ax.set_xticklabels([f"{p}\n{v}" for p, v in groups], fontsize=7)
    ax.set_ylabel("test accuracy (%)")
    ax.set_ylim(0, 100)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
