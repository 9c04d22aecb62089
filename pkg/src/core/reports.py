"""Deterministic writers for the report bundle (JSON, CSV, JSON lines, DOT)."""
import os
import json
import hashlib

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.12g"


def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (pd.Timestamp, np.datetime64)):
        return pd.Timestamp(value).strftime("%Y-%m-%d")
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps(payload):
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False, default=_to_builtin) + "\n"


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(payload))
    return path


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=_to_builtin) + "\n")
    return path


def write_csv(frame, path, index=False):
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def file_digest(path):
    """sha256 of a file, for input provenance."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def motif_dot(sub, report):
    """DOT text of one daily subgraph; edges used by a finding are drawn red.

    Every edge is labelled with its transaction count and its pen width grows
    with the count.
    """
    flagged = {(a, b) for f in report.findings for a, b, _ in f.edges}
    top = max((c for _, _, c in sub.graph.edges(data="tx_count")), default=1)
    lines = [f'digraph "{sub.day.strftime("%Y-%m-%d")}" {{', "  rankdir=LR;", "  node [shape=circle];"]
    for node in sorted(sub.graph.nodes()):
        lines.append(f'  "{node}";')
    for s, b, c in sorted(sub.graph.edges(data="tx_count")):
        color = "red" if (s, b) in flagged else "gray40"
        width = 1.0 + 4.0 * c / top
        lines.append(f'  "{s}" -> "{b}" [label="{c}", color={color}, penwidth={width:.2f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(path, sub, report):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(motif_dot(sub, report))
    return path
