"""Deterministic CSV/JSON/SVG text and atomic artifact directories."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def fmt(x) -> str:
    """Stable numeric text: 15 significant digits, blanks for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.15g}"
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _clean(x):
    if isinstance(x, Mapping):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def json_text(obj) -> str:
    """JSON with sorted keys; non-finite floats become null."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def svg_plot(x, series: Mapping[str, Sequence[float]], xlabel: str, ylabel: str, title: str,
             hline: tuple[float, str] | None = None, logy: bool = False, logx: bool = False) -> str:
    """Static line plot as SVG text with the plotted data embedded as a comment."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "etmeasure", "svg.fonttype": "none",
                                "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, y in series.items():
            ax.plot(x, y, marker="o", ms=3, label=label)
        if hline is not None:
            ax.axhline(hline[0], color="k", ls="--", lw=1, label=hline[1])
        if logy:
            ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    svg = buf.getvalue()
    table = csv_text([xlabel] + list(series), zip(x, *series.values())).replace("--", "- -")
    comment = f"<!-- data\n{table}-->\n"
    head, sep, rest = svg.partition("<svg")
    return head + comment + sep + rest


def write_artifacts(out_dir: str | Path, files: Mapping[str, str]) -> list[Path]:
    """Write all files or none: stage in a sibling temp dir, then move into place."""
    out = Path(out_dir)
    parent = out.parent if out.parent != Path("") else Path(".")
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=parent))
    try:
        for name, text in files.items():
            (stage / name).write_text(text)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in files:
            dest = out / name
            os.replace(stage / name, dest)
            written.append(dest)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)
