"""SVG line charts from the CSV files written by the harness."""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InvalidInputError  # noqa: E402


def _number(text):
    try:
        return float(text)
    except ValueError:
        return math.nan


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: no data rows")
    header, body = rows[0], rows[1:]
    return header, {name: [_number(r[i]) if i < len(r) else math.nan for r in body]
                    for i, name in enumerate(header)}


def plot_csv(path, out, x=None, ys=None):
    """Plot ``ys`` against ``x``; defaults pick the first column and every numeric one."""
    header, cols = read_columns(path)
    x = x or header[0]
    if x not in cols:
        raise InvalidInputError(f"no column {x!r} in {path}")
    if ys is None:
        ys = [h for h in header if h != x and any(not math.isnan(v) for v in cols[h])]
    missing = [y for y in ys if y not in cols]
    if missing:
        raise InvalidInputError(f"no column(s) {missing} in {path}")
    plt.rcParams["svg.hashsalt"] = "nighthawk"
    fig, ax = plt.subplots(figsize=(8, 4))
    for y in ys:
        ax.plot(cols[x], cols[y], label=y, linewidth=1.2)
    ax.set_xlabel(x)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
