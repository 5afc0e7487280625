"""Loss-curve rendering.

Uses the object-oriented Figure API (no pyplot global state) and pins the
SVG hash salt and metadata so identical input gives byte-identical files.
"""

import csv
import io
import math

import matplotlib
from matplotlib.figure import Figure

from ._io import atomic_write_bytes
from .errors import MalformedCsv

LOSS_HEADER = ("epoch", "mean_loss")
CURVE_GID = "loss-curve"

_RC = {
    "svg.hashsalt": "mergecap",
    "svg.fonttype": "path",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def format_loss_csv(losses):
    lines = [",".join(LOSS_HEADER)]
    lines += [f"{epoch},{float(loss)!r}" for epoch, loss in enumerate(losses, start=1)]
    return "\n".join(lines) + "\n"


def read_loss_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != LOSS_HEADER:
        raise MalformedCsv(f"expected header {','.join(LOSS_HEADER)!r}")
    epochs, losses = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedCsv(f"line {line_no}: expected 2 fields, got {len(row)}")
        try:
            epoch, loss = int(row[0]), float(row[1])
        except ValueError as exc:
            raise MalformedCsv(f"line {line_no}: {exc}") from None
        if not math.isfinite(loss):
            raise MalformedCsv(f"line {line_no}: non-finite loss")
        epochs.append(epoch)
        losses.append(loss)
    if not epochs:
        raise MalformedCsv("no data rows")
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise MalformedCsv("epochs must be strictly increasing")
    return epochs, losses


def render_loss_svg(epochs, losses, title="Epoch vs Loss"):
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot()
        ax.plot(epochs, losses, marker="o", markersize=3, linewidth=1.5, color="C0", gid=CURVE_GID, label="training loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(title)
        if len(epochs) == 1:
            ax.set_xlim(epochs[0] - 1, epochs[0] + 1)
        ax.legend(loc="upper right")
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "mergecap"})
    return buf.getvalue()


def plot_loss_file(csv_path, svg_path):
    with open(csv_path, encoding="utf-8") as fh:
        epochs, losses = read_loss_csv(fh.read())
    atomic_write_bytes(svg_path, render_loss_svg(epochs, losses))
    return len(epochs)
