"""CSV/JSON readers and writers plus the run manifest."""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def manifest(cmd: str, params: dict, seed=None) -> dict:
    return {
        "cmd": cmd,
        "params": params,
        "version": __version__,
        "seed": seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def write_json(path, data) -> None:
    text = json.dumps(data, indent=2, sort_keys=False) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text, encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, header, rows, man: dict | None = None) -> None:
    """Write rows with full round-trip precision; ``man`` goes to a sidecar file.

    ``path`` of ``None`` or ``"-"`` writes to stdout and drops the manifest.
    """
    if path is None or str(path) == "-":
        _write_rows(sys.stdout, header, rows)
        return
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, header, rows)
    if man is not None:
        write_json(manifest_path(path), man)


def _write_rows(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array; empty cells become NaN."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) if v != "" else math.nan for v in row] for row in r if row]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_manifest(path) -> dict | None:
    p = manifest_path(path)
    return read_json(p) if p.exists() else None


def histogram_rows(hist_or_edges, mass):
    """Rows ``(x1_bin, x2_bin, mass)`` with bin centres, x1 varying slowest."""
    e1, e2 = hist_or_edges
    c1 = 0.5 * (e1[1:] + e1[:-1])
    c2 = 0.5 * (e2[1:] + e2[:-1])
    for i, a in enumerate(c1):
        for j, b in enumerate(c2):
            yield (a, b, mass[i, j])


HISTOGRAM_HEADER = ["x1_bin", "x2_bin", "mass"]
SURVIVAL_HEADER = ["t", "survival"]
GRID_HEADER = ["x1", "x2", "t", "xi"]
