"""Plain-text serialization of condensed stiffness matrices.

Layout: ``#``-prefixed ``key: value`` header lines, then one matrix row per
line. Floats are written with ``repr`` (shortest round-trip form), so reading a
file back reproduces every entry bit for bit.
"""

from __future__ import annotations

import io
import os

import numpy as np

from ..condense import CondensedStiffness

__all__ = ["dumps_condensed", "loads_condensed", "write_condensed", "read_condensed",
           "MatrixFormatError"]

MAGIC = "# fcmframe condensed-stiffness v1"
UNITS = "N, mm, rad; K entries in N/mm (u-u), N (u-theta), N*mm (theta-theta)"


class MatrixFormatError(ValueError):
    """Malformed matrix file; the message names the line number."""


def _fmt(x):
    return repr(float(x))


def dumps_condensed(K: CondensedStiffness) -> str:
    out = io.StringIO()
    out.write(MAGIC + "\n")
    out.write(f"# k: {K.k}\n")
    out.write("# dof_order: " + " ".join(f"{n}:{d}" for n, d in K.dof_order) + "\n")
    out.write(f"# provenance: {K.provenance or '-'}\n")
    out.write(f"# units: {UNITS}\n")
    out.write(f"# asymmetry: {_fmt(K.asymmetry)}\n")
    if K.centroids is not None:
        cents = "; ".join(" ".join(_fmt(v) for v in c) for c in np.asarray(K.centroids))
        out.write(f"# centroids_mm: {cents}\n")
    for row in K.matrix:
        out.write(" ".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def loads_condensed(text: str) -> CondensedStiffness:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise MatrixFormatError("line 1: missing condensed-stiffness header")
    header, rows = {}, []
    for no, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if not sep:
                raise MatrixFormatError(f"line {no}: header line without ':'")
            header[key.strip()] = value.strip()
        elif line.strip():
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as exc:
                raise MatrixFormatError(f"line {no}: {exc}") from None
    for key in ("k", "dof_order"):
        if key not in header:
            raise MatrixFormatError(f"missing header field {key!r}")
    k = int(header["k"])
    if len(rows) != k or any(len(r) != k for r in rows):
        raise MatrixFormatError(f"expected a {k}x{k} matrix")
    order = [tuple(item.rsplit(":", 1)) for item in header["dof_order"].split()]
    cents = None
    if "centroids_mm" in header:
        cents = np.array([[float(v) for v in c.split()] for c in header["centroids_mm"].split(";")])
    prov = header.get("provenance", "-")
    return CondensedStiffness(np.array(rows), order, "" if prov == "-" else prov,
                              float(header.get("asymmetry", 0.0)), cents)


def write_condensed(K, path):
    """Write atomically (temporary file then rename)."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_condensed(K))
    os.replace(tmp, path)
    return path


def read_condensed(path):
    with open(path, encoding="utf-8") as fh:
        return loads_condensed(fh.read())
