"""Content-addressed cache of condensed matrices keyed by substructure digest."""

from __future__ import annotations

import os
from pathlib import Path

from .matrix_text import MatrixFormatError, read_condensed, write_condensed

__all__ = ["MatrixCache"]


class MatrixCache:
    """Directory of ``<sha256>.ktxt`` files.

    Writes go to a process-unique temporary name and are renamed into place,
    so concurrent writers of the same key never expose partial files.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def path(self, digest):
        return self.root / f"{digest}.ktxt"

    def load(self, digest):
        p = self.path(digest)
        if not p.exists():
            self.misses += 1
            return None
        try:
            K = read_condensed(p)
        except (OSError, MatrixFormatError):
            self.misses += 1
            return None
        if K.provenance != digest:
            self.misses += 1
            return None
        self.hits += 1
        return K

    def store(self, K):
        if not K.provenance:
            raise ValueError("only matrices with a provenance digest can be cached")
        return write_condensed(K, os.fspath(self.path(K.provenance)))
