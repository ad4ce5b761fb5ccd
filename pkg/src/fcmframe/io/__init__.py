"""File formats: job files, matrix text, cache, VTK and manifests."""

from .matrix_text import (
    MatrixFormatError,
    dumps_condensed,
    loads_condensed,
    read_condensed,
    write_condensed,
)
from .cache import MatrixCache

__all__ = ["MatrixFormatError", "dumps_condensed", "loads_condensed", "read_condensed",
           "write_condensed", "MatrixCache"]
