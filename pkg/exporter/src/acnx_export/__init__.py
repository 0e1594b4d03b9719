"""PyTorch-checkpoint to .acnx converter.

The conversion is table-driven: every model has an explicit list of
(source name, canonical name, transform) rows in `tables`, the `writer`
emits the binary format directly, and `convert` glues the two together
while checking shapes against the live model definition.
"""

from .convert import Conversion, convert, export, load_source
from .errors import ExportError
from .tables import TABLES, MapRow
from .writer import write_acnx

__all__ = [
    "Conversion",
    "ExportError",
    "MapRow",
    "TABLES",
    "convert",
    "export",
    "load_source",
    "write_acnx",
]
