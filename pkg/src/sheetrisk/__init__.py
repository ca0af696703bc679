"""Spreadsheet discovery, inventory and risk assessment."""

from sheetrisk.errors import ScanError, SheetRiskError

__version__ = "0.1.0"

__all__ = ["ScanError", "SheetRiskError", "__version__"]
