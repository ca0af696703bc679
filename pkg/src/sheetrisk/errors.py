from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ScanError:
    """A record- or root-level problem that is reported, not raised.

    ``code`` is one of the stable kebab-case codes (``access-denied``,
    ``corrupt-archive``, ``archive-budget-exceeded``, ...).
    """

    code: str
    path: str
    container_chain: tuple[str, ...] = ()
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "path": self.path,
            "container_chain": list(self.container_chain),
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanError":
        return cls(
            code=data["code"],
            path=data["path"],
            container_chain=tuple(data.get("container_chain", ())),
            message=data.get("message", ""),
        )


class SheetRiskError(Exception):
    """Top-level failure carrying a stable error code and detail messages."""

    def __init__(self, code: str, messages: str | list[str] = ()):
        if isinstance(messages, str):
            messages = [messages]
        self.code = code
        self.messages = list(messages)
        super().__init__(f"{code}: " + "; ".join(self.messages) if self.messages else code)

    def to_dict(self) -> dict:
        return {"error": self.code, "messages": self.messages}


class WorkbookError(SheetRiskError):
    """``corrupt-workbook`` or ``unsupported-format`` from the workbook parser."""


class ConfigError(SheetRiskError):
    """``config-invalid`` or ``matrix-not-monotone``."""


class CatalogError(SheetRiskError):
    """``catalog-write-failed`` or ``catalog-corrupt``."""


class DiscoveryError(SheetRiskError):
    """``no-roots-scanned``."""


class ReportError(SheetRiskError):
    """``report-write-failed``."""

