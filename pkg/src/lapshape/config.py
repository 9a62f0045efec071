"""Run configuration and the provenance block attached to every output."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from . import __version__
from .errors import InvalidInputError

PROVENANCE_TAG = "lapshape-provenance"


@dataclass(frozen=True)
class RunConfig:
    """Pipeline parameters shared by the CLI and the indexing pipeline.

    ``radius_multiplier`` of ``None`` selects the adaptive radius; a number
    fixes the radius at that many mean spacings.
    """

    radius_multiplier: float | None = None
    eig_count: int = 300
    scale_count: int = 15
    nu: int = 10
    cull_fraction: float = 0.01
    seed: int = 0
    heat_kernel_cap: int = 20_000
    matching: str = "hungarian"

    def __post_init__(self):
        if self.radius_multiplier is not None and not self.radius_multiplier > 0:
            raise InvalidInputError("radius_multiplier must be positive")
        for name in ("eig_count", "scale_count", "nu", "heat_kernel_cap"):
            if int(getattr(self, name)) < 1:
                raise InvalidInputError(f"{name} must be a positive integer")
        if not 0 <= self.cull_fraction < 1:
            raise InvalidInputError("cull_fraction must be in [0, 1)")
        if self.matching not in ("hungarian", "sorted"):
            raise InvalidInputError("matching must be 'hungarian' or 'sorted'")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def merged(self, overrides: dict[str, Any]) -> "RunConfig":
        """Copy with every non-``None`` override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def descriptor_params(self) -> dict[str, Any]:
        """The subset that determines a descriptor (query-time switches excluded)."""
        return {
            "radius_multiplier": self.radius_multiplier,
            "eig_count": int(self.eig_count),
            "scale_count": int(self.scale_count),
            "nu": int(self.nu),
            "cull_fraction": float(self.cull_fraction),
            "seed": int(self.seed),
        }


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(data)


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, no whitespace, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(params: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(params).encode("utf-8")).hexdigest()


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def provenance_block(command: str, argv: list[str], config: RunConfig | None = None,
                     inputs: dict[str, str] | None = None, extra: dict[str, Any] | None = None) -> dict[str, Any]:
    """Everything needed to rerun a CLI invocation; no clocks or host details."""
    block = {
        "tool": "lapshape",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": None if config is None else config.to_dict(),
        "inputs": dict(sorted((inputs or {}).items())),
    }
    if extra:
        block["extra"] = _clean(extra)
    return block


def provenance_lines(block: dict[str, Any], prefix: str = "# ") -> list[str]:
    return [f"{prefix}{PROVENANCE_TAG} {canonical_json(block)}"]


def parse_provenance(text: str) -> dict[str, Any]:
    """Find the first provenance line in ``text`` (a file body or captured stderr)."""
    for line in text.splitlines():
        pos = line.find(PROVENANCE_TAG + " ")
        if pos >= 0:
            return json.loads(line[pos + len(PROVENANCE_TAG) + 1:])
    raise InvalidInputError("no provenance block found")
