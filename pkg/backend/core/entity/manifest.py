# core/entity/manifest.py
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from core.exceptions import ContractViolation

MANIFEST_PREFIX = "# manifest: "


@dataclass(frozen=True)
class RunManifest:
    """What produced an artifact. Carries no timestamps, so reruns serialize identically."""

    subcommand: str
    config: Any
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: Optional[int] = None
    artifact_version: str = "1.0"

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))

    def comment_line(self) -> str:
        return MANIFEST_PREFIX + self.to_json()

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        missing = {"subcommand", "config"} - set(data)
        if missing:
            raise ContractViolation(f"Manifest is missing {sorted(missing)}.")
        return cls(
            subcommand=data["subcommand"],
            config=data["config"],
            inputs=dict(data.get("inputs") or {}),
            outputs=dict(data.get("outputs") or {}),
            seed=data.get("seed"),
            artifact_version=str(data.get("artifact_version", "1.0")),
        )
