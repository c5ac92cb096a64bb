"""Per-run outcome record shared by every planner."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass
class RunRecord:
    algorithm: str
    recommended_action: int
    tau: int
    oracle_calls: int
    stop_reason: str  # "confidence", "budget", "single_action" or "error"
    simple_regret: float | None = None
    seeds: dict[str, int | None] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    diagnostics: Any = None

    def to_dict(self, with_diagnostics: bool = False) -> dict[str, Any]:
        out = {name: getattr(self, name) for name in self.__dataclass_fields__
               if name != "diagnostics"}
        out["seeds"] = dict(self.seeds)
        out["config"] = dict(self.config)
        if with_diagnostics and self.diagnostics is not None:
            d = self.diagnostics
            out["diagnostics"] = d.summary() if hasattr(d, "summary") else d
        return out

    def to_json(self, with_diagnostics: bool = False) -> str:
        return json.dumps(self.to_dict(with_diagnostics), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        return cls(**{k: data[k] for k in data if k in cls.__dataclass_fields__})
