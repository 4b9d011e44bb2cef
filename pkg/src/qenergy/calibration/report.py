from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..errors import DomainError


@dataclass(frozen=True)
class FitReport:
    """Diagnostics attached to a fit.

    ``spread`` holds the standard deviation of quantities obtained by averaging;
    ``notes`` carries human-readable flags such as unidentified parameters.
    """

    params: Mapping[str, float]
    residual_norm: float
    n_measurements: int
    spread: Mapping[str, float] = field(default_factory=dict)
    converged: bool = True
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.residual_norm >= 0:
            raise DomainError("residual norm must be >= 0")

    def as_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "residual_norm": self.residual_norm,
            "n_measurements": self.n_measurements,
            "spread": dict(self.spread),
            "converged": self.converged,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitReport":
        return cls(
            params=dict(d["params"]),
            residual_norm=float(d["residual_norm"]),
            n_measurements=int(d["n_measurements"]),
            spread=dict(d.get("spread", {})),
            converged=bool(d.get("converged", True)),
            notes=tuple(d.get("notes", ())),
        )
