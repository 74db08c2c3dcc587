"""Sample-by-sample records of a deformation path and its condition margins."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


@dataclass
class TraceSample:
    stage: str
    param: float
    margin: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"stage": self.stage, "s": _num(self.param), "min_margin": _num(self.margin)}
        out.update({k: _num(v) for k, v in self.extra.items()})
        return out


def _num(x):
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return float(x)
    return x


@dataclass
class DeformationTrace:
    """Ordered samples of a path; ``flags`` hold pass/fail facts about the whole path."""

    condition: str
    samples: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list, repr=False)

    def add(self, stage: str, param: float, margin: float, profile=None, **extra) -> None:
        self.samples.append(TraceSample(stage, float(param), float(margin), extra))
        self.profiles.append(profile)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def min_margin(self) -> float:
        return min((s.margin for s in self.samples), default=math.inf)

    def witness(self) -> TraceSample | None:
        if not self.samples:
            return None
        return min(self.samples, key=lambda s: s.margin)

    def all_positive(self, eps: float = 0.0) -> bool:
        return all(s.margin > eps for s in self.samples)

    def to_records(self) -> list[dict]:
        return [s.to_dict() for s in self.samples]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.to_records())

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "flags": {k: _num(v) for k, v in sorted(self.flags.items())},
            "min_margin": _num(self.min_margin),
            "samples": self.to_records(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)
