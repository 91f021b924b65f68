"""Verdict records shared by the theorem checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def jsonable(x):
    """Recursively convert numpy scalars/arrays (and tuples) to plain JSON types."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x != x or x in (float("inf"), float("-inf")):
            return None
        return x
    if hasattr(x, "to_json"):
        return jsonable(x.to_json())
    return x


@dataclass
class Check:
    """Outcome of one theorem check.

    ``ok`` is ``None`` when the check does not apply to the input (for
    example a stretch-constant inequality on a conjugate pair).
    """

    name: str
    ok: bool | None
    values: dict = field(default_factory=dict)
    note: str = ""

    @property
    def failed(self) -> bool:
        return self.ok is False

    def to_json(self) -> dict:
        out = {"name": self.name, "ok": self.ok, "values": jsonable(self.values)}
        if self.note:
            out["note"] = self.note
        return out

    def line(self) -> str:
        tag = {True: "PASS", False: "FAIL", None: "N/A "}[self.ok]
        return f"[{tag}] {self.name}" + (f"  ({self.note})" if self.note else "")
