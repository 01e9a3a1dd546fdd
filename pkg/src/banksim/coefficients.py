from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

A_NAMES: Tuple[str, ...] = ("a_udot", "a_u", "a_|u|u")
B_NAMES: Tuple[str, ...] = (
    "b_vdot",
    "b_rdot",
    "b_v",
    "b_r",
    "b_|v|v",
    "b_|r|r",
    "b_bank",
)
C_NAMES: Tuple[str, ...] = (
    "c_vdot",
    "c_rdot",
    "c_v",
    "c_r",
    "c_|v|v",
    "c_|r|r",
    "c_bank",
)
BLOCK_NAMES: Dict[str, Tuple[str, ...]] = {"X": A_NAMES, "Y": B_NAMES, "N": C_NAMES}

# Sign constraints of the identification problem. b_r, c_v and the quadratic
# cross terms may take either sign.
NONNEGATIVE = frozenset(
    {
        "a_udot",
        "a_u",
        "a_|u|u",
        "b_vdot",
        "b_v",
        "b_|v|v",
        "c_rdot",
        "c_r",
        "c_|r|r",
    }
)


def nonnegative_mask(names: Iterable[str]) -> np.ndarray:
    return np.array([name in NONNEGATIVE for name in names], dtype=bool)


def _frozen_vector(values: Iterable[float], length: int, label: str) -> np.ndarray:
    arr = np.array(list(values), dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{label} must have {length} entries, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CoefficientSet:
    """The identified regressor vectors a, b, c plus what the solver learned about them.

    ``b_rdot`` and ``c_vdot`` are one physical quantity; sets produced by the
    solver carry the same float in both places.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    diagnostics: Mapping[str, Any] = field(default_factory=dict)
    active: Tuple[str, ...] = ()
    pinned: Tuple[str, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", _frozen_vector(self.a, 3, "a"))
        object.__setattr__(self, "b", _frozen_vector(self.b, 7, "b"))
        object.__setattr__(self, "c", _frozen_vector(self.c, 7, "c"))
        object.__setattr__(self, "active", tuple(self.active))
        object.__setattr__(self, "pinned", tuple(self.pinned))

    @classmethod
    def from_dict(cls, values: Mapping[str, float], **kwargs: Any) -> CoefficientSet:
        """Build from a flat name -> value mapping; missing names default to 0."""
        unknown = set(values) - set(A_NAMES + B_NAMES + C_NAMES)
        if unknown:
            raise KeyError(f"Unknown coefficient names: {sorted(unknown)}")
        return cls(
            a=[float(values.get(n, 0.0)) for n in A_NAMES],
            b=[float(values.get(n, 0.0)) for n in B_NAMES],
            c=[float(values.get(n, 0.0)) for n in C_NAMES],
            **kwargs,
        )

    @classmethod
    def published(cls) -> CoefficientSet:
        """The published identification of the 1:89.11 DTC towing model."""
        return cls(
            a=[0.0, 0.0, 12.6],
            b=[733.0, -56.1, 100.0, 118.0, 3298.0, -161.0, 1.07],
            c=[-56.1, 712.0, 414.0, 84.9, 589.0, 3346.0, 0.13],
        )

    def block(self, name: str) -> np.ndarray:
        return {"X": self.a, "Y": self.b, "N": self.c}[name]

    def value(self, name: str) -> float:
        return self.as_dict()[name]

    def as_dict(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for names, vector in ((A_NAMES, self.a), (B_NAMES, self.b), (C_NAMES, self.c)):
            out.update({n: float(v) for n, v in zip(names, vector)})
        return out

    def replace(self, **values: float) -> CoefficientSet:
        merged = self.as_dict()
        merged.update(values)
        return CoefficientSet.from_dict(
            merged,
            diagnostics=self.diagnostics,
            active=self.active,
            pinned=self.pinned,
            meta=self.meta,
        )

    def to_json(self, extra_meta: Optional[Mapping[str, Any]] = None) -> str:
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        doc = {
            "a": {n: float(v) for n, v in zip(A_NAMES, self.a)},
            "b": {n: float(v) for n, v in zip(B_NAMES, self.b)},
            "c": {n: float(v) for n, v in zip(C_NAMES, self.c)},
            "active_constraints": list(self.active),
            "pinned": list(self.pinned),
            "diagnostics": dict(self.diagnostics),
            "meta": meta,
        }
        return json.dumps(doc, indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> CoefficientSet:
        doc = json.loads(text)
        values: Dict[str, float] = {}
        for key in ("a", "b", "c"):
            if key not in doc:
                raise KeyError(f"Coefficient document is missing block {key!r}")
            values.update(doc[key])
        return cls.from_dict(
            values,
            diagnostics=doc.get("diagnostics", {}),
            active=tuple(doc.get("active_constraints", ())),
            pinned=tuple(doc.get("pinned", ())),
            meta=doc.get("meta", {}),
        )


def added_mass_matrix(coeffs: CoefficientSet) -> np.ndarray:
    """The sway/yaw inertia block [[b_vdot, b_rdot], [c_vdot, c_rdot]]."""
    return np.array([[coeffs.b[0], coeffs.b[1]], [coeffs.c[0], coeffs.c[1]]])
