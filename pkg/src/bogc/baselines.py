"""Fixed-rule gradient aggregators and the gradient-conflict test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, ZeroGradient

UNIFORM_SUM = "uniform_sum"
FIXED_BLEND = "fixed_blend"
CONFLICT_PROJECTION = "conflict_projection"
BOGC = "bogc"
AGGREGATORS = (UNIFORM_SUM, FIXED_BLEND, CONFLICT_PROJECTION, BOGC)


@dataclass(frozen=True)
class AggregatorKind:
    tag: str
    weight: float | None = None

    def __post_init__(self):
        if self.tag not in AGGREGATORS:
            raise InvalidParameter(f"unknown aggregator {self.tag!r}; choose from {AGGREGATORS}")
        if self.tag == FIXED_BLEND:
            w = 0.5 if self.weight is None else self.weight
            if not 0.0 <= w <= 1.0:
                raise InvalidParameter("blend weight must be in [0, 1]")
            object.__setattr__(self, "weight", float(w))

    @classmethod
    def parse(cls, text: str) -> "AggregatorKind":
        """Accepts ``"uniform_sum"`` or ``"fixed_blend:0.3"`` style tags."""
        tag, _, w = text.partition(":")
        return cls(tag, float(w) if w else None)

    def __str__(self):
        return f"{self.tag}:{self.weight:g}" if self.tag == FIXED_BLEND else self.tag


def _pair(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"gradient shapes differ: {a.shape} vs {b.shape}")
    return a, b


def uniform_sum(g_uni, g_fusion) -> np.ndarray:
    a, b = _pair(g_uni, g_fusion)
    return a + b


def fixed_blend(g_uni, g_fusion, w: float = 0.5) -> np.ndarray:
    if not 0.0 <= w <= 1.0:
        raise InvalidParameter("blend weight must be in [0, 1]")
    a, b = _pair(g_uni, g_fusion)
    return w * a + (1.0 - w) * b


def conflict_projection(g_a, g_b) -> np.ndarray:
    """Project ``g_a`` off ``g_b`` when they point against each other, then add."""
    a, b = _pair(g_a, g_b)
    dot = float(a @ b)
    nb2 = float(b @ b)
    if dot < 0.0 and nb2 > 0.0:
        a = a - (dot / nb2) * b
    return a + b


def cosine(a, b) -> float:
    a, b = _pair(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroGradient("cosine undefined for a zero gradient")
    return float(a @ b / (na * nb))


def detect_conflict(g_uni, g_fusion) -> bool:
    """True iff the cosine is strictly negative (orthogonal counts as no conflict)."""
    return cosine(g_uni, g_fusion) < 0.0
