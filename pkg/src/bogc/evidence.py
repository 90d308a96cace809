"""From gradient precision to belief, uncertainty, and a calibrated gradient.

Per-dimension precisions become evidence through a power map, evidence becomes
a subjective-logic opinion (beliefs plus one uncertainty mass) via a Dirichlet
with ``alpha = e + 1``, and two opinions are fused with the reduced Dempster
rule. The calibrated gradient weights each coordinate of the two gradient
means by the joint belief times the source's own belief.

All functions accept leading batch axes: beliefs have shape (..., K) and
uncertainties shape (...).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParameter, TotalConflict

EVIDENCE_MAX = 1e12
S_RANGE = (0.01, 0.9)
CONFLICT_LIMIT = 1.0 - 1e-12


@dataclass
class MassSet:
    beliefs: np.ndarray
    uncertainty: np.ndarray | float
    strength: np.ndarray | float
    evidence: np.ndarray

    @property
    def dim(self) -> int:
        return self.beliefs.shape[-1]

    def total(self) -> np.ndarray:
        return np.sum(self.beliefs, axis=-1) + self.uncertainty


@dataclass
class JointMass:
    beliefs: np.ndarray
    uncertainty: np.ndarray | float
    conflict: np.ndarray | float

    @property
    def dim(self) -> int:
        return self.beliefs.shape[-1]

    def total(self) -> np.ndarray:
        return np.sum(self.beliefs, axis=-1) + self.uncertainty


def vacuous_mass(K: int) -> MassSet:
    return MassSet(np.zeros(K), 1.0, float(K), np.zeros(K))


def posterior_precision(lambda0: float, n: int, tau: float) -> float:
    """Precision of a conjugate Gaussian mean after ``n`` observations of precision ``tau``."""
    if not lambda0 > 0 or not tau > 0:
        raise InvalidParameter("lambda0 and tau must be positive")
    if n < 0:
        raise InvalidParameter("n must be non-negative")
    return lambda0 + n * tau


def precision_to_evidence(lam, s: float):
    """Power map ``lam ** s``, clamped to ``[0, EVIDENCE_MAX]``."""
    if not s > 0:
        raise InvalidParameter("s must be positive")
    lam = np.asarray(lam, dtype=float)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0):
        raise InvalidParameter("precisions must be finite and non-negative")
    e = np.clip(np.power(lam, s), 0.0, EVIDENCE_MAX)
    return float(e) if e.ndim == 0 else e


def mass_from_evidence(evidence: np.ndarray) -> MassSet:
    e = np.asarray(evidence, dtype=float)
    K = e.shape[-1]
    S = np.sum(e + 1.0, axis=-1)
    return MassSet(e / S[..., None], K / S, S, e)


def mass_from_precisions(lambda_vec: np.ndarray, s: float) -> MassSet:
    """Opinion built from per-dimension precisions.

    >>> m = mass_from_precisions(np.array([9.0, 1.0]), 0.5)
    >>> m.beliefs.round(6).tolist(), round(float(m.uncertainty), 6)
    ([0.5, 0.166667], 0.333333)
    """
    return mass_from_evidence(precision_to_evidence(np.atleast_1d(lambda_vec), s))


def conflict(b1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """``C = sum_{p != q} b1_p b2_q`` (all cross pairs minus the diagonal)."""
    return np.sum(b1, axis=-1) * np.sum(b2, axis=-1) - np.sum(b1 * b2, axis=-1)


def dempster_combine(m1: MassSet | JointMass, m2: MassSet | JointMass) -> JointMass:
    b1, b2 = np.asarray(m1.beliefs), np.asarray(m2.beliefs)
    if b1.shape != b2.shape:
        raise DimensionMismatch(f"belief shapes differ: {b1.shape} vs {b2.shape}")
    u1 = np.asarray(m1.uncertainty, dtype=float)
    u2 = np.asarray(m2.uncertainty, dtype=float)
    C = conflict(b1, b2)
    if np.any(C >= CONFLICT_LIMIT):
        raise TotalConflict(f"conflict {np.max(C)!r} too close to 1")
    norm = 1.0 - C
    # b1*u2 + b2*u1 is grouped so swapping the arguments is bitwise identical.
    b = (b1 * b2 + (b1 * u2[..., None] + b2 * u1[..., None])) / norm[..., None]
    u = (u1 * u2) / norm
    if b.ndim == 1:
        return JointMass(b, float(u), float(C))
    return JointMass(b, u, C)


def aggregate_gradient(joint: JointMass, modality_mass: MassSet, fusion_mass: MassSet,
                       mu_i: np.ndarray, mu_fusion: np.ndarray) -> np.ndarray:
    """Belief-weighted gradient, summed over the leading (sample) axis.

    Coordinate ``d`` is ``sum_t b_td (b^i_td mu^i_td + b^f_td mu^f_td)``.
    Inputs without a sample axis are treated as a single sample.
    """
    arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in
            (joint.beliefs, modality_mass.beliefs, fusion_mass.beliefs, mu_i, mu_fusion)]
    if len({a.shape for a in arrs}) != 1:
        raise DimensionMismatch(f"inconsistent shapes {[a.shape for a in arrs]}")
    b, bi, bf, mi, mf = arrs
    return np.sum(b * (bi * mi + bf * mf), axis=0)


def calibrated_step(g_ds: np.ndarray, gamma: float = 1.5) -> np.ndarray:
    if not gamma > 0:
        raise InvalidParameter("gamma must be positive")
    return gamma * np.asarray(g_ds, dtype=float)
