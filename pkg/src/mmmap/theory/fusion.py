"""Recall quality of confidence vectors and two ways of fusing two models.

A confidence row holds one model's confidences for the ``N_Y`` objects of a
class. Recall quality is the fraction of them at or above a threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _row(y, name="Y"):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D row")
    return y


def recall_quality(y, t):
    """Fraction of confidences ``>= t`` (inclusive)."""
    if not t > 0:
        raise ValueError("threshold t must be > 0")
    y = _row(y)
    return np.count_nonzero(y >= t) / y.size


def recall_quality_rows(Y, t):
    """Row-wise :func:`recall_quality` for a matrix of rows."""
    if not t > 0:
        raise ValueError("threshold t must be > 0")
    Y = np.asarray(Y, dtype=float)
    return np.count_nonzero(Y >= t, axis=-1) / Y.shape[-1]


def _finish(raw, clamp, return_raw):
    out = np.clip(raw, 0.0, 1.0) if clamp else raw
    return (out, raw) if return_raw else out


def fuse_linear(y1, y2, alpha, beta, c, clamp=False, return_raw=False):
    """``alpha * y1 + beta * y2 + c`` element-wise; rows or stacked rows."""
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if y1.shape != y2.shape:
        raise ValueError(f"length mismatch: {y1.shape} vs {y2.shape}")
    return _finish(alpha * y1 + beta * y2 + c, clamp, return_raw)


def fuse_attention(y1, y2, s, clamp=False, return_raw=False):
    """``(s * y1 y1^T) y2``: each ``y1_i`` scaled by ``s * <y1, y2>``."""
    if not s > 0:
        raise ValueError("attention scale s must be > 0")
    y1, y2 = np.asarray(y1, dtype=float), np.asarray(y2, dtype=float)
    if y1.shape != y2.shape:
        raise ValueError(f"length mismatch: {y1.shape} vs {y2.shape}")
    dot = np.sum(y1 * y2, axis=-1, keepdims=True)
    return _finish(s * y1 * dot, clamp, return_raw)


def condition_case1(alpha, beta, c):
    """Sufficient condition for the linear fusion: all inequalities strict."""
    return bool(alpha > 0.5 and beta > 0.5 and c > 0)


@dataclass(frozen=True)
class Case2Check:
    holds: bool
    s_threshold: float
    s_ok: bool
    rho_ok: bool

    def __bool__(self):
        return self.holds


def condition_case2(s, mean1, mean2, var1, rho):
    """Attention-fusion condition: ``s > 1/(mean1*mean2) + 1/var1`` and ``rho > 0``."""
    if not (mean1 > 0 and mean2 > 0):
        raise ValueError("means must be > 0")
    if not var1 > 0:
        raise ValueError("variance must be > 0")
    threshold = 1.0 / (mean1 * mean2) + 1.0 / var1
    s_ok, rho_ok = bool(s > threshold), bool(rho > 0)
    return Case2Check(s_ok and rho_ok, float(threshold), s_ok, rho_ok)


@dataclass(frozen=True)
class FusionModel:
    kind: str  # linear | attention
    alpha: float | None = None
    beta: float | None = None
    c: float | None = None
    s: float | None = None
    clamp_output: bool = True

    def __post_init__(self):
        if self.kind == "linear":
            if None in (self.alpha, self.beta, self.c):
                raise ValueError("linear fusion needs alpha, beta and c")
        elif self.kind == "attention":
            if self.s is None or not self.s > 0:
                raise ValueError("attention fusion needs s > 0")
        else:
            raise ValueError(f"unknown fusion kind {self.kind!r}")

    def apply(self, y1, y2):
        """``(output, raw)``; output is clamped to [0, 1] when ``clamp_output``."""
        if self.kind == "linear":
            return fuse_linear(y1, y2, self.alpha, self.beta, self.c, self.clamp_output, True)
        return fuse_attention(y1, y2, self.s, self.clamp_output, True)

    def to_json(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}
