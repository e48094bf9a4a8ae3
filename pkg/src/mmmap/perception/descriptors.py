"""Deterministic object descriptor: colour, shape and hashed-label blocks.

Layout (D = 61): 24 colour-histogram bins (8 per RGB channel), 5 shape
values (sorted AABB extents, log point count, centroid height) and a
32-bin hashed bag of lowercase label tokens. Every non-empty block is
L2-normalised, then the whole vector is.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

COLOR_DIM = 24
SHAPE_DIM = 5
LABEL_DIM = 32
DIM = COLOR_DIM + SHAPE_DIM + LABEL_DIM

COLOR_SLICE = slice(0, COLOR_DIM)
SHAPE_SLICE = slice(COLOR_DIM, COLOR_DIM + SHAPE_DIM)
LABEL_SLICE = slice(COLOR_DIM + SHAPE_DIM, DIM)

_TOKEN = re.compile(r"[a-z0-9]+")


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def tokens(text):
    return _TOKEN.findall(text.lower())


def token_bucket(token, dim=LABEL_DIM):
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % dim


def hashed_tokens(text, dim=LABEL_DIM):
    v = np.zeros(dim)
    for tok in tokens(text or ""):
        v[token_bucket(tok, dim)] += 1.0
    return v


def color_histogram(colors, bins=8):
    """Per-channel histogram of RGB values (uint8 or floats in [0, 1])."""
    c = np.asarray(colors).reshape(-1, 3)
    if c.dtype == np.uint8:
        c = c.astype(float) / 255.0
    idx = np.clip((c * bins).astype(int), 0, bins - 1)
    out = np.zeros(3 * bins)
    for ch in range(3):
        out[ch * bins:(ch + 1) * bins] = np.bincount(idx[:, ch], minlength=bins)
    return out


def color_block(colors):
    if colors is None or len(colors) == 0:
        return np.zeros(COLOR_DIM)
    return _unit(color_histogram(colors))


def shape_block(points):
    if points is None or len(points) == 0:
        return np.zeros(SHAPE_DIM)
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    ext = np.sort(p.max(axis=0) - p.min(axis=0))
    return _unit(np.concatenate([ext, [np.log1p(p.shape[0]), p[:, 2].mean()]]))


def label_block(label):
    if not label:
        return np.zeros(LABEL_DIM)
    return _unit(hashed_tokens(label))


def assemble(color=None, shape=None, label=None):
    v = np.concatenate([
        np.zeros(COLOR_DIM) if color is None else color,
        np.zeros(SHAPE_DIM) if shape is None else shape,
        np.zeros(LABEL_DIM) if label is None else label,
    ])
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("descriptor input is empty")
    return v / n


def encode_descriptor(points=None, colors=None, label=None):
    """Unit embedding in R^61 from any non-empty subset of the inputs."""
    has_pts = points is not None and len(points) > 0
    has_col = colors is not None and len(colors) > 0
    if not (has_pts or has_col or (label and tokens(label))):
        raise ValueError("encode_descriptor needs points, colours or a label")
    return assemble(color_block(colors), shape_block(points), label_block(label))


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def masked_cosine(query, emb):
    """Cosine restricted to the blocks that are non-zero in ``query``."""
    keep = np.zeros(DIM, dtype=bool)
    for sl in (COLOR_SLICE, SHAPE_SLICE, LABEL_SLICE):
        if np.any(query[sl] != 0):
            keep[sl] = True
    return cosine(query[keep], emb[keep])
