"""Keyframe place descriptors and the place database."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from ..perception.descriptors import color_histogram, hashed_tokens
from ..perception.segmentation import UNKNOWN_LABEL

MODALITIES = ("image", "pointcloud", "semantic", "text")
IMAGE_DIM, RANGE_DIM, SEMANTIC_DIM, TEXT_DIM = 24, 32, 16, 32
PLACE_DIM = IMAGE_DIM + RANGE_DIM + SEMANTIC_DIM + TEXT_DIM
BLOCKS = {
    "image": slice(0, IMAGE_DIM),
    "pointcloud": slice(IMAGE_DIM, IMAGE_DIM + RANGE_DIM),
    "semantic": slice(IMAGE_DIM + RANGE_DIM, IMAGE_DIM + RANGE_DIM + SEMANTIC_DIM),
    "text": slice(IMAGE_DIM + RANGE_DIM + SEMANTIC_DIM, PLACE_DIM),
}
VOCABULARY = (
    "chair", "table", "cup", "lamp", "box", "sofa", "plant", "shelf",
    "bottle", "pillar", "car", "truck", "person", "ball", "bicycle", "door",
)
RANGE_GROUND_Z = 0.2  # lidar points below this height (base frame) are ignored
RANGE_MAX = 50.0


class ModalityError(ValueError):
    """Unknown, empty or mismatched modality mask."""


def check_mask(mask):
    mask = frozenset(mask)
    unknown = mask - set(MODALITIES)
    if unknown:
        raise ModalityError(f"unknown modalities {sorted(unknown)}")
    if not mask:
        raise ModalityError("at least one modality must be enabled")
    return mask


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def image_block(frame):
    valid = np.isfinite(frame.depth)
    if not valid.any():
        return np.zeros(IMAGE_DIM)
    return color_histogram(frame.color[valid])


def range_block(points, lidar_to_base=None):
    """Mean range per azimuth sector, scaled to [0, 1]; empty sectors are 0."""
    out = np.zeros(RANGE_DIM)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return out
    if lidar_to_base is not None:
        pts = pts[geo.transform_points(lidar_to_base, pts)[:, 2] >= RANGE_GROUND_Z]
        if pts.shape[0] == 0:
            return out
    az = np.arctan2(pts[:, 1], pts[:, 0]) % (2 * np.pi)
    sector = np.minimum((az / (2 * np.pi) * RANGE_DIM).astype(int), RANGE_DIM - 1)
    rng = np.linalg.norm(pts[:, :2], axis=1)
    sums = np.bincount(sector, weights=rng, minlength=RANGE_DIM)
    counts = np.bincount(sector, minlength=RANGE_DIM)
    hit = counts > 0
    out[hit] = sums[hit] / counts[hit] / RANGE_MAX
    return out


def semantic_block(labels):
    out = np.zeros(SEMANTIC_DIM)
    for lab in labels:
        if lab in VOCABULARY:
            out[VOCABULARY.index(lab)] += 1.0
    return out


def text_block(labels):
    words = sorted(lab for lab in labels if lab and lab != UNKNOWN_LABEL)
    return hashed_tokens(" ".join(words), TEXT_DIM)


def compute_place_descriptor(frame, obs, modality_mask, lidar_to_base=None):
    """Unit descriptor of one keyframe with a fixed 104-dim block layout.

    ``obs`` are the object observations (or anything with ``.label``) seen in
    the frame. Blocks outside ``modality_mask`` are exactly zero; enabled
    blocks are normalised individually, then the whole vector.
    """
    mask = check_mask(modality_mask)
    labels = [o.label for o in obs or ()]
    blocks = {
        "image": lambda: image_block(frame),
        "pointcloud": lambda: range_block(frame.points, lidar_to_base),
        "semantic": lambda: semantic_block(labels),
        "text": lambda: text_block(labels),
    }
    d = np.zeros(PLACE_DIM)
    for name in MODALITIES:
        if name in mask:
            d[BLOCKS[name]] = _unit(blocks[name]())
    return _unit(d)


@dataclass
class PlaceEntry:
    place_id: int
    t: float
    pose: np.ndarray
    descriptor: np.ndarray
    modality_mask: frozenset

    def equals(self, other):
        return (self.place_id == other.place_id and self.t == other.t
                and np.array_equal(self.pose, other.pose)
                and np.array_equal(self.descriptor, other.descriptor)
                and self.modality_mask == other.modality_mask)


@dataclass
class PlaceDatabase:
    modality_mask: frozenset = frozenset(MODALITIES)
    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.modality_mask = check_mask(self.modality_mask)

    def __len__(self):
        return len(self.entries)

    def add(self, t, pose, descriptor, modality_mask=None):
        mask = self.modality_mask if modality_mask is None else check_mask(modality_mask)
        if mask != self.modality_mask:
            raise ModalityError(f"entry mask {sorted(mask)} differs from database mask "
                                f"{sorted(self.modality_mask)}")
        d = np.asarray(descriptor, dtype=float)
        if d.shape != (PLACE_DIM,) or not np.isclose(np.linalg.norm(d), 1.0):
            raise ValueError("place descriptor must be a unit vector of length 104")
        pid = self.entries[-1].place_id + 1 if self.entries else 0
        self.entries.append(PlaceEntry(pid, float(t), np.array(pose, dtype=float), d.copy(), mask))
        return pid

    def matrix(self):
        if not self.entries:
            return np.zeros((0, PLACE_DIM))
        return np.stack([e.descriptor for e in self.entries])

    def equals(self, other):
        return (self.modality_mask == other.modality_mask and len(self) == len(other)
                and all(a.equals(b) for a, b in zip(self.entries, other.entries)))
