"""Cross-modal merge of image and point-cloud observations."""
from __future__ import annotations

import numpy as np

from .. import geometry as geo
from .observations import ObjectObservation, padded_iou
from .segmentation import UNKNOWN_LABEL


def _merge(a, b):
    emb = a.embedding + b.embedding
    emb = emb / np.linalg.norm(emb)
    label = a.label if a.label != UNKNOWN_LABEL else b.label
    return ObjectObservation(
        source="fused",
        aabb_world=geo.aabb_union(a.aabb_world, b.aabb_world),
        centroid=(a.centroid + b.centroid) / 2.0,
        label=label,
        embedding=emb,
        confidence=max(a.confidence, b.confidence),
        mask_pixels=a.mask_pixels,
        point_indices=b.point_indices,
        true_id=a.true_id if a.true_id is not None else b.true_id,
    )


def fuse_observations(obs_image, obs_pcl, calib=None, iou_threshold=0.3, min_extent=1.0):
    """Greedily merge image/point-cloud pairs by 3D IoU, best pair first.

    Both lists must already be in the world frame (``calib`` is accepted for
    interface symmetry). Boxes are padded to ``min_extent`` before the IoU
    test. Pairs at exactly ``iou_threshold`` merge. Merged
    records come first in merge order, then unmatched image records, then
    unmatched point-cloud records.
    """
    pairs = []
    for i, a in enumerate(obs_image):
        for j, b in enumerate(obs_pcl):
            iou = padded_iou(a.aabb_world, b.aabb_world, min_extent)
            if iou >= iou_threshold:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_i, used_j, merged = set(), set(), []
    for _, i, j in pairs:
        if i in used_i or j in used_j:
            continue
        used_i.add(i)
        used_j.add(j)
        merged.append(_merge(obs_image[i], obs_pcl[j]))
    merged += [o for i, o in enumerate(obs_image) if i not in used_i]
    merged += [o for j, o in enumerate(obs_pcl) if j not in used_j]
    return merged
