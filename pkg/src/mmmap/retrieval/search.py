"""Encoder-based object and place retrieval."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mapping.map import MapSnapshot, MultimodalMap
from ..mapping.places import BLOCKS, MODALITIES, ModalityError, PlaceDatabase, check_mask, \
    compute_place_descriptor
from ..mapping.scene_graph import SceneGraph
from ..perception.descriptors import encode_descriptor


class EmptyQueryError(ValueError):
    """A query without any modality."""


@dataclass
class MultimodalQuery:
    text: str | None = None
    image_patch: np.ndarray | None = None  # (..., 3) RGB, uint8 or floats in [0, 1]
    point_patch: np.ndarray | None = None  # (N, 3)
    k: int = 5

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError("k must be >= 1")
        if not self.modalities():
            raise EmptyQueryError("query needs text, an image patch or a point patch")

    def modalities(self):
        out = []
        if self.text and self.text.strip():
            out.append("text")
        if self.image_patch is not None and np.asarray(self.image_patch).size:
            out.append("image")
        if self.point_patch is not None and np.asarray(self.point_patch).size:
            out.append("points")
        return out

    def echo(self):
        return {"text": self.text, "modalities": self.modalities(), "k": int(self.k)}


@dataclass
class RetrievalItem:
    kind: str  # object | place | submap
    id: int
    score: float
    position: tuple
    inactive: bool = False

    def to_json(self):
        return {"kind": self.kind, "id": self.id, "score": self.score,
                "position": list(self.position), "inactive": self.inactive}


@dataclass
class RetrievalResult:
    items: list = field(default_factory=list)
    query_echo: dict = field(default_factory=dict)

    def ids(self):
        return [it.id for it in self.items]

    def to_json(self):
        return {"items": [it.to_json() for it in self.items], "query_echo": self.query_echo}


def encode_query(q):
    """Embed a query with the object encoder: text fills the label block,
    the image patch the colour block and the point patch the shape block."""
    if not isinstance(q, MultimodalQuery):
        raise TypeError("encode_query expects a MultimodalQuery")
    if not q.modalities():
        raise EmptyQueryError("query needs text, an image patch or a point patch")
    img = None if q.image_patch is None else np.asarray(q.image_patch).reshape(-1, 3)
    return encode_descriptor(points=q.point_patch, colors=img, label=q.text)


def node_table(source):
    """``(ids, embeddings, positions, active flags)`` of every node in ``source``."""
    if isinstance(source, MultimodalMap):
        source = source.graph
    if isinstance(source, MapSnapshot):
        nodes = [(n.node_id, np.array(n.embedding), n.centroid, True) for n in source.nodes]
    elif isinstance(source, SceneGraph):
        nodes = [(n.node_id, n.embedding, tuple(float(x) for x in n.centroid), n.active)
                 for _, n in sorted(source.nodes.items())]
    else:
        raise TypeError(f"cannot retrieve from {type(source).__name__}")
    if not nodes:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 0)), [], np.zeros(0, dtype=bool)
    ids = np.array([n[0] for n in nodes], dtype=np.int64)
    return ids, np.stack([n[1] for n in nodes]), [n[2] for n in nodes], np.array([n[3] for n in nodes])


def cosine_scores(matrix, query):
    q = np.asarray(query, dtype=float)
    q = q / np.linalg.norm(q)
    norms = np.linalg.norm(matrix, axis=1)
    return (matrix @ q) / np.where(norms > 0, norms, 1.0)


def rank(scores, ids, k):
    """Indices of the top ``k`` scores; ties go to the lower id."""
    order = np.lexsort((ids, -scores))
    return order[:k]


def retrieve_objects(source, q, k=None):
    """Top-k scene-graph nodes by cosine to the query embedding.

    ``q`` is a :class:`MultimodalQuery` or a raw embedding vector. Inactive
    nodes are included and flagged.
    """
    if isinstance(q, MultimodalQuery):
        qv, k, echo = encode_query(q), q.k if k is None else k, q.echo()
    else:
        qv, echo = np.asarray(q, dtype=float), {"vector": True}
        k = 5 if k is None else k
        if not np.any(qv):
            raise EmptyQueryError("query vector is zero")
    ids, emb, pos, active = node_table(source)
    if ids.size == 0:
        return RetrievalResult([], echo)
    scores = cosine_scores(emb, qv)
    items = [RetrievalItem("object", int(ids[i]), float(scores[i]), tuple(pos[i]), not bool(active[i]))
             for i in rank(scores, ids, int(k))]
    return RetrievalResult(items, echo)


def _descriptor_mask(d):
    return frozenset(m for m in MODALITIES if np.any(d[BLOCKS[m]] != 0))


def retrieve_places(places, query, k=5, *, modality_mask=None, obs=None, lidar_to_base=None):
    """Top-k places by descriptor cosine.

    ``query`` is a sensor frame (encoded with the database's modality mask)
    or a ready descriptor. A descriptor built with a different mask than the
    database raises :class:`ModalityError`.
    """
    if not isinstance(places, PlaceDatabase):
        raise TypeError("retrieve_places expects a PlaceDatabase")
    if modality_mask is not None and check_mask(modality_mask) != places.modality_mask:
        raise ModalityError(f"query mask {sorted(modality_mask)} does not match database mask "
                            f"{sorted(places.modality_mask)}")
    if isinstance(query, np.ndarray) and query.ndim == 1:
        d = query.astype(float)
        if not _descriptor_mask(d) <= places.modality_mask:
            raise ModalityError("query descriptor uses modalities the database does not have")
    else:
        d = compute_place_descriptor(query, obs, places.modality_mask, lidar_to_base)
    echo = {"modality_mask": sorted(places.modality_mask), "k": int(k)}
    if not places.entries:
        return RetrievalResult([], echo)
    ids = np.array([e.place_id for e in places.entries], dtype=np.int64)
    scores = cosine_scores(places.matrix(), d)
    items = []
    for i in rank(scores, ids, int(k)):
        e = places.entries[i]
        items.append(RetrievalItem("place", int(ids[i]), float(scores[i]),
                                   tuple(float(x) for x in e.pose[:3, 3])))
    return RetrievalResult(items, echo)
