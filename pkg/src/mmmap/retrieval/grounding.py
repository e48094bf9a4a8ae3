"""Rule-based grounding of ``<label> [<relation> <label>]`` queries.

One-stage grounding ranks nodes by label similarity alone. Two-stage
grounding first shortlists target and anchor candidates by label similarity,
then keeps the targets whose relation to some anchor holds. A language-model
resolver could replace :func:`resolve_relation` without touching the rest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mapping.map import MapSnapshot, MultimodalMap
from ..mapping.scene_graph import SceneGraph
from ..perception.descriptors import LABEL_SLICE, label_block, tokens
from .search import RetrievalItem, RetrievalResult, rank

RELATIONS = ("near", "on", "above", "inside", "closest-to")
STRATEGIES = ("one-stage", "two-stage")
LABEL_THRESHOLD = 0.6


class UnknownRelationError(ValueError):
    pass


@dataclass(frozen=True)
class RelationalQuery:
    target_label: str
    relation: str | None = None
    anchor_label: str | None = None

    def __post_init__(self):
        if not self.target_label or not tokens(self.target_label):
            raise ValueError("target label is empty")
        if self.relation is not None and self.relation not in RELATIONS:
            raise UnknownRelationError(f"unknown relation {self.relation!r}; use one of {RELATIONS}")
        if (self.relation is None) != (self.anchor_label is None):
            raise ValueError("a relation needs an anchor label and vice versa")

    @property
    def text(self):
        if self.relation is None:
            return self.target_label
        return f"{self.target_label} {self.relation} {self.anchor_label}"


def parse_relational(text):
    """Parse ``"<label> [<relation> <label>]"``; labels may span several words."""
    words = text.split()
    if not words:
        raise ValueError("empty query")
    at = [i for i, w in enumerate(words) if w.lower() in RELATIONS]
    if len(at) > 1:
        raise ValueError(f"query has more than one relation: {text!r}")
    if not at:
        if len(words) == 3:
            raise UnknownRelationError(f"unknown relation {words[1]!r}; use one of {RELATIONS}")
        return RelationalQuery(" ".join(words))
    i = at[0]
    if i == 0 or i == len(words) - 1:
        raise ValueError(f"relation needs labels on both sides: {text!r}")
    return RelationalQuery(" ".join(words[:i]), words[i].lower(), " ".join(words[i + 1:]))


def _graph(source):
    if isinstance(source, MultimodalMap):
        source = source.graph
    if isinstance(source, MapSnapshot):
        return source.graph_view
    if isinstance(source, SceneGraph):
        return source
    raise TypeError(f"cannot ground queries on {type(source).__name__}")


def label_scores(nodes, label):
    """Cosine between each node's label block and the encoded ``label``."""
    q = label_block(label)
    out = np.zeros(len(nodes))
    for i, n in enumerate(nodes):
        b = np.asarray(n.embedding)[LABEL_SLICE]
        nb = np.linalg.norm(b)
        out[i] = float(b @ q / nb) if nb > 0 else 0.0
    return out


def resolve_relation(rq, targets, anchors, edges):
    """Targets (nodes) that satisfy ``rq.relation`` with at least one anchor."""
    if rq.relation == "closest-to":
        if not targets or not anchors:
            return []
        d = [min(float(np.linalg.norm(t.centroid - a.centroid)) for a in anchors if a.node_id != t.node_id)
             if any(a.node_id != t.node_id for a in anchors) else np.inf for t in targets]
        best = int(np.argmin(d))
        return [targets[best]] if np.isfinite(d[best]) else []
    keep = []
    for t in targets:
        for a in anchors:
            if a.node_id == t.node_id:
                continue
            if rq.relation == "near":
                lo, hi = sorted((t.node_id, a.node_id))
                ok = (lo, "near", hi) in edges
            else:
                ok = (t.node_id, rq.relation, a.node_id) in edges
            if ok:
                keep.append(t)
                break
    return keep


def ground_relational(source, rq, strategy="two-stage", k=5, threshold=LABEL_THRESHOLD):
    """Ground a relational query on the active nodes of a map, snapshot or graph."""
    if isinstance(rq, str):
        rq = parse_relational(rq)
    if strategy in ("one", "two"):
        strategy = f"{strategy}-stage"
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if rq.relation is not None and rq.relation not in RELATIONS:
        raise UnknownRelationError(rq.relation)
    g = _graph(source)
    nodes = g.active_nodes()
    echo = {"text": rq.text, "strategy": strategy, "k": int(k)}
    if not nodes:
        return RetrievalResult([], echo)
    scores = label_scores(nodes, rq.target_label)
    ids = np.array([n.node_id for n in nodes], dtype=np.int64)
    if strategy == "one-stage":
        chosen = rank(scores, ids, int(k))
    else:
        cand = scores >= threshold
        if rq.relation is not None:
            anchor_scores = label_scores(nodes, rq.anchor_label)
            anchors = [n for n, s in zip(nodes, anchor_scores) if s >= threshold]
            targets = [n for n, c in zip(nodes, cand) if c]
            ok = {n.node_id for n in resolve_relation(rq, targets, anchors, g.edges)}
            cand &= np.isin(ids, list(ok))
        idx = np.nonzero(cand)[0]
        chosen = idx[rank(scores[idx], ids[idx], int(k))]
    items = [RetrievalItem("object", int(ids[i]), float(scores[i]),
                           tuple(float(x) for x in nodes[i].centroid)) for i in chosen]
    return RetrievalResult(items, echo)
