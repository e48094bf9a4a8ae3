"""Object, place and relational retrieval over the multimodal map."""
from .grounding import (
    RELATIONS,
    RelationalQuery,
    UnknownRelationError,
    ground_relational,
    parse_relational,
)
from .search import (
    EmptyQueryError,
    MultimodalQuery,
    RetrievalItem,
    RetrievalResult,
    encode_query,
    retrieve_objects,
    retrieve_places,
)

__all__ = [
    "EmptyQueryError", "MultimodalQuery", "RELATIONS", "RelationalQuery", "RetrievalItem",
    "RetrievalResult", "UnknownRelationError", "encode_query", "ground_relational",
    "parse_relational", "retrieve_objects", "retrieve_places",
]
