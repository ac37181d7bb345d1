"""quest: an embedded multi-model columnar query engine.

Tables, nested documents, and property graphs all ingest into one nested
columnar layout; queries filter and fetch across models by moving bitsets
along the schema tree, optionally accelerated by a Skip-Tree index.
"""

from .engine import ResultSet, evaluate, run_query
from .errors import (
    DeliveryError,
    IngestError,
    PlanConstraintError,
    QueryError,
    QuestError,
    SchemaError,
    StoreError,
)
from .oracle import oracle_evaluate, oracle_query
from .query import parse_query
from .schema import Kind, Link, Schema, SchemaNode, expand_graph_schema, parse_schema, serialize_schema
from .store import (
    CounterArray,
    IndicatorArray,
    PrimitiveColumn,
    SchemaData,
    Store,
    counter_range,
    ingest_csv,
    ingest_graph,
    ingest_graph_tables,
    ingest_json,
    ingest_rows,
    open_store,
    write_store,
)

__version__ = "0.1.0"

__all__ = [
    "QuestError",
    "SchemaError",
    "IngestError",
    "StoreError",
    "DeliveryError",
    "QueryError",
    "PlanConstraintError",
    "Kind",
    "Link",
    "Schema",
    "SchemaNode",
    "parse_schema",
    "serialize_schema",
    "expand_graph_schema",
    "PrimitiveColumn",
    "CounterArray",
    "IndicatorArray",
    "SchemaData",
    "Store",
    "counter_range",
    "ingest_json",
    "ingest_csv",
    "ingest_rows",
    "ingest_graph",
    "ingest_graph_tables",
    "write_store",
    "open_store",
    "parse_query",
    "evaluate",
    "run_query",
    "ResultSet",
    "oracle_evaluate",
    "oracle_query",
    "__version__",
]
