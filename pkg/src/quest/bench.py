"""The 11-query benchmark workload and its timing harness.

The workload mixes the three models (R table, D document, G graph) at
the two planted selectivity levels, including the depth-7 document
shapes, joins between models, and one three-model query.  Every query
runs with the skip index on and off; counters come straight from the
store's instrumentation and timings are medians over repetitions.
"""

from __future__ import annotations

import json
import statistics
import time
import tracemalloc
from dataclasses import dataclass

from .delivery import deliver, ones_bits
from .engine import evaluate
from .optimizer import plan_query
from .query import parse_query
from .schema import Kind
from .skiptree import build_skip_tree

DEFAULT_RUNS = 5
DEFAULT_TIMEOUT = 300.0


@dataclass(frozen=True)
class WorkloadQuery:
    name: str
    models: str  # which models the predicates touch: R, D, G, or a mix
    depth: int  # level of the deepest predicate, counting the root as 1
    level: str  # planted selectivity level of the probe values
    doc: dict


WORKLOAD = [
    WorkloadQuery(
        "Q01_table_point_high",
        "R",
        1,
        "high",
        {
            "from": ["people"],
            "filters": [{"path": "people.segment", "op": "=", "value": "vip"}],
            "fetch": ["people.PID"],
        },
    ),
    WorkloadQuery(
        "Q02_table_range",
        "R",
        1,
        "mid",
        {
            "from": ["people"],
            "filters": [
                {"path": "people.credit_score", "op": ">", "value": 700},
                {"path": "people.balance", "op": "<", "value": 2500},
            ],
            "fetch": ["people.PID"],
        },
    ),
    WorkloadQuery(
        "Q03_doc_word_high",
        "D",
        3,
        "high",
        {
            "from": ["ads"],
            "filters": [{"path": "ads.Campaign.WordSet.Word", "op": "=", "value": "hotword"}],
            "fetch": ["ads.Email"],
        },
    ),
    WorkloadQuery(
        "Q04_doc_word_low",
        "D",
        3,
        "low",
        {
            "from": ["ads"],
            "filters": [{"path": "ads.Campaign.WordSet.Word", "op": "=", "value": "warmword"}],
            "fetch": ["ads.Email"],
        },
    ),
    WorkloadQuery(
        "Q05_graph_vertex_high",
        "G",
        1,
        "high",
        {
            "from": ["social"],
            "filters": [{"path": "social.Person.city", "op": "=", "value": "hc"}],
            "fetch": ["social.Person.name"],
        },
    ),
    WorkloadQuery(
        "Q06_graph_chain_high",
        "G",
        2,
        "high",
        {
            "from": ["social"],
            "graph_paths": [["social.Person.know#.#Person"]],
            "filters": [
                {"path": "social.Person.know#.#Person.city", "op": "=", "value": "hc"}
            ],
            "fetch": ["social.Person.name"],
        },
    ),
    WorkloadQuery(
        "Q07_join_doc_table",
        "RD",
        3,
        "high",
        {
            "from": ["ads", "people"],
            "joins": [
                {"left": "ads.Campaign.Clicks.Person", "right": "people.PID", "unique": False}
            ],
            "filters": [
                {"path": "ads.Campaign.WordSet.Word", "op": "=", "value": "hotword"},
                {"path": "people.credit_score", "op": ">", "value": 700},
            ],
            "fetch": ["ads.Email"],
        },
    ),
    WorkloadQuery(
        "Q08_join_graph_table",
        "RG",
        1,
        "mid",
        {
            "from": ["social", "people"],
            "joins": [{"left": "social.Person.pid", "right": "people.PID", "unique": True}],
            "filters": [{"path": "people.credit_score", "op": ">", "value": 700}],
            "fetch": ["social.Person.name"],
        },
    ),
    WorkloadQuery(
        "Q09_deep_sensor_high",
        "D",
        7,
        "high",
        {
            "from": ["org"],
            "filters": [
                {
                    "path": "org.Region.Site.Building.Floor.Room.sensor",
                    "op": "=",
                    "value": 999.0,
                }
            ],
            "fetch": ["org.name"],
        },
    ),
    WorkloadQuery(
        "Q10_deep_sensor_low",
        "D",
        7,
        "low",
        {
            "from": ["org"],
            "filters": [
                {
                    "path": "org.Region.Site.Building.Floor.Room.sensor",
                    "op": "=",
                    "value": 555.0,
                }
            ],
            "fetch": ["org.name"],
        },
    ),
    WorkloadQuery(
        "Q11_three_model_deep",
        "RDG",
        7,
        "high",
        {
            "from": ["org", "people", "social"],
            "joins": [
                {
                    "left": "org.Region.Site.Building.Floor.Room.owner",
                    "right": "people.PID",
                    "unique": True,
                },
                {
                    "left": "org.Region.Site.Building.Floor.Room.owner",
                    "right": "social.Person.pid",
                    "unique": True,
                },
            ],
            "filters": [
                {"path": "people.segment", "op": "=", "value": "vip"},
                {"path": "social.Person.city", "op": "=", "value": "hc"},
                {
                    "path": "org.Region.Site.Building.Floor.Room.sensor",
                    "op": "=",
                    "value": 999.0,
                },
            ],
            "fetch": ["org.name"],
        },
    ),
]

# the deep-predicate document shapes; the three-model query is also
# depth 7 but its timing is dominated by join-index construction
DEEP_NAMES = tuple(q.name for q in WORKLOAD if q.depth >= 7 and q.models == "D")

_COUNTER_KEYS = ("columns_read", "metadata_reads", "bytes_read", "bitset_ops")


def time_query(
    store,
    query,
    indexes=None,
    runs: int = DEFAULT_RUNS,
    timeout: float = DEFAULT_TIMEOUT,
    plan=None,
) -> dict:
    """Run one query ``runs`` times; counters from a separate probe run.

    The probe run also samples allocator peak via tracemalloc, which is
    too slow to leave on while timing.  The timeout is a per-query soft
    budget checked between repetitions.
    """
    tracemalloc.start()
    rs = evaluate(store, query, plan=plan, indexes=indexes)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    out = {
        "rows": len(rs.rows),
        "peak_memory_estimate": int(peak),
        "timed_out": False,
    }
    for k in _COUNTER_KEYS:
        out[k] = rs.stats[k]
    walls = []
    started = time.perf_counter()
    for _ in range(runs):
        t0 = time.perf_counter()
        evaluate(store, query, plan=plan, indexes=indexes)
        walls.append(time.perf_counter() - t0)
        if time.perf_counter() - started > timeout:
            out["timed_out"] = True
            break
    out["wall_time"] = statistics.median(walls)
    out["wall_times"] = walls
    return out


def run_workload(
    store,
    runs: int = DEFAULT_RUNS,
    timeout: float = DEFAULT_TIMEOUT,
    names: list[str] | None = None,
) -> dict:
    """Run the workload with the skip index on and off; returns the report.

    Each query is planned once and the plan is shared by both
    configurations (the wandering does not depend on index presence),
    so the timings isolate delivery work from planner overhead.
    """
    schemas = {name: store.data(name).schema for name in store.datasets}
    indexes = {name: build_skip_tree(store.data(name)) for name in store.datasets}
    queries = WORKLOAD if names is None else [q for q in WORKLOAD if q.name in names]
    report = {"runs": runs, "timeout": timeout, "queries": []}
    for wq in queries:
        query = parse_query(schemas, wq.doc)
        t0 = time.perf_counter()
        plan = plan_query(store, query)
        plan_time = time.perf_counter() - t0
        report["queries"].append(
            {
                "name": wq.name,
                "models": wq.models,
                "depth": wq.depth,
                "level": wq.level,
                "plan_time": plan_time,
                "configs": {
                    "skiptree_on": time_query(store, query, indexes, runs, timeout, plan=plan),
                    "skiptree_off": time_query(store, query, None, runs, timeout, plan=plan),
                },
            }
        )
    return report


def report_csv(report: dict) -> str:
    cols = [
        "query",
        "models",
        "depth",
        "level",
        "config",
        "rows",
        "wall_time",
        "peak_memory_estimate",
        *_COUNTER_KEYS,
        "timed_out",
    ]
    lines = [",".join(cols)]
    for q in report["queries"]:
        for config, r in q["configs"].items():
            row = [
                q["name"],
                q["models"],
                str(q["depth"]),
                q["level"],
                config,
                str(r["rows"]),
                f"{r['wall_time']:.6f}",
                str(r["peak_memory_estimate"]),
                *(str(r[k]) for k in _COUNTER_KEYS),
                str(r["timed_out"]).lower(),
            ]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# micro-calibration for the simplified cost model


def _widest_column_node(schema, data):
    best, size = None, -1
    for n in schema.nodes:
        if n.kind is Kind.PRIMITIVE and n.id in data.columns:
            card = data.cardinality[n.id]
            if card > size:
                best, size = n, card
    return best, size


def calibrate(store, repeats: int = 5) -> dict:
    """Measure the simplified model's unit costs on this store.

    ``a`` is seconds per scanned value (full-column reads), ``bp``
    seconds per bitset delivery unit (a full leaf-to-root roll).  Both
    are medians over every schema and repetition.
    """
    a_samples = []
    bp_samples = []
    for name in store.datasets:
        data = store.data(name)
        schema = data.schema
        node, card = _widest_column_node(schema, data)
        if node is None or card == 0:
            continue
        for _ in range(repeats):
            t0 = time.perf_counter()
            store.scan_values(name, node.id, None)
            a_samples.append((time.perf_counter() - t0) / card)

        # deepest leaf-to-root delivery and its run-unit count
        units = 0
        walk = node
        while walk.parent is not None:
            parent = schema.node(walk.parent)
            units += data.cardinality[parent.id]
            walk = parent
        if units == 0:
            continue
        bits = ones_bits(card)
        for _ in range(repeats):
            t0 = time.perf_counter()
            deliver(store, name, node.id, schema.root.id, bits)
            bp_samples.append((time.perf_counter() - t0) / units)
    return {
        "a": statistics.median(a_samples) if a_samples else 1.0,
        "bp": statistics.median(bp_samples) if bp_samples else 1.0,
        "samples": {"a": len(a_samples), "bp": len(bp_samples)},
    }
