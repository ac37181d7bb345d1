"""Payload delivery: moving bitsets between nested layers.

Bitsets are plain numpy boolean arrays, one bit per instance of a node.  The
four kernels below are the only ways bits ever change address space:

* `roll_up` / `drill_down` cross a one-to-many boundary (a counter),
* `indicator_gather` / `indicator_scatter` cross a many-to-one pointer array.

`deliver` routes a bitset from one node to another through their lowest
common ancestor, either layer by layer (reading each boundary array on the
way) or through a skip index that provides precomputed multi-layer mappings.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DeliveryError
from .schema import Link, Schema

__all__ = [
    "roll_up",
    "drill_down",
    "indicator_gather",
    "indicator_scatter",
    "new_bits",
    "ones_bits",
    "positions_of",
    "deliver",
    "DeliveryTrace",
]


def new_bits(n: int, positions=None) -> np.ndarray:
    bits = np.zeros(int(n), dtype=bool)
    if positions is not None:
        bits[np.asarray(positions, dtype=np.int64)] = True
    return bits


def ones_bits(n: int) -> np.ndarray:
    return np.ones(int(n), dtype=bool)


def positions_of(bits: np.ndarray) -> np.ndarray:
    return np.flatnonzero(bits)


def roll_up(bits: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """Child bits -> parent bits: a parent is set iff any of its children is.

    `boundaries[i]` is the exclusive end of parent i's children, so parents
    with empty ranges come out unset.
    """
    boundaries = np.asarray(boundaries, dtype=np.int64)
    if boundaries.size == 0:
        return np.zeros(0, dtype=bool)
    if bits.shape[0] != int(boundaries[-1]):
        raise DeliveryError(
            f"roll_up: bitset length {bits.shape[0]} != counter end {int(boundaries[-1])}"
        )
    cum = np.concatenate(([0], np.cumsum(bits, dtype=np.int64)))
    starts = np.concatenate(([0], boundaries[:-1]))
    return (cum[boundaries] - cum[starts]) > 0


def drill_down(bits: np.ndarray, boundaries: np.ndarray) -> np.ndarray:
    """Parent bits -> child bits: every child inherits its parent's bit."""
    boundaries = np.asarray(boundaries, dtype=np.int64)
    if bits.shape[0] != boundaries.size:
        raise DeliveryError(
            f"drill_down: bitset length {bits.shape[0]} != counter length {boundaries.size}"
        )
    counts = np.diff(boundaries, prepend=0)
    return np.repeat(bits, counts)


def indicator_gather(target_bits: np.ndarray, pointers: np.ndarray) -> np.ndarray:
    """Target bits -> pointer-side bits: entry i takes target_bits[pointers[i]]."""
    return target_bits[np.asarray(pointers, dtype=np.int64)]


def indicator_scatter(source_bits: np.ndarray, pointers: np.ndarray, target_cardinality: int) -> np.ndarray:
    """Pointer-side bits -> target bits: a target is set iff some set entry points at it."""
    pointers = np.asarray(pointers, dtype=np.int64)
    if source_bits.shape[0] != pointers.shape[0]:
        raise DeliveryError(
            f"indicator_scatter: bitset length {source_bits.shape[0]} != pointer count {pointers.shape[0]}"
        )
    out = np.zeros(int(target_cardinality), dtype=bool)
    out[pointers[source_bits]] = True
    return out


@dataclass
class DeliveryTrace:
    src: int
    dst: int
    lca: int
    steps: int = 0
    path: list = field(default_factory=list)  # (node_id, op) pairs, in order


def _tree_lca(schema: Schema, a: int, b: int) -> int:
    if a == b:
        return a
    seen = {a}
    cur = a
    while schema.node(cur).parent is not None:
        cur = schema.node(cur).parent
        seen.add(cur)
    cur = b
    while cur not in seen:
        cur = schema.node(cur).parent
    return cur


def _climb(store, schema_name: str, schema: Schema, node_id: int, bits: np.ndarray, trace: DeliveryTrace):
    """One layered step up: move bits from `node_id`'s space to its parent's."""
    node = schema.node(node_id)
    if node.link is Link.COUNTER:
        ctr = store.read_counter(schema_name, node_id)
        bits = roll_up(bits, ctr.boundaries)
        store.io.bitset_ops += 1
        trace.path.append((node_id, "roll_up"))
        trace.steps += 1
    elif node.link is Link.INDICATOR:
        ind = store.read_indicator(schema_name, node_id)
        bits = indicator_gather(bits, ind.pointers)
        store.io.bitset_ops += 1
        trace.path.append((node_id, "gather"))
        trace.steps += 1
    else:
        trace.path.append((node_id, "identity"))
    return bits


def _descend(store, schema_name: str, schema: Schema, node_id: int, bits: np.ndarray, trace: DeliveryTrace):
    """One layered step down: move bits from the parent's space into `node_id`'s."""
    node = schema.node(node_id)
    if node.link is Link.COUNTER:
        ctr = store.read_counter(schema_name, node_id)
        bits = drill_down(bits, ctr.boundaries)
        store.io.bitset_ops += 1
        trace.path.append((node_id, "drill_down"))
        trace.steps += 1
    elif node.link is Link.INDICATOR:
        ind = store.read_indicator(schema_name, node_id)
        bits = indicator_scatter(bits, ind.pointers, ind.target_cardinality)
        store.io.bitset_ops += 1
        trace.path.append((node_id, "scatter"))
        trace.steps += 1
    else:
        trace.path.append((node_id, "identity"))
    return bits


def deliver(store, schema_name: str, src: int, dst: int, bits: np.ndarray, index=None):
    """Move `bits` from node `src`'s instance space to node `dst`'s.

    With `index` (an object exposing ``find_lca``) the route uses precomputed
    skip mappings; otherwise it climbs and descends one boundary at a time.
    Returns ``(bits, trace)``.
    """
    data = store.data(schema_name)
    schema = data.schema
    if bits.shape[0] != data.cardinality[src]:
        raise DeliveryError(
            f"deliver: bitset length {bits.shape[0]} != cardinality "
            f"{data.cardinality[src]} of {schema.path_of(src)}"
        )
    if src == dst:
        return bits, DeliveryTrace(src=src, dst=dst, lca=src)

    if index is not None:
        res = index.find_lca(src, dst)
        trace = DeliveryTrace(src=src, dst=dst, lca=res.lca, steps=res.steps)
        for node_id, level, mapping in res.src_jumps:
            if mapping.nbytes:
                store.io.record_metadata(f"{schema_name}/skip/{schema.path_of(node_id)}#{level}", mapping.nbytes)
                store.io.bitset_ops += 1
            bits = mapping.up(bits)
            trace.path.append((node_id, f"skip_up[{level}]"))
        for node_id, level, mapping in reversed(res.dst_jumps):
            if mapping.nbytes:
                store.io.record_metadata(f"{schema_name}/skip/{schema.path_of(node_id)}#{level}", mapping.nbytes)
                store.io.bitset_ops += 1
            bits = mapping.down(bits)
            trace.path.append((node_id, f"skip_down[{level}]"))
        return bits, trace

    lca = _tree_lca(schema, src, dst)
    trace = DeliveryTrace(src=src, dst=dst, lca=lca)
    cur = src
    while cur != lca:
        bits = _climb(store, schema_name, schema, cur, bits, trace)
        cur = schema.node(cur).parent
    down_path = []
    cur = dst
    while cur != lca:
        down_path.append(cur)
        cur = schema.node(cur).parent
    for node_id in reversed(down_path):
        bits = _descend(store, schema_name, schema, node_id, bits, trace)
    return bits, trace
