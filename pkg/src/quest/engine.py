"""Plan-driven query evaluation over the columnar store.

The evaluator walks the plan's filter order with one running bitset.
Between stops the bitset is delivered along the composite tree; at each
filter stop the engine scans the column at surviving positions only and
keeps the post-filter bits around.  Whenever a later leg descends, every
saved bitset whose meet with the destination lies below the leg's apex
is delivered in and ANDed, so the running context never widens past a
restriction that was already paid for.  Join edges are crossed through a
small value-match index built from the two key columns; graph patterns
run a forward reachability pass and a backward existential pass over the
declared hops.  Fetched rows are regenerated functionally from the
deepest fetched node.
"""

from __future__ import annotations

import operator
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .delivery import deliver, indicator_gather, indicator_scatter, ones_bits, positions_of
from .errors import QueryError
from .optimizer import WanderingSequence, plan_query
from .query import JoinSpec, Key, Predicate, Query, parse_query
from .schema import Kind, Link
from .store import Store

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _match(vals: np.ndarray, op: str, value: Any) -> np.ndarray:
    if op == "in":
        return np.isin(vals, np.asarray(value, dtype=vals.dtype))
    return np.asarray(_OPS[op](vals, value), dtype=bool)


def _scalar(value: Any) -> Any:
    return value.item() if isinstance(value, np.generic) else value


def _pyval(value: Any, ok: bool) -> Any:
    return _scalar(value) if ok else None


@dataclass
class ResultSet:
    rows: list[tuple]
    stats: dict
    plan: WanderingSequence | None = None
    query: Query | None = None

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)


def build_join_indicator(left_vals, left_valid, right_vals, right_valid):
    """First-match pointers from right key instances into the left column.

    Returns ``(pointers, miss)``: for each right instance the position of
    the first valid left instance with the same value, and a mask of the
    rights that matched nothing (their pointer slot is dead).
    """
    first: dict[Any, int] = {}
    for i in range(len(left_vals)):
        if left_valid[i]:
            first.setdefault(_scalar(left_vals[i]), i)
    n = len(right_vals)
    pointers = np.zeros(n, dtype=np.int64)
    miss = np.ones(n, dtype=bool)
    for r in range(n):
        if not right_valid[r]:
            continue
        hit = first.get(_scalar(right_vals[r]))
        if hit is not None:
            pointers[r] = hit
            miss[r] = False
    return pointers, miss


class JoinIndex:
    """Value-match index for one join, built from the two key columns.

    Holds the full match relation as COO pairs (for bitset crossings in
    either direction), the first-match pointer surface, and a per-value
    lookup used when rows are regenerated across the join.
    """

    def __init__(self, store: Store, join: JoinSpec):
        self.join = join
        lname, lnode = join.left.schema, join.left.node
        rname, rnode = join.right.schema, join.right.node
        lvals, lvalid = store.scan_values(lname, lnode)
        rvals, rvalid = store.scan_values(rname, rnode)
        self.left_cardinality = len(lvals)
        self.right_cardinality = len(rvals)
        groups: dict[Any, list[int]] = {}
        for i in np.flatnonzero(lvalid):
            groups.setdefault(_scalar(lvals[i]), []).append(int(i))
        self.lookup = {v: np.asarray(p, dtype=np.int64) for v, p in groups.items()}
        self.pointers_first, self.miss = build_join_indicator(lvals, lvalid, rvals, rvalid)
        self.right_values = rvals
        lp: list[np.ndarray] = []
        rp: list[np.ndarray] = []
        for r in np.flatnonzero(rvalid):
            hit = self.lookup.get(_scalar(rvals[r]))
            if hit is None:
                continue
            lp.append(hit)
            rp.append(np.full(hit.size, r, dtype=np.int64))
        self.l_pair = np.concatenate(lp) if lp else np.empty(0, dtype=np.int64)
        self.r_pair = np.concatenate(rp) if rp else np.empty(0, dtype=np.int64)
        self.nbytes = 8 * (self.l_pair.size + self.r_pair.size)
        lpath = store.schema(lname).path_of(lnode)
        rpath = store.schema(rname).path_of(rnode)
        self._io_key = f"{lname}.{lpath}~{rname}.{rpath}#join"

    def _record(self, store: Store) -> None:
        store.io.record_metadata(self._io_key, self.nbytes)
        store.io.bitset_ops += 1

    def up(self, store: Store, key_bits: np.ndarray) -> np.ndarray:
        """Right-key bits to left bits: lefts with a set matching right."""
        self._record(store)
        out = np.zeros(self.left_cardinality, dtype=bool)
        if self.l_pair.size:
            out[self.l_pair[key_bits[self.r_pair]]] = True
        return out

    def down(self, store: Store, left_bits: np.ndarray) -> np.ndarray:
        """Left bits to right-key bits: member rights whose left is set."""
        self._record(store)
        out = np.zeros(self.right_cardinality, dtype=bool)
        if self.r_pair.size:
            out[self.r_pair[left_bits[self.l_pair]]] = True
        return out


class _Evaluation:
    def __init__(self, store: Store, query: Query, plan: WanderingSequence, indexes: Mapping):
        self.store = store
        self.q = query
        self.plan = plan
        self.tree = query.composite
        self.indexes = dict(indexes)
        self.saved: dict[Key, np.ndarray] = {}
        self._joins: dict[str, JoinIndex] = {}

    # -- plumbing -------------------------------------------------------------

    def _card(self, key: Key) -> int:
        return self.store.data(key[0]).cardinality[key[1]]

    def _deliver(self, name: str, src: int, dst: int, bits: np.ndarray) -> np.ndarray:
        if src == dst:
            return bits
        out, _ = deliver(self.store, name, src, dst, bits, index=self.indexes.get(name))
        return out

    def join_index(self, join: JoinSpec) -> JoinIndex:
        guest = join.right.schema
        ji = self._joins.get(guest)
        if ji is None:
            ji = self._joins[guest] = JoinIndex(self.store, join)
        return ji

    # -- bitset movement ------------------------------------------------------

    def _segment(self, name: str, bits: np.ndarray, src: int, dst: int, fresh: bool = False) -> np.ndarray:
        """Move bits src -> dst inside one schema, re-imposing saved bits.

        A roll-up keeps every restriction the bits already carry, but a
        drill-down only keeps them at the apex's granularity.  Any saved
        bitset whose meet with the destination sits strictly below the
        apex is delivered to the destination and ANDed back in.  Bits
        that just crossed a join edge (``fresh``) carry nothing about
        this schema yet, so every saved site here is re-imposed.
        """
        out = self._deliver(name, src, dst, bits)
        dkey = (name, dst)
        # drilling into a shared vertex record merges the walks of every
        # host that reaches it, so instance lineage is lost and the apex
        # rule below no longer holds; re-impose everything instead
        sch = self.tree.schemas[name]
        mixes = any(
            sch.node(k[1]).link is Link.INDICATOR
            for k in self.tree.route((name, src), dkey)[1:]
        )
        apex_depth = self.tree.depth(self.tree.lca((name, src), dkey))
        for fkey, fbits in list(self.saved.items()):
            if fkey[0] != name or fkey == (name, src):
                continue
            if (
                not fresh
                and not mixes
                and self.tree.depth(self.tree.lca(fkey, dkey)) <= apex_depth
            ):
                continue
            out = out & self._deliver(name, fkey[1], dst, fbits)
            self.store.io.bitset_ops += 1
        return out

    def _cross_down(self, join: JoinSpec, left_bits: np.ndarray) -> np.ndarray:
        ji = self.join_index(join)
        key_bits = ji.down(self.store, left_bits)
        rkey = (join.right.schema, join.right.node)
        prev = self.saved.get(rkey)
        if prev is not None:
            key_bits = key_bits & prev
            self.store.io.bitset_ops += 1
        self.saved[rkey] = key_bits
        return key_bits

    def _cross_up(self, join: JoinSpec, root_bits: np.ndarray, root_node: int) -> np.ndarray:
        guest = join.right.schema
        key_bits = self._segment(guest, root_bits, root_node, join.right.node)
        ji = self.join_index(join)
        left_bits = ji.up(self.store, key_bits)
        lkey = (join.left.schema, join.left.node)
        prev = self.saved.get(lkey)
        if prev is not None:
            left_bits = left_bits & prev
            self.store.io.bitset_ops += 1
        self.saved[lkey] = left_bits
        return left_bits

    def _move(self, bits: np.ndarray, src: Key, dst: Key) -> np.ndarray:
        if src == dst:
            return bits
        route = self.tree.route(src, dst)
        runs: list[list[Key]] = []
        for key in route:
            if runs and runs[-1][0][0] == key[0]:
                runs[-1].append(key)
            else:
                runs.append([key])
        cur = runs[0][0][1]
        fresh = False
        for t, run in enumerate(runs):
            name = run[0][0]
            bits = self._segment(name, bits, cur, run[-1][1], fresh=fresh)
            if t + 1 == len(runs):
                break
            nxt = runs[t + 1][0]
            if self.tree.parent_of(nxt) == run[-1]:
                join = self.tree.join_for[nxt[0]]
                bits = self._cross_down(join, bits)
                cur = join.right.node
            else:
                join = self.tree.join_for[name]
                bits = self._cross_up(join, bits, run[-1][1])
                cur = nxt[1]
            fresh = True
        return bits

    # -- filter stops ---------------------------------------------------------

    def _scan_mask(self, name: str, node: int, ctx: np.ndarray, preds: list[Predicate]) -> np.ndarray:
        positions = positions_of(ctx)
        if positions.size == 0:
            return np.zeros_like(ctx)
        whole = positions.size == ctx.size
        vals, valid = self.store.scan_values(
            name, node, None if whole else positions, context_bits=ctx
        )
        mask = valid.copy()
        for pred in preds:
            mask &= _match(vals, pred.op, pred.value)
        self.store.io.bitset_ops += 1
        if whole:
            return mask.astype(bool, copy=False)
        out = np.zeros_like(ctx)
        out[positions[mask]] = True
        return out

    def _pattern_bits(self, gp, anchor_bits: np.ndarray) -> np.ndarray:
        """Bits at the anchor that start at least one matching walk."""
        name = gp.schema
        sch = self.tree.schemas[name]
        leafs = [h.node for h in gp.hops]
        targets = [sch.node(ln).target for ln in leafs]
        sources = [gp.anchor] + targets[:-1]

        cand = [anchor_bits]
        inds = []
        for k, ln in enumerate(leafs):
            leaf_bits = self._deliver(name, sources[k], ln, cand[k])
            ind = self.store.read_indicator(name, ln)
            inds.append(ind)
            cand.append(indicator_scatter(leaf_bits, ind.pointers, ind.target_cardinality))
            self.store.io.bitset_ops += 1

        by_depth: dict[int, dict[int, list[Predicate]]] = {}
        for idx in gp.members:
            pred = self.q.filters[idx]
            depth = len(pred.site.chain)
            by_depth.setdefault(depth, {}).setdefault(pred.site.node, []).append(pred)

        f = cand[-1]
        for k in range(len(leafs), 0, -1):
            for node_id, preds in (by_depth.get(k) or {}).items():
                ctx = self._deliver(name, targets[k - 1], node_id, f)
                site_bits = self._scan_mask(name, node_id, ctx, preds)
                f = f & self._deliver(name, node_id, targets[k - 1], site_bits)
                self.store.io.bitset_ops += 1
            edge_bits = indicator_gather(f, inds[k - 1].pointers)
            self.store.io.bitset_ops += 1
            f = self._deliver(name, leafs[k - 1], sources[k - 1], edge_bits) & cand[k - 1]
            self.store.io.bitset_ops += 1
        return f

    # -- main walk ------------------------------------------------------------

    def _seed(self, key: Key) -> np.ndarray:
        """All-ones bits at ``key``, minus instances no walk can reach.

        Vertex records nobody points at exist in the columns but are not
        part of any walk, so a site below one is seeded from the root and
        drilled into.  Everywhere else the full column is reachable.
        """
        name = key[0]
        sch = self.tree.schemas[name]
        root = (name, sch.root.id)
        if key != root and any(
            sch.node(k[1]).link is Link.INDICATOR
            for k in self.tree.route(root, key)
        ):
            return self._move(ones_bits(self._card(root)), root, key)
        return ones_bits(self._card(key))

    def run(self) -> list[tuple]:
        bits: np.ndarray | None = None
        cur: Key | None = None
        for f in self.plan.order:
            if cur is None:
                bits = self._seed(f.key)
            else:
                bits = self._move(bits, cur, f.key)
            cur = f.key
            if f.kind == "scan":
                preds = [self.q.filters[i] for i in f.predicates]
                bits = self._scan_mask(cur[0], cur[1], bits, preds)
            elif f.kind == "pattern":
                bits = bits & self._pattern_bits(self.q.graph_paths[f.graph_path], bits)
                self.store.io.bitset_ops += 1
            self.saved[cur] = bits
            if not bits.any():
                return []
        site = self.q.deepest_fetch
        dkey = (site.schema, site.node)
        bits = self._seed(dkey) if cur is None else self._move(bits, cur, dkey)
        return self._rows(bits, dkey)

    # -- row regeneration -----------------------------------------------------

    def _rows(self, bits: np.ndarray, dkey: Key) -> list[tuple]:
        positions = positions_of(bits)
        if positions.size == 0:
            return []
        columns = []
        for spec in self.q.fetch:
            fkey = (spec.site.schema, spec.site.node)
            if fkey == dkey:
                idxs, ctx = positions, bits
            else:
                ctx = self._move(bits, dkey, fkey)
                idxs = self._map_positions(positions, dkey, fkey)
            vals, valid = self.store.scan_values(fkey[0], fkey[1], idxs, context_bits=ctx)
            columns.append([_pyval(v, ok) for v, ok in zip(vals, valid)])
        return [tuple(row) for row in zip(*columns)]

    def _map_positions(self, positions: np.ndarray, src: Key, dst: Key) -> np.ndarray:
        """Map instance indexes along the route; every step is functional."""
        route = self.tree.route(src, dst)
        idxs = positions.astype(np.int64, copy=True)
        for a, b in zip(route, route[1:]):
            if self.tree.parent_of(a) == b:
                if a[0] != b[0]:
                    idxs = self._map_join_up(idxs, a[0])
                    continue
                node = self.tree.node(a)
                if node.link is Link.COUNTER:
                    ctr = self.store.read_counter(a[0], a[1])
                    idxs = np.searchsorted(ctr.boundaries, idxs, side="right").astype(np.int64)
            else:
                node = self.tree.node(b)
                if node.kind is Kind.RECORD and node.link is Link.INDICATOR:
                    ind = self.store.read_indicator(b[0], b[1])
                    idxs = ind.pointers[idxs].astype(np.int64)
        return idxs

    def _map_join_up(self, idxs: np.ndarray, guest: str) -> np.ndarray:
        join = self.tree.join_for[guest]
        ji = self.join_index(join)
        lkey = (join.left.schema, join.left.node)
        valid_left = self.saved.get(lkey)
        out = np.empty(idxs.size, dtype=np.int64)
        for i, r in enumerate(idxs):
            val = _scalar(ji.right_values[r])
            cand = ji.lookup.get(val)
            if cand is not None and valid_left is not None:
                cand = cand[valid_left[cand]]
            if cand is None or cand.size != 1:
                raise QueryError(
                    f"join key value {val!r} does not determine a single host instance"
                )
            out[i] = cand[0]
        return out


def evaluate(
    store: Store,
    query: Query,
    plan: WanderingSequence | None = None,
    indexes: Mapping | None = None,
    audit: bool = False,
    reset_io: bool = True,
) -> ResultSet:
    """Run a parsed query and return its rows plus the IO it cost.

    ``indexes`` maps schema names to skip-trees; deliveries in a mapped
    schema jump levels instead of touching every counter on the path.
    With ``audit`` every column read is checked against the bitset the
    engine claimed, and violations are counted in the stats.
    """
    if plan is None:
        plan = plan_query(store, query)
    if reset_io:
        store.io.reset()
    prior = store.io.audit_enabled
    store.io.audit_enabled = audit or prior
    start = time.perf_counter()
    try:
        rows = _Evaluation(store, query, plan, indexes or {}).run()
    finally:
        store.io.audit_enabled = prior
    stats = dict(store.io.snapshot())
    stats["wall_time"] = time.perf_counter() - start
    return ResultSet(rows=rows, stats=stats, plan=plan, query=query)


def run_query(store: Store, doc: Any, **kwargs) -> ResultSet:
    """Parse a query document against the store's schemas and evaluate it."""
    schemas = {name: data.schema for name, data in store.datasets.items()}
    return evaluate(store, parse_query(schemas, doc), **kwargs)
