import json

import numpy as np
import pytest

from quest.errors import IngestError, StoreError
from quest.store import (
    CounterArray,
    Store,
    counter_range,
    estimate_selectivity,
    ingest_csv,
    ingest_graph_tables,
    ingest_json,
    open_store,
    write_store,
)

from conftest import (
    ADVERTISER,
    CAMPAIGN,
    CLICKS,
    EMAIL,
    PERSON,
    SOCIAL_EDGE_ROWS,
    SOCIAL_VERTEX_ROWS,
    WORD,
    WORDSET,
)


def test_golden_counters(ads_data):
    assert ads_data.counters[CAMPAIGN].boundaries.tolist() == [2, 3]
    assert ads_data.counters[WORD].boundaries.tolist() == [3, 5, 8]
    assert ads_data.counters[CLICKS].boundaries.tolist() == [1, 2, 4]
    assert ads_data.counters[PERSON].boundaries.tolist() == [2, 4, 5, 7]


def test_golden_cardinalities(ads_data):
    got = {nid: ads_data.cardinality[nid] for nid in range(7)}
    assert got == {ADVERTISER: 2, EMAIL: 2, CAMPAIGN: 3, WORDSET: 3, WORD: 8, CLICKS: 4, PERSON: 7}


def test_golden_values(ads_data):
    assert ads_data.columns[EMAIL].values.tolist() == ["e1", "e2"]
    assert ads_data.columns[WORD].values.tolist() == ["wA", "w2", "w3", "wA", "w5", "w6", "w7", "w8"]
    assert ads_data.columns[PERSON].values.tolist() == ["p1", "p2", "p3", "p4", "p5", "p6", "p7"]
    assert ads_data.columns[WORD].validity.all()


def test_counter_range(ads_data):
    clicks = ads_data.counters[CLICKS]
    assert counter_range(clicks, 0) == (0, 1)
    assert counter_range(clicks, 2) == (2, 4)
    assert clicks.child_cardinality == 4
    with pytest.raises(StoreError):
        counter_range(clicks, 3)


def test_counter_must_not_decrease():
    with pytest.raises(StoreError):
        CounterArray(node=0, boundaries=np.array([2, 1]))


def test_missing_fields_become_nulls(ads_schema):
    data = ingest_json([{"Campaign": []}], ads_schema)
    assert data.columns[EMAIL].validity.tolist() == [False]
    assert data.cardinality[CAMPAIGN] == 0


def test_type_errors_carry_path_and_ordinal(ads_schema):
    with pytest.raises(IngestError) as err:
        ingest_json([{"Email": "ok", "Campaign": []}, {"Email": 5, "Campaign": []}], ads_schema)
    msg = str(err.value)
    assert "Advertiser.Email" in msg and "#1" in msg


def test_unknown_field_rejected(ads_schema):
    with pytest.raises(IngestError) as err:
        ingest_json([{"Email": "e", "Campaigns": []}], ads_schema)
    assert "Campaigns" in str(err.value)


def test_array_where_scalar_expected(ads_schema):
    with pytest.raises(IngestError):
        ingest_json([{"Email": "e", "Campaign": {"WordSet": {}}}], ads_schema)


def test_table_ingest(people_data):
    assert people_data.cardinality[0] == 7
    assert people_data.columns[1].values.tolist()[:3] == ["p1", "p2", "p3"]
    assert people_data.columns[2].values.dtype == np.float64


def test_csv_ingest(tmp_path, people_schema):
    path = tmp_path / "people.csv"
    path.write_text("PID,credit_score,balance\na,700,10\nb,,20\n")
    data = ingest_csv(path, people_schema)
    assert data.columns[2].values.tolist() == [700.0, 0.0]
    assert data.columns[2].validity.tolist() == [True, False]


def test_csv_header_mismatch(tmp_path, people_schema):
    path = tmp_path / "people.csv"
    path.write_text("PID,score\na,1\n")
    with pytest.raises(IngestError):
        ingest_csv(path, people_schema)


def test_csv_bad_number(tmp_path, people_schema):
    path = tmp_path / "people.csv"
    path.write_text("PID,credit_score,balance\na,seven,10\n")
    with pytest.raises(IngestError) as err:
        ingest_csv(path, people_schema)
    assert "credit_score" in str(err.value)


def test_graph_ingest_golden(social_data):
    # know edges grouped by source: p1->[p2,p3], p2->[p3], p3->[p1]
    assert social_data.counters[3].boundaries.tolist() == [2, 3, 4]
    assert social_data.indicators[4].pointers.tolist() == [1, 2, 2, 0]
    # like edges: p1->m1, p2->m1, p3->m2
    assert social_data.counters[5].boundaries.tolist() == [1, 2, 3]
    assert social_data.indicators[6].pointers.tolist() == [0, 0, 1]
    assert social_data.cardinality[0] == 3 and social_data.cardinality[6] == 2
    assert social_data.columns[7].values.tolist() == ["x", "y"]


def test_graph_dangling_edge_rejected(social_schema):
    edges = {"know": [("p1", "zz")], "like": []}
    with pytest.raises(IngestError):
        ingest_graph_tables(SOCIAL_VERTEX_ROWS, edges, social_schema)


def test_graph_duplicate_vertex_id_rejected(social_schema):
    vertices = {
        "Person": SOCIAL_VERTEX_ROWS["Person"] + [{"id": "p1", "name": "dup", "city": "x"}],
        "Message": SOCIAL_VERTEX_ROWS["Message"],
    }
    with pytest.raises(IngestError):
        ingest_graph_tables(vertices, SOCIAL_EDGE_ROWS, social_schema)


def test_stats_mcv_and_selectivity(ads_data):
    stats = ads_data.stats[WORD]
    assert stats.cardinality == 8 and stats.distinct == 7
    assert stats.mcv["wA"] == pytest.approx(2 / 8)
    assert estimate_selectivity(stats, "=", "wA") == pytest.approx(0.25)
    # every distinct value fits in the common-value list, so estimates are exact
    assert estimate_selectivity(stats, "=", "w2") == pytest.approx(1 / 8)
    assert estimate_selectivity(stats, "!=", "wA") == pytest.approx(0.75)


def test_numeric_range_selectivity():
    from quest.store import PrimitiveColumn, build_stats

    values = np.arange(1000, dtype=np.float64)
    col = PrimitiveColumn(node=0, kind="number", values=values, validity=np.ones(1000, bool))
    stats = build_stats(col)
    assert estimate_selectivity(stats, "<", 250.0) == pytest.approx(0.25, abs=0.02)
    assert estimate_selectivity(stats, ">=", 900.0) == pytest.approx(0.10, abs=0.02)
    # equality on a value outside the common-value list falls back to 1/distinct
    assert estimate_selectivity(stats, "=", 123.0) == pytest.approx(1 / 1000)


def test_store_round_trip(tmp_path, multi_store):
    write_store(multi_store, tmp_path / "s1")
    loaded = open_store(tmp_path / "s1")
    for name, data in multi_store.datasets.items():
        other = loaded.data(name)
        assert other.cardinality == data.cardinality
        for nid, ctr in data.counters.items():
            assert other.counters[nid].boundaries.tolist() == ctr.boundaries.tolist()
        for nid, col in data.columns.items():
            assert other.columns[nid].values.tolist() == col.values.tolist()
            assert other.columns[nid].validity.tolist() == col.validity.tolist()
        for nid, ind in data.indicators.items():
            assert other.indicators[nid].pointers.tolist() == ind.pointers.tolist()
            assert other.indicators[nid].target == ind.target


def test_store_write_is_deterministic(tmp_path, multi_store):
    write_store(multi_store, tmp_path / "a")
    write_store(multi_store, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_reload_then_rewrite_is_byte_identical(tmp_path, multi_store):
    write_store(multi_store, tmp_path / "a")
    write_store(open_store(tmp_path / "a"), tmp_path / "b")
    for rel in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_corrupt_column_detected(tmp_path, ads_store):
    write_store(ads_store, tmp_path / "s")
    target = next((tmp_path / "s" / "ads").glob("*.col"))
    raw = bytearray(target.read_bytes())
    raw[20] ^= 0xFF
    target.write_bytes(bytes(raw))
    with pytest.raises(StoreError, match="checksum"):
        open_store(tmp_path / "s")


def test_open_store_requires_manifest(tmp_path):
    with pytest.raises(StoreError):
        open_store(tmp_path)


def test_manifest_is_stable_json(tmp_path, ads_store):
    write_store(ads_store, tmp_path / "s")
    doc = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert doc["schemas"]["ads"]["cardinalities"]["Advertiser.Campaign.Clicks.Person"] == 7


def test_io_counters(ads_store):
    io = ads_store.io
    ads_store.scan_values("ads", WORD)
    assert io.columns_read == 1 and io.bytes_read > 0
    ads_store.read_counter("ads", CAMPAIGN)
    assert io.metadata_reads == 1
    positions = np.array([0, 3])
    values, validity = ads_store.scan_values("ads", WORD, positions=positions)
    assert values.tolist() == ["wA", "wA"] and validity.all()
    assert io.columns_read == 2


def test_audit_mode_flags_reads_outside_context(ads_store):
    ads_store.io.audit_enabled = True
    bits = np.zeros(8, dtype=bool)
    bits[0] = True
    ads_store.scan_values("ads", WORD, positions=np.array([0, 3]), context_bits=bits)
    assert ads_store.io.audit_violations == 1
    assert ads_store.io.audit[-1]["violations"] == 1
