import random

import pytest

from quest.datagen import (
    PRESETS,
    generate,
    random_corpus,
    random_query_doc,
)
from quest.engine import evaluate
from quest.errors import QueryError
from quest.oracle import materialize_records, oracle_query
from quest.query import parse_query


def _widest_column(data):
    return max(col.values.shape[0] for col in data.columns.values())


def test_tiny_preset_scale():
    corpus = generate("tiny", seed=0)
    scale = PRESETS["tiny"]
    for name, data in corpus.datasets.items():
        assert 0.4 * scale <= _widest_column(data) <= 1.6 * scale, name


def test_small_preset_scale():
    corpus = generate("small", seed=0)
    scale = PRESETS["small"]
    assert 0.7 * scale <= _widest_column(corpus.datasets["org"]) <= 1.3 * scale
    assert 0.7 * scale <= _widest_column(corpus.datasets["ads"]) <= 1.3 * scale


def test_unknown_preset_rejected():
    with pytest.raises(ValueError, match="unknown preset"):
        generate("gigantic")


def test_generation_is_deterministic():
    a = generate("tiny", seed=3)
    b = generate("tiny", seed=3)
    assert a.records == b.records
    col_a = a.datasets["people"].columns
    col_b = b.datasets["people"].columns
    for nid in col_a:
        assert col_a[nid].values.tolist() == col_b[nid].values.tolist()


def _iter_rooms(docs):
    for d in docs:
        for r in d["Region"]:
            for s in r["Site"]:
                for b in s["Building"]:
                    for f in b["Floor"]:
                        yield from f["Room"]


def test_probe_counts_are_exact():
    corpus = generate("tiny", seed=1)

    word = corpus.probes["ads.Campaign.WordSet.Word"]
    words = [
        w
        for d in corpus.records["ads"]
        for c in d["Campaign"]
        for w in c["WordSet"]["Word"]
    ]
    assert words.count(word["value"]) == word["count"]
    assert len(words) == word["out_of"]

    sensor = corpus.probes["org.Region.Site.Building.Floor.Room.sensor"]
    values = [v for room in _iter_rooms(corpus.records["org"]) for v in room["sensor"]]
    assert values.count(sensor["value"]) == sensor["count"]
    assert len(values) == sensor["out_of"]

    credit = corpus.probes["people.credit_score"]
    n_credit = sum(1 for row in corpus.records["people"] if row["credit_score"] > credit["value"])
    assert n_credit == credit["count"]
    assert 0 < n_credit < len(corpus.records["people"])


@pytest.mark.parametrize("high,low", [(0.05, 0.10), (0.03, 0.20)])
def test_selectivity_knobs_measured_within_one_percent(high, low):
    corpus = generate("tiny", seed=0, high=high, low=low)
    words = [
        w
        for d in corpus.records["ads"]
        for c in d["Campaign"]
        for w in c["WordSet"]["Word"]
    ]
    assert abs(words.count("hotword") / len(words) - high) <= 0.01
    assert abs(words.count("warmword") / len(words) - low) <= 0.01

    segments = [row["segment"] for row in corpus.records["people"]]
    assert abs(segments.count("vip") / len(segments) - high) <= 0.01
    assert abs(segments.count("gold") / len(segments) - low) <= 0.01

    cities = [v["city"] for v in corpus.records["social"]["vertices"]["Person"]]
    assert abs(cities.count("hc") / len(cities) - high) <= 0.01
    assert abs(cities.count("wc") / len(cities) - low) <= 0.01

    rooms = list(_iter_rooms(corpus.records["org"]))
    sensors = [v for room in rooms for v in room["sensor"]]
    assert abs(sensors.count(999.0) / len(sensors) - high) <= 0.01
    assert abs(sensors.count(555.0) / len(sensors) - low) <= 0.01
    labels = [room["label"] for room in rooms]
    assert abs(labels.count("warmroom") / len(labels) - low) <= 0.01


def test_keys_line_up_across_models():
    corpus = generate("tiny", seed=0)
    pids = {row["PID"] for row in corpus.records["people"]}
    for room in _iter_rooms(corpus.records["org"]):
        assert room["owner"] in pids
    for d in corpus.records["ads"]:
        for c in d["Campaign"]:
            for p in c["Clicks"]["Person"]:
                assert p in pids
    for v in corpus.records["social"]["vertices"]["Person"]:
        assert v["pid"] in pids


def test_preset_round_trip_structural():
    corpus = generate("tiny", seed=5)
    store = corpus.store()

    assert materialize_records(store, "ads") == corpus.records["ads"]
    assert materialize_records(store, "org") == corpus.records["org"]
    assert materialize_records(store, "people") == corpus.records["people"]

    graph = corpus.records["social"]
    got = materialize_records(store, "social")
    person_off = {v["id"]: i for i, v in enumerate(graph["vertices"]["Person"])}
    message_off = {v["id"]: i for i, v in enumerate(graph["vertices"]["Message"])}
    want_vertices = {
        label: [{k: v for k, v in row.items() if k != "id"} for row in rows]
        for label, rows in graph["vertices"].items()
    }
    assert got["vertices"] == want_vertices
    assert got["edges"]["know"] == [
        (person_off[a], person_off[b], {}) for a, b in graph["edges"]["know"]
    ]
    assert got["edges"]["like"] == [
        (person_off[a], message_off[b], {}) for a, b in graph["edges"]["like"]
    ]


def test_random_corpus_owner_keys_unique():
    rng = random.Random(11)
    for _ in range(5):
        corpus = random_corpus(rng)
        owners = [
            room["owner"]
            for room in _iter_rooms(corpus.records["org"])
            if "owner" in room
        ]
        assert len(owners) == len(set(owners))


def test_random_corpus_shapes_vary():
    rng = random.Random(2)
    counts = {len(random_corpus(rng).records["org"]) for _ in range(6)}
    assert len(counts) > 1


def test_random_query_docs_mostly_parse():
    rng = random.Random(23)
    corpus = random_corpus(rng)
    schemas = {name: data.schema for name, data in corpus.datasets.items()}
    ok = 0
    n = 200
    for _ in range(n):
        try:
            parse_query(schemas, random_query_doc(rng))
            ok += 1
        except QueryError:
            pass
    assert ok >= 0.85 * n


def test_random_pairs_agree_with_oracle():
    rng = random.Random(31)
    corpus = random_corpus(rng)
    store = corpus.store()
    schemas = {name: data.schema for name, data in corpus.datasets.items()}
    checked = 0
    while checked < 30:
        try:
            query = parse_query(schemas, random_query_doc(rng))
        except QueryError:
            continue
        key = lambda r: tuple((v is None, str(type(v)), v) for v in r)
        assert sorted(evaluate(store, query).rows, key=key) == sorted(
            oracle_query(store, query), key=key
        )
        checked += 1
