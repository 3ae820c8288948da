import json
import random
import threading

import pytest

from triplex.store import CappedCollection, DocStore, NoSuchCollection, StoreError

from oracles import CappedListModel


def make_coll(threshold, **kw):
    return CappedCollection("t", threshold, **kw)


class TestCappedWindow:
    def test_fifo_eviction(self):
        coll = make_coll(5)
        for i in range(6):
            coll.insert({"i": i})
        assert [d.seq for d in coll.get_all()] == [2, 3, 4, 5, 6]

    def test_degenerate_window(self):
        coll = make_coll(1)
        coll.insert("first")
        coll.insert("second")
        docs = coll.get_all()
        assert len(docs) == 1
        assert docs[0].body == "second"

    def test_6000_inserts_at_threshold_3000(self):
        coll = make_coll(3000)
        for i in range(6000):
            coll.insert(i)
        assert coll.count() == 3000
        assert coll.get_all()[0].seq == 3001
        assert coll.total_inserted() == 6000

    def test_threshold_must_be_positive(self):
        with pytest.raises(ValueError):
            make_coll(0)


class TestBasicOps:
    def test_empty_get_all(self):
        assert make_coll(10).get_all() == []

    def test_insertion_order_kept(self):
        coll = make_coll(10)
        coll.insert("A")
        coll.insert("B")
        assert [d.body for d in coll.get_all()] == ["A", "B"]

    def test_delete_all_returns_count(self):
        coll = make_coll(10)
        for i in range(3):
            coll.insert(i)
        assert coll.delete_all() == 3
        assert coll.get_all() == []
        assert coll.delete_all() == 0

    def test_seq_monotone_across_delete_all(self):
        coll = make_coll(10)
        first = coll.insert("a")
        coll.delete_all()
        second = coll.insert("b")
        assert second > first

    def test_count_matches_get_all(self):
        coll = make_coll(3)
        for i in range(7):
            coll.insert(i)
            assert coll.count() == len(coll.get_all())


class TestDocStore:
    def test_create_and_use(self):
        store = DocStore()
        store.create_collection("hr", threshold=4)
        store.insert("hr", {"v": 1})
        assert store.count("hr") == 1
        assert store.get_all("hr")[0].body == {"v": 1}
        assert store.delete_all("hr") == 1

    def test_unknown_collection(self):
        store = DocStore()
        for op in (
            lambda: store.insert("nope", 1),
            lambda: store.get_all("nope"),
            lambda: store.delete_all("nope"),
            lambda: store.count("nope"),
        ):
            with pytest.raises(NoSuchCollection):
                op()

    def test_duplicate_create_rejected(self):
        store = DocStore()
        store.create_collection("x", 1)
        with pytest.raises(StoreError):
            store.create_collection("x", 1)


class TestOracleEquivalence:
    def test_randomized_ops_match_list_model(self):
        rng = random.Random(99)
        coll = make_coll(50)
        model = CappedListModel(50)
        for step in range(10_000):
            roll = rng.random()
            if roll < 0.70:
                body = rng.randint(0, 1_000_000)
                assert coll.insert(body) == model.insert(body)
            elif roll < 0.90:
                got = [(d.seq, d.body) for d in coll.get_all()]
                assert got == model.get_all()
            elif roll < 0.97:
                assert coll.count() == model.count()
            else:
                assert coll.delete_all() == model.delete_all()
        assert [(d.seq, d.body) for d in coll.get_all()] == model.get_all()


class TestConcurrency:
    def test_window_bound_under_concurrent_writers(self):
        coll = make_coll(100)
        writers = 8
        per_writer = 2000
        stop = threading.Event()
        violations = []

        def write(base):
            for i in range(per_writer):
                coll.insert({"w": base, "i": i})

        def watch():
            while not stop.is_set():
                docs = coll.get_all()
                seqs = [d.seq for d in docs]
                if len(docs) > coll.threshold:
                    violations.append(f"count {len(docs)}")
                if any(b <= a for a, b in zip(seqs, seqs[1:])):
                    violations.append(f"non-monotone {seqs}")

        threads = [threading.Thread(target=write, args=(w,)) for w in range(writers)]
        watcher = threading.Thread(target=watch)
        watcher.start()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        stop.set()
        watcher.join()

        assert violations == []
        assert coll.count() == 100
        assert coll.total_inserted() == writers * per_writer
        seqs = [d.seq for d in coll.get_all()]
        assert seqs == list(range(writers * per_writer - 99, writers * per_writer + 1))


class TestSnapshot:
    def test_snapshot_file_format(self, tmp_path):
        coll = make_coll(10, clock_ms=lambda: 42)
        coll.insert({"value": 0.5})
        coll.insert([1, 2])
        path = tmp_path / "snap.jsonl"
        coll.write_snapshot(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first == {"seq": 1, "t_ms": 42, "body": {"value": 0.5}}
        assert json.loads(lines[1])["body"] == [1, 2]
