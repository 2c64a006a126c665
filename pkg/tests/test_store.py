import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flintlet.errors import NoSuchObjectError, RangeOutOfBoundsError
from flintlet.store import ObjectRange, ObjectRef

REF = ObjectRef("b", "k")


def test_put_then_get_roundtrip(any_store):
    any_store.put_object(REF, b"abc")
    assert any_store.get_range(ObjectRange(REF, 0, 3)) == b"abc"


def test_overwrite_second_value_wins(any_store):
    any_store.put_object(REF, b"first")
    any_store.put_object(REF, b"second")
    assert any_store.get_object(REF) == b"second"


def test_put_empty_body(any_store):
    any_store.put_object(REF, b"")
    assert any_store.object_size(REF) == 0
    assert any_store.get_range(ObjectRange(REF, 0, 0)) == b""


def test_get_range_middle(any_store):
    any_store.put_object(REF, b"hello")
    assert any_store.get_range(ObjectRange(REF, 1, 3)) == b"ell"


def test_get_range_empty(any_store):
    any_store.put_object(REF, b"hello")
    assert any_store.get_range(ObjectRange(REF, 0, 0)) == b""


def test_get_range_past_end(any_store):
    any_store.put_object(REF, b"hello")
    with pytest.raises(RangeOutOfBoundsError):
        any_store.get_range(ObjectRange(REF, 3, 10))


def test_get_missing_object(any_store):
    with pytest.raises(NoSuchObjectError):
        any_store.get_object(ObjectRef("b", "nope"))


def test_list_prefix(any_store):
    for key in ("a/1", "a/2", "b/1"):
        any_store.put_object(ObjectRef("bk", key), b"xy")
    assert any_store.list_prefix("bk", "a/") == [("a/1", 2), ("a/2", 2)]
    assert any_store.list_prefix("bk", "zzz") == []
    assert any_store.list_prefix("bk", "") == [("a/1", 2), ("a/2", 2), ("b/1", 2)]


def test_list_prefix_sizes_match_reads(any_store):
    any_store.put_object(ObjectRef("bk", "x"), b"12345")
    [(key, size)] = any_store.list_prefix("bk", "x")
    assert size == len(any_store.get_object(ObjectRef("bk", key)))


@settings(max_examples=50, deadline=None)
@given(
    data=st.binary(min_size=0, max_size=200),
    cut=st.integers(min_value=0, max_value=200),
)
def test_adjacent_ranges_concatenate(data, cut):
    from flintlet.store import MemoryStore

    memory_store = MemoryStore()
    cut = min(cut, len(data))
    memory_store.put_object(REF, data)
    left = memory_store.get_range(ObjectRange(REF, 0, cut))
    right = memory_store.get_range(ObjectRange(REF, cut, len(data) - cut))
    assert left + right == memory_store.get_range(ObjectRange(REF, 0, len(data)))


def test_concurrent_put_is_atomic(any_store):
    blobs = [bytes([i]) * 4096 for i in range(8)]

    def writer(blob):
        for _ in range(20):
            any_store.put_object(REF, blob)

    threads = [threading.Thread(target=writer, args=(b,)) for b in blobs]
    any_store.put_object(REF, blobs[0])
    for t in threads:
        t.start()
    for _ in range(50):
        data = any_store.get_object(REF)
        assert data in blobs  # old or new, never a mix
    for t in threads:
        t.join()
