import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flintlet.errors import MessageTooLargeError, NoSuchQueueError, QueueExistsError
from flintlet.queue import (
    BatchHeader,
    MessageBatch,
    QueueConfig,
    QueueService,
    decode_records,
    encode_records,
)


def header(src=0, dest=0, seq=0, attempt=0):
    return BatchHeader(
        plan_id="p1", stage_id=0, src_task=src, attempt=attempt,
        dest_partition=dest, seq=seq,
    )


def batch(seq=0, payload=b"x"):
    return MessageBatch(header=header(seq=seq), payload=payload)


def drain(svc, name, chunk=25):
    out = []
    while True:
        got = svc.receive(name, chunk)
        if not got:
            return out
        out.extend(got)


class TestLifecycle:
    def test_create_then_delete(self):
        svc = QueueService()
        svc.create_queue("q")
        svc.delete_queue("q")
        assert svc.queue_names() == []

    def test_create_twice(self):
        svc = QueueService()
        svc.create_queue("q")
        with pytest.raises(QueueExistsError):
            svc.create_queue("q")

    def test_delete_unknown(self):
        with pytest.raises(NoSuchQueueError):
            QueueService().delete_queue("nope")

    def test_delete_discards_undelivered(self):
        svc = QueueService()
        svc.create_queue("q")
        svc.send_batch("q", [batch()])
        svc.delete_queue("q")
        svc.create_queue("q")
        assert svc.receive("q", 10) == []


class TestSendReceive:
    def test_call_count_is_ceiling(self):
        svc = QueueService()
        svc.create_queue("q")
        assert svc.send_batch("q", [batch(seq=i) for i in range(10)]) == 1
        assert svc.send_batch("q", [batch(seq=i) for i in range(25)]) == 3

    def test_forced_duplicate(self):
        svc = QueueService(QueueConfig(duplicate_probability=1.0))
        svc.create_queue("q")
        svc.send_batch("q", [batch()])
        assert len(drain(svc, "q")) == 2

    def test_message_too_large_names_header(self):
        svc = QueueService(QueueConfig(max_message_bytes=64))
        svc.create_queue("q")
        big = MessageBatch(header=header(seq=9), payload=b"z" * 100)
        with pytest.raises(MessageTooLargeError) as exc:
            svc.send_batch("q", [big])
        assert exc.value.header.seq == 9

    def test_send_to_missing_queue(self):
        with pytest.raises(NoSuchQueueError):
            QueueService().send_batch("nope", [batch()])

    def test_send_then_receive_all(self):
        svc = QueueService()
        svc.create_queue("q")
        svc.send_batch("q", [batch(seq=i) for i in range(3)])
        assert len(svc.receive("q", 10)) == 3
        assert svc.receive("q", 10) == []

    def test_exactly_once_degenerate(self):
        svc = QueueService()
        svc.create_queue("q")
        sent = [batch(seq=i, payload=bytes([i])) for i in range(40)]
        svc.send_batch("q", sent)
        got = drain(svc, "q", chunk=7)
        assert sorted(b.header.seq for b in got) == list(range(40))
        assert {b.header.seq: b.payload for b in got} == {
            b.header.seq: b.payload for b in sent
        }

    def test_seeded_duplication_golden_count(self):
        # Frozen fixture: QueueConfig(duplicate_probability=0.5, rng_seed=7),
        # 100 batches in one send. Recomputed once; pinned here.
        svc = QueueService(QueueConfig(duplicate_probability=0.5, rng_seed=7))
        svc.create_queue("q")
        svc.send_batch("q", [batch(seq=i) for i in range(100)])
        assert len(drain(svc, "q")) == 154

    def test_no_loss_no_corruption_under_duplication(self):
        svc = QueueService(QueueConfig(duplicate_probability=0.3, rng_seed=3))
        svc.create_queue("q")
        sent = [batch(seq=i) for i in range(200)]
        svc.send_batch("q", sent)
        got = drain(svc, "q")
        assert {b.header for b in got} == {b.header for b in sent}
        assert len(got) >= len(sent)


class TestWireFormats:
    def test_record_block_is_bit_exact(self):
        pairs = [(b"a", b"1"), (b"bb", b"")]
        block = encode_records(pairs)
        assert block == (
            b"\x02\x00\x00\x00"
            b"\x01\x00\x00\x00a\x01\x00\x00\x001"
            b"\x02\x00\x00\x00bb\x00\x00\x00\x00"
        )
        assert decode_records(block) == pairs

    @settings(max_examples=50, deadline=None)
    @given(
        pairs=st.lists(
            st.tuples(st.binary(max_size=30), st.binary(max_size=30)), max_size=20
        )
    )
    def test_record_block_roundtrip(self, pairs):
        assert decode_records(encode_records(pairs)) == pairs

    def test_message_frame_roundtrip(self):
        b = batch(seq=5, payload=b"hello")
        decoded = MessageBatch.decode(b.encode())
        assert decoded == b
        assert b.encoded_size() == len(b.encode())
