"""Repair-frame wire format, id spaces, and sender/receiver FEC plumbing."""

import random

import pytest

from fecsim.framework import (
    FEC_FRAME_HEADER_LEN,
    MAX_CHUNK_PAYLOAD,
    MAX_CHUNKS,
    ChunkingOverflow,
    FecFrame,
    IdSpaceExhausted,
    MalformedFrame,
    NotAFecFrame,
    ReceiverFec,
    SenderFec,
    SourceIdSequence,
    UnknownScheme,
    block_repair_id,
    block_source_id,
    chunk_frames,
    conv_repair_id,
    encode_fec_frame,
    parse_fec_frame,
    serialize_fec_frames,
    split_block_source_id,
    split_repair_id,
)
from fecsim.schemes import (
    SCHEME_REED_SOLOMON,
    SCHEME_RLC,
    SCHEME_XOR,
    BlockCodeParams,
    ConvolutionalParams,
    InvalidParams,
)

SYMBOL = 64  # small symbol size keeps the tests fast


def random_packet(rnd, lo=1, hi=SYMBOL - 2):
    return bytes(rnd.randrange(256) for _ in range(rnd.randrange(lo, hi + 1)))


# ---------------------------------------------------------------------------
# Identifier packing

def test_block_source_id_packs_block_and_offset():
    assert block_source_id(5, 7) == 0x0507
    assert split_block_source_id(0x0507) == (5, 7)
    assert block_source_id((1 << 24) - 1, 255) == 0xFFFFFFFF
    with pytest.raises(IdSpaceExhausted):
        block_source_id(1 << 24, 0)
    with pytest.raises(IdSpaceExhausted):
        block_source_id(0, 256)


def test_repair_id_packing():
    assert block_repair_id(3, 1, 0xAB) == 0x301000000AB
    assert conv_repair_id(100, 0xDEAD) == 0x640000DEAD
    assert split_repair_id(block_repair_id(3, 1, 0xAB)) == (0x0301, 0xAB)
    assert split_repair_id(conv_repair_id(100, 0xDEAD)) == (100, 0xDEAD)
    with pytest.raises(IdSpaceExhausted):
        conv_repair_id(1 << 32, 0)


def test_source_id_sequence():
    seq = SourceIdSequence("block", k=3)
    assert [seq.next() for _ in range(7)] == [
        0x0000, 0x0001, 0x0002, 0x0100, 0x0101, 0x0102, 0x0200,
    ]
    conv = SourceIdSequence("convolutional")
    assert [conv.next() for _ in range(4)] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        SourceIdSequence("banana")


# ---------------------------------------------------------------------------
# Frame wire format

def test_golden_frame_bytes():
    frame = FecFrame(
        fin=True,
        chunk_offset=0,
        repair_id=0x1122334455667788,
        nss=4,
        nrs=2,
        payload=b"\x01\x02\x03",
    )
    wire = encode_fec_frame(frame)
    assert wire.hex() == "0a000700112233445566778804020000010203"
    assert len(wire) == FEC_FRAME_HEADER_LEN + 3
    parsed, consumed = parse_fec_frame(wire)
    assert parsed == frame
    assert consumed == len(wire)


def test_parse_rejects_wrong_type_and_truncation():
    frame = FecFrame(True, 0, 7, 1, 1, b"xy")
    wire = encode_fec_frame(frame)
    with pytest.raises(NotAFecFrame):
        parse_fec_frame(b"\x06" + wire[1:])
    with pytest.raises(MalformedFrame):
        parse_fec_frame(wire[: FEC_FRAME_HEADER_LEN - 1])
    with pytest.raises(MalformedFrame):
        parse_fec_frame(wire[:-1])
    with pytest.raises(MalformedFrame):
        parse_fec_frame(b"")


def test_parse_at_offset_and_back_to_back_frames():
    a = encode_fec_frame(FecFrame(False, 0, 1, 2, 1, b"aa"))
    b = encode_fec_frame(FecFrame(True, 1, 1, 2, 1, b"bbb"))
    buf = a + b
    f1, used1 = parse_fec_frame(buf)
    f2, used2 = parse_fec_frame(buf, used1)
    assert (f1.payload, f2.payload) == (b"aa", b"bbb")
    assert used1 + used2 == len(buf)
    assert not f1.fin and f2.fin


def test_chunking_splits_and_marks_final():
    payload = bytes(range(256)) * 4  # 1024 bytes
    frames = chunk_frames(payload, 9, 20, 10, 300)
    assert [f.chunk_offset for f in frames] == [0, 1, 2, 3]
    assert [f.fin for f in frames] == [False, False, False, True]
    assert [len(f.payload) for f in frames] == [300, 300, 300, 124]
    assert b"".join(f.payload for f in frames) == payload
    assert all((f.nss, f.nrs) == (20, 10) for f in frames)
    single = chunk_frames(b"z", 9, 1, 1, 300)
    assert len(single) == 1 and single[0].fin


def test_chunking_limits():
    with pytest.raises(ChunkingOverflow):
        chunk_frames(bytes(MAX_CHUNKS + 1), 1, 1, 1, 1)
    chunk_frames(bytes(MAX_CHUNKS), 1, 1, 1, 1)  # exactly 256 chunks is fine
    with pytest.raises(ValueError):
        chunk_frames(b"x", 1, 1, 1, 0)
    with pytest.raises(ValueError):
        chunk_frames(b"x", 1, 1, 1, MAX_CHUNK_PAYLOAD + 1)
    with pytest.raises(ValueError):
        chunk_frames(b"", 1, 1, 1, 100)


def test_serialize_fec_frames_matches_chunking():
    payload = bytes(500)
    wires = serialize_fec_frames(payload, 42, 4, 2, 200)
    frames = chunk_frames(payload, 42, 4, 2, 200)
    assert wires == [encode_fec_frame(f) for f in frames]


# ---------------------------------------------------------------------------
# Sender scheduling

def make_sender(scheme, config):
    return SenderFec(scheme, config, SYMBOL)


def push_packet(sender, packet):
    raw = sender.next_source_id()
    sender.commit_source(raw, packet)
    return raw


def test_sender_rejects_mismatched_config():
    with pytest.raises(InvalidParams):
        SenderFec(SCHEME_REED_SOLOMON, ConvolutionalParams(3, 2, 20), SYMBOL)
    with pytest.raises(InvalidParams):
        SenderFec(SCHEME_RLC, BlockCodeParams(6, 4), SYMBOL)
    with pytest.raises(UnknownScheme):
        SenderFec(0x7F, BlockCodeParams(6, 4), SYMBOL)


def test_rs_sender_emits_repairs_at_block_completion():
    rnd = random.Random(20)
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    for i in range(3):
        push_packet(sender, random_packet(rnd))
        assert sender.pending == []
    assert sender.has_partial
    push_packet(sender, random_packet(rnd))
    assert len(sender.pending) == 2
    assert not sender.has_partial
    ids = [split_repair_id(p.repair_id) for p in sender.pending]
    assert [split_block_source_id(hi) for hi, _ in ids] == [(0, 0), (0, 1)]
    assert all((p.nss, p.nrs) == (4, 2) for p in sender.pending)


def test_rs_sender_flush_closes_partial_block():
    rnd = random.Random(21)
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    push_packet(sender, random_packet(rnd))
    push_packet(sender, random_packet(rnd))
    sender.flush()
    assert len(sender.pending) == 2  # repair count is kept, nss shrinks
    assert all(p.nss == 2 for p in sender.pending)
    assert not sender.has_partial


def test_rlc_sender_emits_every_kth_source():
    rnd = random.Random(22)
    sender = make_sender(SCHEME_RLC, ConvolutionalParams(3, 2, 5))
    emitted = []
    for i in range(9):
        push_packet(sender, random_packet(rnd))
        emitted.append(len(sender.pending))
    assert emitted == [0, 1, 1, 2, 2, 3, 3, 4, 4]
    starts = [split_repair_id(p.repair_id)[0] for p in sender.pending]
    assert starts == [0, 0, 1, 3]  # window slides once it holds c=5 symbols
    assert [p.nss for p in sender.pending] == [2, 4, 5, 5]


def test_rlc_sender_flush_emits_trailing_repair():
    rnd = random.Random(23)
    sender = make_sender(SCHEME_RLC, ConvolutionalParams(3, 2, 20))
    for _ in range(3):
        push_packet(sender, random_packet(rnd))
    before = len(sender.pending)
    assert sender.has_partial
    sender.flush()
    assert len(sender.pending) == before + 1
    sender.flush()  # idempotent once the step is closed
    assert len(sender.pending) == before + 1


def test_xor_sender_lane_interleaving():
    rnd = random.Random(24)
    sender = make_sender(SCHEME_XOR, BlockCodeParams(3, 2))
    sender.configure_lanes(2)
    ids = [push_packet(sender, random_packet(rnd)) for _ in range(4)]
    # consecutive sources land in alternating blocks (lanes)
    assert [split_block_source_id(i) for i in ids] == [
        (0, 0), (1, 0), (0, 1), (1, 1),
    ]
    assert len(sender.pending) == 2  # both lanes completed a block
    with pytest.raises(InvalidParams):
        sender.configure_lanes(4)  # too late, sources already registered


def test_sender_staged_params_apply_at_block_boundary():
    rnd = random.Random(25)
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    push_packet(sender, random_packet(rnd))
    sender.set_code_params(BlockCodeParams(3, 2))
    for _ in range(3):
        push_packet(sender, random_packet(rnd))
    # first block still completed under (6, 4)
    assert [p.nss for p in sender.pending] == [4, 4]
    sender.pending.clear()
    push_packet(sender, random_packet(rnd))
    push_packet(sender, random_packet(rnd))
    assert [(p.nss, p.nrs) for p in sender.pending] == [(2, 1)]


def test_sender_id_reservation_protocol():
    sender = make_sender(SCHEME_RLC, ConvolutionalParams(3, 2, 20))
    raw = sender.next_source_id()
    with pytest.raises(Exception):
        sender.next_source_id()  # must commit before reserving again
    sender.commit_source(raw, b"ok")


# ---------------------------------------------------------------------------
# Receiver recovery

def pipe(sender, receiver, packets, drop=()):
    """Send packets through sender bookkeeping, deliver all repair frames,
    drop the source packets whose index is in ``drop``."""
    recovered = []
    for i, pkt in enumerate(packets):
        raw = push_packet(sender, pkt)
        if i not in drop:
            recovered.extend(receiver.on_source_symbol(raw, pkt))
        for pending in sender.pending:
            for frame in chunk_frames(
                pending.payload, pending.repair_id, pending.nss, pending.nrs, 1200
            ):
                recovered.extend(receiver.on_fec_frame(frame))
        sender.pending.clear()
    return recovered


def test_rs_receiver_recovers_dropped_packet_exactly():
    rnd = random.Random(30)
    packets = [random_packet(rnd) for _ in range(8)]
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    recovered = pipe(sender, receiver, packets, drop={2, 5})
    assert {raw for raw, _ in recovered} == {0x0002, 0x0101}
    by_id = dict(recovered)
    assert by_id[0x0002] == packets[2]
    assert by_id[0x0101] == packets[5]


def test_rs_first_in_block_loss_waits_for_rest_of_block():
    # losing the block's first source: recovery cannot happen before the
    # remaining k-1 sources and a repair have all arrived
    rnd = random.Random(31)
    k = 20
    packets = [random_packet(rnd) for _ in range(k)]
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(30, 20))
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    ids = []
    for pkt in packets:
        raw = push_packet(sender, pkt)
        ids.append(raw)
    assert len(sender.pending) == 10
    out = []
    for raw, pkt in zip(ids[1:], packets[1:]):
        out.extend(receiver.on_source_symbol(raw, pkt))
    assert out == []  # 19 later sources alone recover nothing
    pending = sender.pending[0]
    for frame in chunk_frames(
        pending.payload, pending.repair_id, pending.nss, pending.nrs, 1200
    ):
        out.extend(receiver.on_fec_frame(frame))
    assert out == [(ids[0], packets[0])]


def test_receiver_never_reports_received_or_duplicate():
    rnd = random.Random(32)
    packets = [random_packet(rnd) for _ in range(4)]
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    recovered = pipe(sender, receiver, packets)  # nothing dropped
    assert recovered == []
    # duplicate source delivery is idempotent
    assert receiver.on_source_symbol(0x0000, packets[0]) == []


def test_receiver_chunk_reassembly_out_of_order():
    rnd = random.Random(33)
    packets = [random_packet(rnd) for _ in range(4)]
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    ids = [push_packet(sender, p) for p in packets]
    for raw, pkt in zip(ids[1:], packets[1:]):
        receiver.on_source_symbol(raw, pkt)
    pending = sender.pending[0]
    frames = chunk_frames(
        pending.payload, pending.repair_id, pending.nss, pending.nrs, 20
    )
    assert len(frames) >= 3
    out = []
    order = list(reversed(frames))  # worst-case arrival order
    for frame in order:
        out.extend(receiver.on_fec_frame(frame))
    assert out == [(ids[0], packets[0])]
    # duplicate chunks of an already-consumed repair start a fresh partial
    assert receiver.on_fec_frame(frames[0]) == []


def test_receiver_rejects_inconsistent_code_announcement():
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    receiver.on_fec_frame(FecFrame(False, 0, 77, 4, 2, b"a"))
    with pytest.raises(MalformedFrame):
        receiver.on_fec_frame(FecFrame(True, 1, 77, 5, 2, b"b"))


def test_receiver_evicts_blocks_behind_backlog():
    rnd = random.Random(34)
    receiver = ReceiverFec(SCHEME_REED_SOLOMON, SYMBOL)
    sender = make_sender(SCHEME_REED_SOLOMON, BlockCodeParams(6, 4))
    packets = [random_packet(rnd) for _ in range(4)]
    ids = [push_packet(sender, p) for p in packets]
    for raw, pkt in zip(ids[1:], packets[1:]):
        receiver.on_source_symbol(raw, pkt)
    # jump far ahead: block 0 state is evicted
    far = block_source_id(receiver.BLOCK_BACKLOG + 1, 0)
    receiver.on_source_symbol(far, b"later")
    pending = sender.pending[0]
    out = []
    for frame in chunk_frames(
        pending.payload, pending.repair_id, pending.nss, pending.nrs, 1200
    ):
        out.extend(receiver.on_fec_frame(frame))
    assert out == []  # too late, the block fell out of the backlog


def test_rlc_sender_receiver_roundtrip_with_loss():
    rnd = random.Random(35)
    packets = [random_packet(rnd) for _ in range(20)]
    sender = make_sender(SCHEME_RLC, ConvolutionalParams(3, 2, 10))
    receiver = ReceiverFec(SCHEME_RLC, SYMBOL, window=10)
    recovered = pipe(sender, receiver, packets, drop={4, 11, 17})
    by_id = dict(recovered)
    assert set(by_id) == {4, 11, 17}
    for raw in by_id:
        assert by_id[raw] == packets[raw]


def test_xor_sender_receiver_roundtrip_single_loss_per_lane():
    rnd = random.Random(36)
    packets = [random_packet(rnd) for _ in range(8)]
    sender = make_sender(SCHEME_XOR, BlockCodeParams(5, 4))
    sender.configure_lanes(2)
    receiver = ReceiverFec(SCHEME_XOR, SYMBOL)
    # drop one packet in each lane (even indices lane 0, odd lane 1)
    recovered = pipe(sender, receiver, packets, drop={2, 5})
    by_id = dict(recovered)
    assert len(by_id) == 2
    assert set(by_id.values()) == {packets[2], packets[5]}
