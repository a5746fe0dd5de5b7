"""Transport state machine: congestion control, loss detection, recovery
signaling, stream reassembly."""

import pytest

from fecsim.frames import (
    AckFrame,
    HandshakeFrame,
    Packet,
    RecoveredFrame,
    StreamFrame,
    encode_packet,
    parse_packet,
)
from fecsim.transport import (
    ACK_RANGE_CAP,
    Connection,
    ConnectionConfig,
    FecConfig,
    NewReno,
    PACKET_REORDER_THRESHOLD,
    ProtocolViolation,
    RangeSet,
    RecvStream,
    RttEstimator,
    SendStream,
    STRATEGY_NO_ACK,
    STRATEGY_SILENT_ACK,
    pattern_bytes,
    pattern_request_size,
)


# ---------------------------------------------------------------------------
# Small pieces

def test_pattern_bytes():
    assert pattern_bytes(0, 4) == b"\x00\x01\x02\x03"
    assert pattern_bytes(254, 4) == b"\xfe\xff\x00\x01"
    assert pattern_bytes(1000, 0) == b""


def test_pattern_request_size():
    assert pattern_request_size(b"GET 1000") == 1000
    with pytest.raises(ProtocolViolation):
        pattern_request_size(b"PUT 1000")


def test_rangeset_add_merge_contains():
    rs = RangeSet()
    for v in (1, 2, 4, 5):
        rs.add(v)
    assert rs.ranges() == [(1, 2), (4, 5)]
    assert 2 in rs and 3 not in rs
    rs.add(3)
    assert rs.ranges() == [(1, 5)]
    rs.add(3)  # duplicate is a no-op
    assert rs.ranges() == [(1, 5)]
    assert rs.largest == 5
    assert len(rs) == 1


def test_rangeset_prune_merges_oldest_gaps():
    rs = RangeSet()
    for v in (1, 2, 4, 5, 7, 8, 10, 11):
        rs.add(v)
    rs.prune(2)
    assert rs.ranges() == [(1, 8), (10, 11)]
    assert rs.largest == 11
    assert 6 in rs  # the closed gap is now covered


def test_rangeset_empty_largest_raises():
    with pytest.raises(ValueError):
        RangeSet().largest


def test_rtt_first_sample_replaces_initial():
    rtt = RttEstimator(100_000)
    assert rtt.srtt_us == 100_000
    rtt.add_sample(262_000)
    assert rtt.srtt_us == 262_000
    assert rtt.rttvar_us == 131_000


def test_rtt_smoothing_gains():
    rtt = RttEstimator()
    rtt.add_sample(262_000)
    rtt.add_sample(100_000)
    assert rtt.srtt_us == 241_750  # 0.875*262000 + 0.125*100000
    assert rtt.rttvar_us == 138_750  # 0.75*131000 + 0.25*162000


def test_newreno_slow_start_doubles_per_round():
    cc = NewReno(1200, initial_packets=10)
    assert cc.cwnd == 12_000
    assert cc.in_slow_start
    for _ in range(10):
        cc.on_acked(1, 1200)
    assert cc.cwnd == 24_000


def test_newreno_loss_halves_window():
    cc = NewReno(1200, initial_packets=32)
    assert cc.on_loss(sent_time_us=5, now_us=10)
    assert cc.cwnd == 16 * 1200
    assert cc.ssthresh == 16 * 1200
    assert not cc.in_slow_start


def test_newreno_one_reduction_per_round():
    cc = NewReno(1200, initial_packets=32)
    assert cc.on_loss(100, 1000)
    before = cc.cwnd
    # losses of packets sent before the reduction do not reduce again
    assert not cc.on_loss(900, 1100)
    assert cc.cwnd == before
    # a loss from after the reduction starts a new round
    assert cc.on_loss(1500, 2000)
    assert cc.cwnd == before / 2


def test_newreno_floor_at_min_window():
    cc = NewReno(1200, initial_packets=3, min_packets=2)
    cc.on_loss(1, 2)
    assert cc.cwnd == 2 * 1200


def test_newreno_recovery_blocks_growth():
    cc = NewReno(1200, initial_packets=32)
    cc.on_loss(100, 1000)
    w = cc.cwnd
    cc.on_acked(500, 1200)  # sent before the reduction: no growth
    assert cc.cwnd == w
    cc.on_acked(1500, 1200)  # sent after: congestion avoidance growth
    assert cc.cwnd == pytest.approx(w + 1200 * 1200 / w)


def test_send_stream_slices_and_marks_fin():
    ss = SendStream(10, pattern_bytes)
    f1 = ss.next_frame(4)
    assert (f1.offset, f1.data, f1.fin) == (0, pattern_bytes(0, 4), False)
    f2 = ss.next_frame(100)
    assert (f2.offset, f2.data, f2.fin) == (4, pattern_bytes(4, 6), True)
    assert not ss.has_pending


def test_recv_stream_reorders_and_dedups():
    rs = RecvStream(keep_data=True)
    rs.insert(5, b"world", True)
    assert not rs.complete and rs.cursor == 0
    rs.insert(0, b"hello", False)
    assert rs.complete and rs.cursor == 10
    assert bytes(rs.data) == b"helloworld"
    rs.insert(0, b"hello", False)  # stale duplicate
    assert rs.cursor == 10


def test_recv_stream_trims_partial_overlap():
    rs = RecvStream(keep_data=True)
    rs.insert(0, b"abcd", False)
    rs.insert(2, b"cdef", False)
    assert bytes(rs.data) == b"abcdef"


def test_recv_stream_detects_corruption():
    rs = RecvStream(expect_fn=pattern_bytes)
    rs.insert(0, pattern_bytes(0, 10), False)
    with pytest.raises(AssertionError):
        rs.insert(10, b"\xff" * 4, False)


def test_fec_config_labels():
    assert FecConfig.rs(30, 20).label() == "rs(30,20)"
    assert FecConfig.rlc(3, 2, 20).label() == "rlc(3,2,20)"
    assert FecConfig.xor(4, 4).label() == "xor(k=4,lanes=4)"


def test_connection_config_rejects_unknown_strategy():
    with pytest.raises(ValueError):
        ConnectionConfig(recovered_strategy="quiet")


def test_connection_role_validation():
    with pytest.raises(ValueError):
        Connection("router", ConnectionConfig())
    with pytest.raises(ValueError):
        Connection("client", ConnectionConfig())  # no request size


# ---------------------------------------------------------------------------
# Driving a server connection by hand

def deliver(conn, packet, now):
    conn.on_datagram(encode_packet(packet), now)


def make_server(size=50_000, **config_kwargs):
    """Handshake + request a response; returns (server, stream packets)."""
    traces = []
    srv = Connection(
        "server",
        ConnectionConfig(**config_kwargs),
        trace=lambda ev, pn, detail: traces.append((ev, pn, detail)),
    )
    srv.traces = traces
    deliver(srv, Packet(1, [HandshakeFrame(0)]), 0)
    out = srv.flush(0)
    deliver(srv, Packet(2, [StreamFrame(0, 0, True, b"GET %d" % size)]), 0)
    out += srv.flush(0)
    stream = [p for p in out if p.kind == "stream"]
    assert len(stream) >= 6
    assert srv.bytes_in_flight <= srv.cwnd
    return srv, stream


def stream_offsets(packets):
    off = {}
    for p in packets:
        for f in parse_packet(p.data).frames:
            if isinstance(f, StreamFrame):
                off[p.packet_number] = f.offset
    return off


def flushed_stream_offsets(conn, now):
    out = conn.flush(now)
    return [
        f.offset
        for p in out
        for f in parse_packet(p.data).frames
        if isinstance(f, StreamFrame)
    ]


def test_client_sends_request_after_handshake():
    cli = Connection("client", ConnectionConfig(), request_size=1234)
    cli.start(0)
    out = cli.flush(0)
    assert [p.kind for p in out] == ["hs"]
    hs = parse_packet(out[0].data).frames[0]
    assert hs == HandshakeFrame(0)
    deliver(cli, Packet(1, [HandshakeFrame(1)]), 1000)
    out = cli.flush(1000)
    kinds = [p.kind for p in out]
    assert "stream" in kinds
    req = [
        f
        for p in out
        for f in parse_packet(p.data).frames
        if isinstance(f, StreamFrame)
    ]
    assert req == [StreamFrame(0, 0, True, b"GET 1234")]


def test_reorder_threshold_needs_three_packets_above():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    offs = stream_offsets(stream)
    # hole at s[2]: packets up to 2 above it are acked, not enough
    deliver(srv, Packet(3, [AckFrame(s[4], 0, [(1, s[1]), (s[3], s[4])])]), 100_000)
    assert srv.stats.lost_packets == 0
    # one more packet above: the hole crosses the reorder threshold
    assert s[5] - s[2] == PACKET_REORDER_THRESHOLD
    deliver(srv, Packet(4, [AckFrame(s[5], 0, [(1, s[1]), (s[3], s[5])])]), 100_200)
    assert srv.stats.lost_packets == 1
    assert ("lost", s[2], "reorder_threshold") in srv.traces
    # the lost data is retransmitted
    sent = flushed_stream_offsets(srv, 100_300)
    assert offs[s[2]] in sent
    assert srv.stats.retransmitted_packets == 1


def test_hole_time_threshold_declares_loss():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    # srtt becomes 200ms; the hole at s[2] is 2 packets deep (below the
    # reorder threshold) so only the time threshold can fire
    deliver(srv, Packet(3, [AckFrame(s[4], 0, [(1, s[1]), (s[3], s[4])])]), 200_000)
    assert srv.rtt.srtt_us == 200_000
    assert srv.stats.lost_packets == 0
    hole_deadline = 200_000 + 200_000 // 8
    assert srv.next_timer_us() == hole_deadline
    srv.on_timer(hole_deadline - 1)
    assert srv.stats.lost_packets == 0
    srv.on_timer(hole_deadline)
    assert srv.stats.lost_packets == 1
    assert ("lost", s[2], "time_threshold") in srv.traces


def test_tail_loss_probe_fires_after_two_srtt():
    srv, stream = make_server()
    assert srv.next_timer_us() == 2 * srv.rtt.srtt_us  # anchored at send time 0
    srv.on_timer(2 * srv.rtt.srtt_us)
    assert srv.stats.probe_packets == 1
    out = srv.flush(2 * srv.rtt.srtt_us)
    assert out[0].kind == "probe"
    # the probe resends the newest unacked stream data
    frames = parse_packet(out[0].data).frames
    offs = stream_offsets(stream)
    assert [f.offset for f in frames] == [offs[stream[-1].packet_number]]


def test_ack_of_unsent_packet_is_protocol_violation():
    srv, _ = make_server()
    with pytest.raises(ProtocolViolation):
        deliver(srv, Packet(3, [AckFrame(9999, 0, [(9999, 9999)])]), 1000)


def test_recovered_for_unsent_packet_is_protocol_violation():
    srv, _ = make_server()
    with pytest.raises(ProtocolViolation):
        deliver(srv, Packet(3, [RecoveredFrame([(9999, 9999)])]), 1000)


def test_recovered_packet_reduces_cwnd_and_skips_retransmission():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    offs = stream_offsets(stream)
    cwnd_before = srv.cwnd
    flight_before = srv.bytes_in_flight
    deliver(srv, Packet(3, [RecoveredFrame([(s[0], s[0])])]), 50_000)
    assert srv.stats.peer_recovered_packets == 1
    assert srv.stats.cwnd_reductions == 1
    assert srv.cwnd == cwnd_before / 2
    assert srv.bytes_in_flight == flight_before - stream[0].size
    # acks that would normally expose the hole do not relitigate the loss
    deliver(srv, Packet(4, [AckFrame(s[5], 0, [(1, s[5])])]), 100_000)
    assert srv.stats.lost_packets == 0
    # and the recovered data is never sent again
    assert offs[s[0]] not in flushed_stream_offsets(srv, 100_100)
    assert srv.stats.retransmitted_packets == 0


def test_recovered_for_acked_packet_is_ignored():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    deliver(srv, Packet(3, [AckFrame(s[1], 0, [(1, s[1])])]), 50_000)
    deliver(srv, Packet(4, [RecoveredFrame([(s[0], s[0])])]), 51_000)
    assert srv.stats.peer_recovered_packets == 0
    assert srv.stats.cwnd_reductions == 0


def test_duplicate_recovered_reports_single_signal():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    deliver(srv, Packet(3, [RecoveredFrame([(s[1], s[1])])]), 50_000)
    deliver(srv, Packet(4, [RecoveredFrame([(s[1], s[1])])]), 52_000)
    assert srv.stats.peer_recovered_packets == 1
    assert srv.stats.cwnd_reductions == 1


def test_recovered_range_collapses_to_one_reduction_per_round():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    deliver(srv, Packet(3, [RecoveredFrame([(s[2], s[4])])]), 50_000)
    assert srv.stats.peer_recovered_packets == 3
    assert srv.stats.cwnd_reductions == 1  # same flight, one round


def test_late_recovered_purges_queued_retransmission():
    srv, stream = make_server()
    s = [p.packet_number for p in stream]
    offs = stream_offsets(stream)
    # the hole at s[2] crosses the reorder threshold: queued for resend
    deliver(srv, Packet(3, [AckFrame(s[5], 0, [(1, s[1]), (s[3], s[5])])]), 100_000)
    assert srv.stats.lost_packets == 1
    # before the sender flushes, the peer reports it repaired the packet
    deliver(srv, Packet(4, [RecoveredFrame([(s[2], s[2])])]), 100_050)
    sent = flushed_stream_offsets(srv, 100_100)
    assert offs[s[2]] not in sent
    assert srv.stats.retransmitted_packets == 0
    assert srv.stats.cwnd_reductions == 1


def test_duplicate_datagram_is_ignored():
    srv, stream = make_server()
    cursor = srv.received_bytes
    deliver(srv, Packet(2, [StreamFrame(0, 0, True, b"GET 50000")]), 500)
    assert srv.received_bytes == cursor  # replay changed nothing
    assert srv.stats.packets_received == 3


def test_ack_ranges_are_sorted_disjoint_and_capped():
    srv = Connection("server", ConnectionConfig())
    largest_seen = 0
    for i in range(80):  # every second packet number: 80 disjoint ranges
        pn = 2 * i + 2
        deliver(srv, Packet(pn, [HandshakeFrame(0)]), i * 10)
        out = [p for p in srv.flush(i * 10) if p.kind == "feedback"]
        assert out, "every ack-eliciting packet yields immediate feedback"
        acks = [
            f
            for p in out
            for f in parse_packet(p.data).frames
            if isinstance(f, AckFrame)
        ]
        assert len(acks) == 1
        ack = acks[0]
        assert len(ack.ranges) <= ACK_RANGE_CAP
        assert ack.ranges == sorted(ack.ranges)
        for (lo1, hi1), (lo2, _) in zip(ack.ranges, ack.ranges[1:]):
            assert lo1 <= hi1 and hi1 + 1 < lo2  # disjoint, non-adjacent
        assert ack.largest_acked == ack.ranges[-1][1] == pn
        assert ack.largest_acked > largest_seen  # monotone growth
        largest_seen = ack.largest_acked


def test_flight_never_exceeds_cwnd_at_send_time():
    srv, stream = make_server(size=500_000)
    s = [p.packet_number for p in stream]
    now = 100_000
    for round_ in range(20):
        deliver(srv, Packet(3 + round_, [AckFrame(s[-1], 0, [(1, s[-1])])]), now)
        out = srv.flush(now)
        assert srv.bytes_in_flight <= srv.cwnd
        s = [p.packet_number for p in out if p.kind == "stream"]
        if not s:
            break
        now += 100_000


def fec_server_first_stream_packet_dropped(cfg):
    """A FEC server's response with the first stream packet withheld;
    returns (dropped stream packets, delivered packets)."""
    srv = Connection("server", cfg)
    srv.on_datagram(encode_packet(Packet(1, [HandshakeFrame(0)])), 0)
    srv.flush(0)
    srv.on_datagram(encode_packet(Packet(2, [StreamFrame(0, 0, True, b"GET 2000")])), 0)
    out = srv.flush(0)
    stream = [p for p in out if p.kind == "stream"]
    repairs = [p for p in out if p.kind == "repair"]
    assert stream and repairs
    return stream[0], stream[1:] + repairs


def fec_client(cfg):
    cli = Connection("client", cfg, request_size=10)
    cli.start(0)
    cli.flush(0)
    cli.on_datagram(encode_packet(Packet(1, [HandshakeFrame(1)])), 1000)
    cli.flush(1000)
    return cli


def test_silent_ack_strategy_recovers_without_signal():
    cfg = ConnectionConfig(
        fec=FecConfig.rlc(2, 1, 4), recovered_strategy=STRATEGY_SILENT_ACK
    )
    dropped, delivered = fec_server_first_stream_packet_dropped(cfg)
    cli = fec_client(cfg)
    for p in delivered:
        cli.on_datagram(p.data, 2000)
    assert cli.stats.recovered_packets == 1
    # silent ack: the recovered packet is acked but no Recovered frame sent
    out = cli.flush(2100)
    frames = [f for p in out for f in parse_packet(p.data).frames]
    assert not any(isinstance(f, RecoveredFrame) for f in frames)
    acks = [f for f in frames if isinstance(f, AckFrame)]
    assert acks and dropped.packet_number <= acks[0].largest_acked


def test_recovered_frame_strategy_emits_signal_before_ack():
    cfg = ConnectionConfig(fec=FecConfig.rlc(2, 1, 4))
    dropped, delivered = fec_server_first_stream_packet_dropped(cfg)
    cli = fec_client(cfg)
    for p in delivered:
        cli.on_datagram(p.data, 2000)
    assert cli.stats.recovered_packets == 1
    out = cli.flush(2100)
    feedback = [p for p in out if p.kind == "feedback"]
    assert feedback
    frames = parse_packet(feedback[0].data).frames
    assert isinstance(frames[0], RecoveredFrame)
    assert isinstance(frames[1], AckFrame)
    assert frames[0].ranges == [(dropped.packet_number,) * 2]
    # the recovered packet is also acknowledged
    lo, hi = frames[1].ranges[-1][0], frames[1].largest_acked
    assert lo <= dropped.packet_number <= hi


def test_no_ack_strategy_withholds_acknowledgement():
    cfg = ConnectionConfig(
        fec=FecConfig.rlc(2, 1, 4), recovered_strategy=STRATEGY_NO_ACK
    )
    dropped, delivered = fec_server_first_stream_packet_dropped(cfg)
    cli = fec_client(cfg)
    for p in delivered:
        cli.on_datagram(p.data, 2000)
    assert cli.stats.recovered_packets == 1
    out = cli.flush(2100)
    frames = [f for p in out for f in parse_packet(p.data).frames]
    assert not any(isinstance(f, RecoveredFrame) for f in frames)
    for ack in (f for f in frames if isinstance(f, AckFrame)):
        assert not any(lo <= dropped.packet_number <= hi for lo, hi in ack.ranges)
