"""A miniature QUIC-like reliable transport with pluggable packet-level
forward erasure correction.

One :class:`Connection` is one endpoint of a single request/response
exchange: the client performs a one-round-trip handshake, sends a GET
for some number of bytes, and the server streams a deterministic byte
pattern back.  The connection is a pure state machine driven by the
emulator: it consumes datagrams and timer expirations, and produces
datagrams via :meth:`flush`.  All times are integer microseconds.

Reliability comes from three sender mechanisms (packet-threshold loss
detection, a hole timer at srtt/8, and a tail loss probe at 2*srtt) plus
New Reno congestion control.  When FEC is enabled, every packet carrying
stream data is registered as a source symbol, repair symbols ride in
their own unprotected packets, and a receiver that repairs a loss can
acknowledge the packet and report the repair in a Recovered frame so the
sender still hears the congestion signal without retransmitting.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import framework
from .frames import (
    AckFrame,
    HandshakeFrame,
    MAX_PACKET_SIZE,
    PACKET_HEADER_LEN,
    PROTECTED_HEADER_LEN,
    Packet,
    RecoveredFrame,
    STREAM_FRAME_OVERHEAD,
    StreamFrame,
    encode_packet,
    parse_packet,
)
from .framework import FecFrame, ReceiverFec, SenderFec
from .schemes import (
    SCHEME_REED_SOLOMON,
    SCHEME_RLC,
    SCHEME_XOR,
    BlockCodeParams,
    ConvolutionalParams,
    symbol_size_for,
)

PACKET_REORDER_THRESHOLD = 3
HOLE_TIME_FRACTION = 8  # a hole older than srtt/8 declares the packet lost
TLP_SRTT_MULTIPLIER = 2
INITIAL_RTT_US = 100_000
ACK_RANGE_CAP = 32

STRATEGY_RECOVERED_FRAME = "recovered_frame"
STRATEGY_SILENT_ACK = "silent_ack"
STRATEGY_NO_ACK = "no_ack"
RECOVERED_STRATEGIES = (
    STRATEGY_RECOVERED_FRAME,
    STRATEGY_SILENT_ACK,
    STRATEGY_NO_ACK,
)


class ProtocolViolation(Exception):
    """The peer referenced packets this endpoint never sent."""


def pattern_bytes(offset: int, n: int) -> bytes:
    """The deterministic response payload: byte i is i mod 256."""
    return (np.arange(offset, offset + n, dtype=np.int64) & 0xFF).astype(
        np.uint8
    ).tobytes()


# ---------------------------------------------------------------------------
# Configuration

@dataclass(frozen=True)
class FecConfig:
    """Code selection for one connection."""

    scheme: int
    k: int
    repairs: int
    window: int = 0  # RLC coding window
    lanes: int = 1  # XOR interleaving lanes

    @classmethod
    def rs(cls, n: int, k: int) -> "FecConfig":
        return cls(SCHEME_REED_SOLOMON, k, n - k)

    @classmethod
    def rlc(cls, n: int, k: int, c: int) -> "FecConfig":
        return cls(SCHEME_RLC, k, n - k, window=c)

    @classmethod
    def xor(cls, k: int, lanes: int = 4) -> "FecConfig":
        return cls(SCHEME_XOR, k, 1, lanes=lanes)

    def make_params(self):
        if self.scheme == SCHEME_RLC:
            return ConvolutionalParams(self.k + self.repairs, self.k, self.window)
        return BlockCodeParams(self.k + self.repairs, self.k)

    def label(self) -> str:
        if self.scheme == SCHEME_RLC:
            return f"rlc({self.k + self.repairs},{self.k},{self.window})"
        if self.scheme == SCHEME_XOR:
            return f"xor(k={self.k},lanes={self.lanes})"
        return f"rs({self.k + self.repairs},{self.k})"


@dataclass(frozen=True)
class ConnectionConfig:
    fec: Optional[FecConfig] = None
    protect_outgoing: bool = True
    recovered_strategy: str = STRATEGY_RECOVERED_FRAME
    max_packet_size: int = MAX_PACKET_SIZE
    initial_cwnd_packets: int = 10
    min_cwnd_packets: int = 2
    initial_rtt_us: int = INITIAL_RTT_US
    flow_window: int = 16 * 1024 * 1024
    verify_data: bool = True

    def __post_init__(self) -> None:
        if self.recovered_strategy not in RECOVERED_STRATEGIES:
            raise ValueError(f"unknown strategy {self.recovered_strategy!r}")


# ---------------------------------------------------------------------------
# Small sender-side state holders

class RangeSet:
    """Sorted, disjoint, inclusive integer ranges."""

    def __init__(self) -> None:
        self._starts: list[int] = []
        self._ends: list[int] = []

    def add(self, value: int) -> None:
        i = bisect_right(self._starts, value)
        if i and self._ends[i - 1] >= value:
            return  # already covered
        if i and self._ends[i - 1] == value - 1:
            self._ends[i - 1] = value
            if i < len(self._starts) and self._starts[i] == value + 1:
                self._ends[i - 1] = self._ends[i]
                del self._starts[i], self._ends[i]
            return
        if i < len(self._starts) and self._starts[i] == value + 1:
            self._starts[i] = value
            return
        self._starts.insert(i, value)
        self._ends.insert(i, value)

    def __contains__(self, value: int) -> bool:
        i = bisect_right(self._starts, value)
        return bool(i) and self._ends[i - 1] >= value

    def __len__(self) -> int:
        return len(self._starts)

    def ranges(self) -> list[tuple[int, int]]:
        return list(zip(self._starts, self._ends))

    def prune(self, max_ranges: int) -> None:
        """Merge the oldest ranges (closing their gaps) until at most
        ``max_ranges`` remain."""
        while len(self._starts) > max_ranges:
            del self._starts[1]
            del self._ends[0]

    @property
    def largest(self) -> int:
        if not self._ends:
            raise ValueError("empty range set")
        return self._ends[-1]


class RttEstimator:
    """Exponentially smoothed RTT (gains 1/8 and 1/4); the first sample
    replaces the initial estimate outright."""

    def __init__(self, initial_us: int = INITIAL_RTT_US):
        self._srtt = float(initial_us)
        self._rttvar = initial_us / 2.0
        self.latest = 0
        self.has_sample = False

    def add_sample(self, rtt_us: int) -> None:
        rtt_us = max(1, rtt_us)
        self.latest = rtt_us
        if not self.has_sample:
            self.has_sample = True
            self._srtt = float(rtt_us)
            self._rttvar = rtt_us / 2.0
        else:
            self._rttvar = 0.75 * self._rttvar + 0.25 * abs(self._srtt - rtt_us)
            self._srtt = 0.875 * self._srtt + 0.125 * rtt_us

    @property
    def srtt_us(self) -> int:
        return int(self._srtt)

    @property
    def rttvar_us(self) -> int:
        return int(self._rttvar)


class NewReno:
    """New Reno congestion control.

    Slow start adds the acked bytes to the window; congestion avoidance
    adds max_packet * acked / cwnd.  A loss (or a peer-recovered signal)
    halves the window at most once per round trip: packets sent before
    the last reduction do not trigger another one and do not grow the
    window while recovery lasts.
    """

    def __init__(self, max_packet: int, initial_packets: int = 10, min_packets: int = 2):
        self.max_packet = max_packet
        self.min_window = float(min_packets * max_packet)
        self.cwnd = float(initial_packets * max_packet)
        self.ssthresh = math.inf
        self.reductions: list[tuple[int, float]] = []
        self._recovery_start: float = -1.0

    @property
    def in_slow_start(self) -> bool:
        return self.cwnd < self.ssthresh

    def on_acked(self, sent_time_us: int, nbytes: int) -> None:
        if sent_time_us <= self._recovery_start:
            return
        if self.in_slow_start:
            self.cwnd += nbytes
        else:
            self.cwnd += self.max_packet * nbytes / self.cwnd

    def on_loss(self, sent_time_us: int, now_us: int) -> bool:
        """Returns True when this loss starts a new reduction round."""
        if sent_time_us <= self._recovery_start:
            return False
        self._recovery_start = now_us
        self.ssthresh = max(self.cwnd / 2.0, self.min_window)
        self.cwnd = self.ssthresh
        self.reductions.append((now_us, self.cwnd))
        return True


@dataclass
class SentRecord:
    packet_number: int
    send_time_us: int
    size: int
    retransmittable: list
    fec_protected: bool


class SendStream:
    """Outgoing byte stream backed by a data function (no materialised
    buffer, so multi-megabyte transfers stay cheap)."""

    def __init__(self, total: int, data_fn: Callable[[int, int], bytes]):
        self.total = total
        self._data_fn = data_fn
        self.next_offset = 0
        self.fin_sent = False

    @property
    def has_pending(self) -> bool:
        return not self.fin_sent

    def next_frame(self, max_data: int, stream_id: int = 0) -> StreamFrame:
        n = min(max_data, self.total - self.next_offset)
        offset = self.next_offset
        self.next_offset += n
        fin = self.next_offset >= self.total
        self.fin_sent = self.fin_sent or fin
        return StreamFrame(stream_id, offset, fin, self._data_fn(offset, n))


class RecvStream:
    """In-order reassembly with duplicate suppression.

    Delivered bytes are discarded unless ``keep_data`` is set (the server
    keeps the tiny request; the client only checks the response pattern).
    """

    def __init__(
        self,
        expect_fn: Optional[Callable[[int, int], bytes]] = None,
        keep_data: bool = False,
    ):
        self._segments: dict[int, bytes] = {}
        self.cursor = 0
        self.final_size: Optional[int] = None
        self._expect_fn = expect_fn
        self.data: Optional[bytearray] = bytearray() if keep_data else None
        self.buffered_bytes = 0

    @property
    def complete(self) -> bool:
        return self.final_size is not None and self.cursor >= self.final_size

    def insert(self, offset: int, data: bytes, fin: bool) -> None:
        if fin:
            self.final_size = offset + len(data)
        if offset + len(data) <= self.cursor:
            return  # stale duplicate
        if offset < self.cursor:  # partial overlap with delivered data
            data = data[self.cursor - offset :]
            offset = self.cursor
        if offset in self._segments:
            return
        self._segments[offset] = data
        self.buffered_bytes += len(data)
        while self.cursor in self._segments:
            chunk = self._segments.pop(self.cursor)
            self.buffered_bytes -= len(chunk)
            if self._expect_fn is not None:
                expected = self._expect_fn(self.cursor, len(chunk))
                if chunk != expected:
                    raise AssertionError(
                        f"stream corruption at offset {self.cursor}"
                    )
            if self.data is not None:
                self.data.extend(chunk)
            self.cursor += len(chunk)


@dataclass
class Stats:
    packets_sent: int = 0
    bytes_sent: int = 0
    packets_received: int = 0
    retransmitted_packets: int = 0
    probe_packets: int = 0
    lost_packets: int = 0
    recovered_packets: int = 0  # repaired by this endpoint's decoder
    peer_recovered_packets: int = 0  # own packets the peer reported repairing
    cwnd_reductions: int = 0


@dataclass
class OutPacket:
    """A wire-ready packet plus metadata for the emulator and tests."""

    data: bytes
    packet_number: int
    kind: str  # hs | feedback | repair | stream | probe
    fec_protected: bool

    @property
    def size(self) -> int:
        return len(self.data)


# ---------------------------------------------------------------------------

class Connection:
    """One endpoint of the request/response exchange."""

    def __init__(
        self,
        role: str,
        config: ConnectionConfig,
        *,
        request_size: Optional[int] = None,
        trace: Optional[Callable[[str, Optional[int], str], None]] = None,
        label: str = "",
    ):
        if role not in ("client", "server"):
            raise ValueError(f"role must be client or server, got {role!r}")
        if role == "client" and not request_size:
            raise ValueError("a client connection needs a request size")
        self.role = role
        self.config = config
        self.label = label or role
        self.request_size = request_size
        self.stats = Stats()
        self._trace_fn = trace

        self._strategy = config.recovered_strategy
        symbol_size = symbol_size_for(config.max_packet_size)
        self._sender_fec: Optional[SenderFec] = None
        self._receiver_fec: Optional[ReceiverFec] = None
        if config.fec is not None:
            fec = config.fec
            self._sender_fec = SenderFec(fec.scheme, fec.make_params(), symbol_size)
            if fec.scheme == SCHEME_XOR and fec.lanes > 1:
                self._sender_fec.configure_lanes(fec.lanes)
            self._receiver_fec = ReceiverFec(
                fec.scheme, symbol_size, window=max(1, fec.window)
            )

        # send side
        self._next_pn = 1
        self._sent: dict[int, SentRecord] = {}
        self._bytes_in_flight = 0
        self._hs_outbox: deque[int] = deque()
        self._retransmit: deque = deque()
        self._repair_frames: deque[FecFrame] = deque()
        self._probe_frames: Optional[list] = None
        self._send_stream: Optional[SendStream] = None
        self._cc = NewReno(
            config.max_packet_size,
            config.initial_cwnd_packets,
            config.min_cwnd_packets,
        )
        self._rtt = RttEstimator(config.initial_rtt_us)
        self._hole_since: dict[int, int] = {}
        self._tlp_anchor: Optional[int] = None

        # receive side
        self._received_pns = RangeSet()
        self._recovered_local: set[int] = set()
        self._recovered_pending: set[int] = set()
        self._recovered_carriers: dict[int, frozenset] = {}
        self._ack_queued = False
        self._recv_stream = RecvStream(
            expect_fn=pattern_bytes
            if role == "client" and config.verify_data
            else None,
            keep_data=role == "server",
        )
        self._peer_stream_done = False

        self._handshake_done = False
        self.complete_at_us: Optional[int] = None
        self.on_complete: Optional[Callable[[int], None]] = None

    # -- public inspection -------------------------------------------------

    @property
    def cwnd(self) -> float:
        return self._cc.cwnd

    @property
    def cc(self) -> NewReno:
        return self._cc

    @property
    def rtt(self) -> RttEstimator:
        return self._rtt

    @property
    def bytes_in_flight(self) -> int:
        return self._bytes_in_flight

    @property
    def handshake_done(self) -> bool:
        return self._handshake_done

    @property
    def received_bytes(self) -> int:
        """Contiguously delivered stream bytes."""
        return self._recv_stream.cursor

    @property
    def received_packet_ranges(self) -> list[tuple[int, int]]:
        return self._received_pns.ranges()

    @property
    def sender_done(self) -> bool:
        """All stream data sent and acknowledged."""
        stream = self._send_stream
        return (
            stream is not None
            and stream.fin_sent
            and not self._retransmit
            and not self._sent
        )

    def _trace(self, event: str, pn: Optional[int], detail: str = "") -> None:
        if self._trace_fn is not None:
            self._trace_fn(event, pn, detail)

    # -- lifecycle -----------------------------------------------------------

    def start(self, now: int) -> None:
        """Client: begin the handshake.  Server: wait."""
        if self.role == "client":
            self._hs_outbox.append(0)
            self._trace("connect", None, "")

    # -- inbound --------------------------------------------------------------

    def on_datagram(self, data: bytes, now: int) -> None:
        self.stats.packets_received += 1
        pkt = parse_packet(data)
        pn = pkt.packet_number
        if pn in self._received_pns:
            self._ack_queued = True  # acknowledge again, ignore the payload
            return
        self._received_pns.add(pn)
        recovered: list[tuple[int, bytes]] = []
        ack_eliciting = False
        for frame in pkt.frames:
            if isinstance(frame, AckFrame):
                self._on_ack_frame(frame, now)
                continue
            ack_eliciting = True
            if isinstance(frame, StreamFrame):
                self._on_stream_frame(frame, now)
            elif isinstance(frame, HandshakeFrame):
                self._on_handshake_frame(frame, now)
            elif isinstance(frame, FecFrame):
                if self._receiver_fec is not None:
                    self._trace("repair_symbol", pn, f"id={frame.repair_id:#x}")
                    recovered.extend(self._receiver_fec.on_fec_frame(frame))
            elif isinstance(frame, RecoveredFrame):
                self._on_recovered_frame(frame, now)
        if pkt.fec_protected and self._receiver_fec is not None:
            self._trace("src_symbol", pn, f"id={pkt.source_id}")
            recovered.extend(
                self._receiver_fec.on_source_symbol(pkt.source_id, data)
            )
        for _src_id, packet_bytes in recovered:
            self._process_recovered(packet_bytes, now)
        if ack_eliciting:
            self._ack_queued = True

    def _process_recovered(self, packet_bytes: bytes, now: int) -> None:
        pkt = parse_packet(packet_bytes)
        pn = pkt.packet_number
        if pn in self._received_pns or pn in self._recovered_local:
            return  # never report phantom recoveries
        self._recovered_local.add(pn)
        self.stats.recovered_packets += 1
        self._trace("recovered", pn, "")
        if self._strategy != STRATEGY_NO_ACK:
            self._received_pns.add(pn)
            self._ack_queued = True
        if self._strategy == STRATEGY_RECOVERED_FRAME:
            self._recovered_pending.add(pn)
        for frame in pkt.frames:
            if isinstance(frame, AckFrame):
                self._on_ack_frame(frame, now)
            elif isinstance(frame, StreamFrame):
                self._on_stream_frame(frame, now)
            elif isinstance(frame, HandshakeFrame):
                self._on_handshake_frame(frame, now)

    def _on_stream_frame(self, frame: StreamFrame, now: int) -> None:
        self._recv_stream.insert(frame.offset, frame.data, frame.fin)
        if self._recv_stream.complete and not self._peer_stream_done:
            self._peer_stream_done = True
            if self.role == "server":
                self._start_response(now)
            else:
                self.complete_at_us = now
                self._trace(
                    "response_complete", None, f"bytes={self._recv_stream.cursor}"
                )
                if self.on_complete is not None:
                    self.on_complete(now)

    def _start_response(self, now: int) -> None:
        size = pattern_request_size(bytes(self._recv_stream.data))
        self._send_stream = SendStream(size, pattern_bytes)
        self._trace("request_received", None, f"size={size}")

    def _on_handshake_frame(self, frame: HandshakeFrame, now: int) -> None:
        if self.role == "server" and frame.round == 0:
            if not self._handshake_done:
                self._handshake_done = True
                self._hs_outbox.append(1)
                self._trace("hs_complete", None, "")
        elif self.role == "client" and frame.round == 1:
            if not self._handshake_done:
                self._handshake_done = True
                self._trace("hs_complete", None, "")
                self._send_stream = SendStream(
                    len(self._request_payload()), self._request_data
                )

    def _request_payload(self) -> bytes:
        return b"GET %d" % self.request_size

    def _request_data(self, offset: int, n: int) -> bytes:
        return self._request_payload()[offset : offset + n]

    # -- acknowledgements and loss ---------------------------------------------

    def _on_ack_frame(self, ack: AckFrame, now: int) -> None:
        if ack.largest_acked >= self._next_pn:
            raise ProtocolViolation(
                f"peer acked unsent packet {ack.largest_acked}"
            )
        newly = [
            pn for pn in self._sent if _ranges_contain(ack.ranges, pn)
        ]
        if newly:
            largest_new = newly[-1]
            if largest_new == ack.largest_acked:
                self._rtt.add_sample(
                    now - self._sent[largest_new].send_time_us
                )
            for pn in newly:
                rec = self._sent.pop(pn)
                self._bytes_in_flight -= rec.size
                self._hole_since.pop(pn, None)
                self._cc.on_acked(rec.send_time_us, rec.size)
                carried = self._recovered_carriers.pop(pn, None)
                if carried:
                    self._recovered_pending -= carried
            self._tlp_anchor = now
        for pn in list(self._sent):
            if pn >= ack.largest_acked:
                break
            if ack.largest_acked - pn >= PACKET_REORDER_THRESHOLD:
                self._declare_lost(pn, now, "reorder_threshold")
            else:
                self._hole_since.setdefault(pn, now)
        self._check_time_losses(now)

    def _on_recovered_frame(self, frame: RecoveredFrame, now: int) -> None:
        listed = set()
        for lo, hi in frame.ranges:
            if hi >= self._next_pn:
                raise ProtocolViolation(f"peer recovered unsent packet {hi}")
            listed.update(range(lo, hi + 1))
        # the peer has the data: drop any retransmission still queued for
        # these packets, even if they were already declared lost
        if self._retransmit:
            kept = deque(
                item for item in self._retransmit if item[0] not in listed
            )
            if len(kept) != len(self._retransmit):
                self._retransmit = kept
        for pn in sorted(listed):
            rec = self._sent.pop(pn, None)
            if rec is None:
                continue  # already acked, lost or recovered: ignore
            self._bytes_in_flight -= rec.size
            self._hole_since.pop(pn, None)
            self.stats.peer_recovered_packets += 1
            self._trace("peer_recovered", pn, "")
            # no retransmission needed, but the loss still happened, so
            # the congestion controller reacts
            if self._cc.on_loss(rec.send_time_us, now):
                self.stats.cwnd_reductions += 1
                self._trace("cwnd_reduce", pn, f"cwnd={self._cc.cwnd:.0f}")

    def _declare_lost(self, pn: int, now: int, reason: str) -> None:
        rec = self._sent.pop(pn)
        self._bytes_in_flight -= rec.size
        self._hole_since.pop(pn, None)
        self.stats.lost_packets += 1
        self._trace("lost", pn, reason)
        if rec.retransmittable:
            self._retransmit.extend((pn, f) for f in rec.retransmittable)
        if self._cc.on_loss(rec.send_time_us, now):
            self.stats.cwnd_reductions += 1
            self._trace("cwnd_reduce", pn, f"cwnd={self._cc.cwnd:.0f}")

    def _check_time_losses(self, now: int) -> None:
        threshold = max(1, self._rtt.srtt_us // HOLE_TIME_FRACTION)
        for pn, since in list(self._hole_since.items()):
            if pn not in self._sent:
                self._hole_since.pop(pn, None)
            elif now - since >= threshold:
                self._declare_lost(pn, now, "time_threshold")

    # -- timers -----------------------------------------------------------------

    def next_timer_us(self) -> Optional[int]:
        deadline = None
        if self._sent and self._tlp_anchor is not None:
            deadline = self._tlp_anchor + TLP_SRTT_MULTIPLIER * self._rtt.srtt_us
        if self._hole_since:
            hole = min(self._hole_since.values()) + max(
                1, self._rtt.srtt_us // HOLE_TIME_FRACTION
            )
            deadline = hole if deadline is None else min(deadline, hole)
        return deadline

    def on_timer(self, now: int) -> None:
        self._check_time_losses(now)
        if (
            self._sent
            and self._tlp_anchor is not None
            and now >= self._tlp_anchor + TLP_SRTT_MULTIPLIER * self._rtt.srtt_us
        ):
            self._fire_probe(now)

    def _fire_probe(self, now: int) -> None:
        newest: Optional[SentRecord] = None
        for pn in reversed(self._sent):
            if self._sent[pn].retransmittable:
                newest = self._sent[pn]
                break
        if newest is not None:
            self._probe_frames = list(newest.retransmittable)
            self.stats.probe_packets += 1
            self._trace("tlp_probe", newest.packet_number, "resend")
        elif (
            self._send_stream is not None
            and self._send_stream.has_pending
            and self._handshake_done
        ):
            self._probe_frames = [self._send_stream.next_frame(self._stream_budget())]
            self.stats.probe_packets += 1
            self._trace("tlp_probe", None, "new_data")
        else:
            # Nothing left worth probing: the stragglers are repair or
            # feedback packets whose acks were lost after the data flow
            # finished.  Drop them without a congestion signal.
            for pn in list(self._sent):
                rec = self._sent.pop(pn)
                self._bytes_in_flight -= rec.size
                self._trace("abandoned", pn, "")
            self._hole_since.clear()
        self._tlp_anchor = now

    # -- outbound -----------------------------------------------------------------

    def flush(self, now: int) -> list[OutPacket]:
        out = []
        if self._probe_frames is not None:
            frames = self._probe_frames
            self._probe_frames = None
            # probes escape the congestion window: a fully lost flight
            # would otherwise deadlock
            out.append(self._build(now, frames, "probe", retransmission=True))
        while True:
            pkt = self._next_packet(now)
            if pkt is None:
                if self._maybe_flush_fec():
                    continue
                break
            out.append(pkt)
        return out

    def _cwnd_ok(self) -> bool:
        return (
            self._bytes_in_flight + self.config.max_packet_size <= self._cc.cwnd
        )

    def _stream_budget(self) -> int:
        return (
            self.config.max_packet_size
            - PROTECTED_HEADER_LEN
            - STREAM_FRAME_OVERHEAD
        )

    def _next_packet(self, now: int) -> Optional[OutPacket]:
        if self._hs_outbox:
            if not self._cwnd_ok():
                return None
            return self._build(now, [HandshakeFrame(self._hs_outbox.popleft())], "hs")
        if self._ack_queued:
            frames: list = []
            carried = None
            if self._strategy == STRATEGY_RECOVERED_FRAME and self._recovered_pending:
                # the Recovered frame precedes the ACK so the sender sees
                # the repair before the acknowledgement of those packets
                carried = frozenset(self._recovered_pending)
                frames.append(RecoveredFrame(_ranges_of(sorted(carried))))
            frames.append(self._ack_frame())
            self._ack_queued = False
            pkt = self._build(now, frames, "feedback")
            if carried:
                self._recovered_carriers[pkt.packet_number] = carried
            return pkt
        if self._repair_frames:
            if not self._cwnd_ok():
                return None
            return self._build(now, [self._repair_frames.popleft()], "repair")
        if self._retransmit:
            if not self._cwnd_ok():
                return None
            _, frame = self._retransmit.popleft()
            kind = "stream" if isinstance(frame, StreamFrame) else "hs"
            return self._build(now, [frame], kind, retransmission=True)
        stream = self._send_stream
        if stream is not None and stream.has_pending and self._handshake_done:
            if stream.next_offset >= self.config.flow_window:
                return None  # peer flow-control window exhausted
            if not self._cwnd_ok():
                return None
            return self._build(now, [stream.next_frame(self._stream_budget())], "stream")
        return None

    def _maybe_flush_fec(self) -> bool:
        """Close partial coding blocks once the stream has fully drained."""
        if (
            self._sender_fec is None
            or not self.config.protect_outgoing
            or self._send_stream is None
            or not self._send_stream.fin_sent
            or self._retransmit
            or self._probe_frames is not None
            or not self._sender_fec.has_partial
        ):
            return False
        self._sender_fec.flush()
        self._queue_repair_frames()
        return bool(self._repair_frames)

    def _ack_frame(self) -> AckFrame:
        # Old gaps are final on a FIFO path: the sender has long since
        # resolved those packets, so fragmentation history only bloats
        # every subsequent ack.  Keep the newest ranges only.
        self._received_pns.prune(2 * ACK_RANGE_CAP)
        ranges = self._received_pns.ranges()[-ACK_RANGE_CAP:]
        return AckFrame(ranges[-1][1], 0, ranges)

    def _queue_repair_frames(self) -> None:
        if self._sender_fec is None:
            return
        max_payload = (
            self.config.max_packet_size
            - PACKET_HEADER_LEN
            - framework.FEC_FRAME_HEADER_LEN
        )
        while self._sender_fec.pending:
            pending = self._sender_fec.pending.pop(0)
            self._repair_frames.extend(
                framework.chunk_repair(pending, max_payload)
            )

    def _build(
        self, now: int, frames: list, kind: str, retransmission: bool = False
    ) -> OutPacket:
        has_stream = any(isinstance(f, StreamFrame) for f in frames)
        protect = (
            has_stream
            and self._sender_fec is not None
            and self.config.protect_outgoing
        )
        pn = self._next_pn
        self._next_pn += 1
        source_id = None
        if protect:
            source_id = self._sender_fec.next_source_id()
        data = encode_packet(Packet(pn, frames, protect, source_id))
        if len(data) > self.config.max_packet_size:
            raise AssertionError(
                f"built a {len(data)}-byte packet (max {self.config.max_packet_size})"
            )
        if protect:
            self._sender_fec.commit_source(source_id, data)
            self._queue_repair_frames()
        ack_eliciting = any(not isinstance(f, AckFrame) for f in frames)
        if ack_eliciting:
            retransmittable = [
                f for f in frames if isinstance(f, (StreamFrame, HandshakeFrame))
            ]
            self._sent[pn] = SentRecord(pn, now, len(data), retransmittable, protect)
            self._bytes_in_flight += len(data)
            self._tlp_anchor = now
        self.stats.packets_sent += 1
        self.stats.bytes_sent += len(data)
        if retransmission:
            self.stats.retransmitted_packets += 1
            self._trace("retransmit", pn, kind)
        self._trace("send", pn, kind)
        return OutPacket(data, pn, kind, protect)


def _ranges_contain(ranges: list[tuple[int, int]], pn: int) -> bool:
    for lo, hi in ranges:
        if lo <= pn <= hi:
            return True
        if lo > pn:
            return False
    return False


def _ranges_of(values: list[int]) -> list[tuple[int, int]]:
    """Collapse a sorted pn list into inclusive ranges."""
    out: list[tuple[int, int]] = []
    for v in values:
        if out and out[-1][1] == v - 1:
            out[-1] = (out[-1][0], v)
        else:
            out.append((v, v))
    return out


def pattern_request_size(request: bytes) -> int:
    """Parse ``GET <n>`` into the response size."""
    if not request.startswith(b"GET "):
        raise ProtocolViolation(f"malformed request {request[:16]!r}")
    return int(request[4:])
