"""Scheme-agnostic FEC plumbing.

This module owns everything between the transport and the raw codes:

* source payload identifiers (32-bit) and repair identifiers (64-bit),
* the repair frame wire format, including chunking of repair symbols
  that do not fit a single packet,
* sender-side emission scheduling (block completion / window steps),
* receiver-side reassembly and recovery bookkeeping.

Payload id layouts.  Block codes split the 32-bit source id into a
24-bit block number and an 8-bit offset inside the block; convolutional
codes use the full 32 bits as a sequence offset.  Repair ids are 64-bit:
the high half carries the framework part (block number + repair index,
or window start), the low half the scheme-specific field (repair index
for XOR/RS, coefficient seed for RLC).

Frame wire format (big-endian), header padded to a fixed 16 bytes::

    0      1           3       4          12    13    14      16
    | 0x0a | dl<<1 | F | chunk | repair id | nss | nrs | reserved | payload

where ``dl`` is the 15-bit payload length of this chunk and ``F`` (the
least significant bit) marks the final chunk of a repair symbol.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import schemes
from .rng import splitmix64_mix
from .schemes import (
    SCHEME_REED_SOLOMON,
    SCHEME_RLC,
    SCHEME_XOR,
    BlockCodeParams,
    ConvolutionalParams,
    RepairSymbol,
    frame_symbol,
    unframe_symbol,
)

FEC_FRAME_TYPE = 0x0A
FEC_FRAME_HEADER_LEN = 16
MAX_CHUNKS = 256
MAX_CHUNK_PAYLOAD = 0x7FFF  # 15-bit length field

_HEADER = struct.Struct(">BHBQBBH")


class FecFrameworkError(Exception):
    pass


class IdSpaceExhausted(FecFrameworkError):
    """The 24-bit block space or 32-bit sequence space overflowed."""


class ChunkingOverflow(FecFrameworkError):
    """A repair symbol does not fit in 256 chunks of the given size."""


class MalformedFrame(FecFrameworkError):
    """Truncated or self-inconsistent repair frame bytes."""


class NotAFecFrame(FecFrameworkError):
    """The buffer does not start with the repair frame type byte."""


class UnknownScheme(FecFrameworkError):
    """Scheme identifier outside the registry."""


# ---------------------------------------------------------------------------
# Payload identifiers

def block_source_id(block_number: int, offset: int) -> int:
    if not 0 <= block_number < 1 << 24:
        raise IdSpaceExhausted(f"block number {block_number} exceeds 24 bits")
    if not 0 <= offset < 1 << 8:
        raise IdSpaceExhausted(f"offset {offset} exceeds 8 bits")
    return (block_number << 8) | offset


def split_block_source_id(raw: int) -> tuple[int, int]:
    return raw >> 8, raw & 0xFF


def block_repair_id(block_number: int, index: int, scheme_specific: int) -> int:
    return (block_source_id(block_number, index) << 32) | (scheme_specific & 0xFFFFFFFF)


def conv_repair_id(window_start: int, scheme_specific: int) -> int:
    if not 0 <= window_start < 1 << 32:
        raise IdSpaceExhausted(f"window start {window_start} exceeds 32 bits")
    return (window_start << 32) | (scheme_specific & 0xFFFFFFFF)


def split_repair_id(raw: int) -> tuple[int, int]:
    """(framework part, scheme-specific part)."""
    return (raw >> 32) & 0xFFFFFFFF, raw & 0xFFFFFFFF


class SourceIdSequence:
    """Deterministic source-id assignment.

    Block mode increments the offset and rolls the block number when the
    offset reaches k; convolutional mode is a plain 32-bit counter.
    """

    def __init__(self, mode: str, k: int = 1):
        if mode not in ("block", "convolutional"):
            raise ValueError(f"unknown id mode {mode!r}")
        self.mode = mode
        self.k = k
        self._counter = 0

    def next(self) -> int:
        if self.mode == "convolutional":
            if self._counter >= 1 << 32:
                raise IdSpaceExhausted("32-bit sequence space exhausted")
            raw = self._counter
        else:
            block, offset = divmod(self._counter, self.k)
            raw = block_source_id(block, offset)
        self._counter += 1
        return raw


# ---------------------------------------------------------------------------
# Repair frame wire format

@dataclass
class FecFrame:
    """One chunk of a repair symbol plus its announced code shape."""

    fin: bool
    chunk_offset: int
    repair_id: int
    nss: int
    nrs: int
    payload: bytes

    @property
    def data_length(self) -> int:
        return len(self.payload)


def chunk_frames(
    payload: bytes,
    repair_id: int,
    nss: int,
    nrs: int,
    max_frame_payload: int,
) -> list[FecFrame]:
    """Split one repair symbol into frames of at most ``max_frame_payload``
    payload bytes each; the F bit marks the final chunk only.  Raises
    :class:`ChunkingOverflow` if the symbol needs more than 256 chunks."""
    if not 1 <= max_frame_payload <= MAX_CHUNK_PAYLOAD:
        raise ValueError(f"max_frame_payload must be in [1, {MAX_CHUNK_PAYLOAD}]")
    if len(payload) == 0:
        raise ValueError("repair payload must not be empty")
    if len(payload) > max_frame_payload * MAX_CHUNKS:
        raise ChunkingOverflow(
            f"{len(payload)}-byte repair exceeds {MAX_CHUNKS} chunks "
            f"of {max_frame_payload} bytes"
        )
    chunks = [
        payload[i : i + max_frame_payload]
        for i in range(0, len(payload), max_frame_payload)
    ]
    return [
        FecFrame(idx == len(chunks) - 1, idx, repair_id, nss, nrs, chunk)
        for idx, chunk in enumerate(chunks)
    ]


def chunk_repair(pending: "PendingRepair", max_frame_payload: int) -> list[FecFrame]:
    return chunk_frames(
        pending.payload,
        pending.repair_id,
        pending.nss,
        pending.nrs,
        max_frame_payload,
    )


def encode_fec_frame(frame: FecFrame) -> bytes:
    return (
        _HEADER.pack(
            FEC_FRAME_TYPE,
            (frame.data_length << 1) | int(frame.fin),
            frame.chunk_offset,
            frame.repair_id,
            frame.nss,
            frame.nrs,
            0,
        )
        + frame.payload
    )


def serialize_fec_frames(
    payload: bytes,
    repair_id: int,
    nss: int,
    nrs: int,
    max_frame_payload: int,
) -> list[bytes]:
    """Wire-ready bytes for every chunk of one repair symbol."""
    return [
        encode_fec_frame(f)
        for f in chunk_frames(payload, repair_id, nss, nrs, max_frame_payload)
    ]


def parse_fec_frame(buf: bytes, offset: int = 0) -> tuple[FecFrame, int]:
    """Parse one repair frame; returns (frame, bytes consumed)."""
    if len(buf) - offset < 1:
        raise MalformedFrame("empty buffer")
    if buf[offset] != FEC_FRAME_TYPE:
        raise NotAFecFrame(f"type byte 0x{buf[offset]:02x}")
    if len(buf) - offset < FEC_FRAME_HEADER_LEN:
        raise MalformedFrame(
            f"truncated header: {len(buf) - offset} < {FEC_FRAME_HEADER_LEN}"
        )
    _, dl_fin, chunk_offset, repair_id, nss, nrs, _reserved = _HEADER.unpack_from(
        buf, offset
    )
    # The reserved field is ignored on receipt.
    data_length = dl_fin >> 1
    fin = bool(dl_fin & 1)
    end = offset + FEC_FRAME_HEADER_LEN + data_length
    if len(buf) < end:
        raise MalformedFrame(f"payload truncated: need {data_length} bytes")
    payload = bytes(buf[offset + FEC_FRAME_HEADER_LEN : end])
    return (
        FecFrame(fin, chunk_offset, repair_id, nss, nrs, payload),
        FEC_FRAME_HEADER_LEN + data_length,
    )


# ---------------------------------------------------------------------------
# Sender side

@dataclass
class PendingRepair:
    """A repair symbol ready for the packetiser."""

    payload: bytes
    repair_id: int
    nss: int
    nrs: int


class SenderFec:
    """Per-endpoint encoder state and repair emission scheduling.

    Block schemes emit their n - k repairs when a block fills; the
    convolutional scheme emits its repairs every k-th source symbol.
    ``flush`` closes partial blocks / window steps at end of stream, with
    the actual source count advertised in the frames.
    """

    def __init__(self, scheme: int, config, symbol_size: int):
        self.scheme = scheme
        self.symbol_size = symbol_size
        self.pending: list[PendingRepair] = []
        self._pending_id: Optional[int] = None
        self._staged_params = None
        if scheme in (SCHEME_XOR, SCHEME_REED_SOLOMON):
            if not isinstance(config, BlockCodeParams):
                raise schemes.InvalidParams("block scheme needs BlockCodeParams")
            if config.k > 255 or config.repairs > 255:
                raise schemes.InvalidParams("k and n-k must fit 8 bits")
            self.params = config
            self.lanes = 1
            self._lane_symbols: list[list[np.ndarray]] = [[]]
            self._lane_blocks: list[int] = [0]
            self._counter = 0
        elif scheme == SCHEME_RLC:
            if not isinstance(config, ConvolutionalParams):
                raise schemes.InvalidParams("RLC needs ConvolutionalParams")
            if config.k > 255 or config.repairs > 255 or config.c > 255:
                raise schemes.InvalidParams(
                    "k, n-k and the window must fit the 8-bit frame fields"
                )
            self.params = config
            self._ids = SourceIdSequence("convolutional")
            self._window: list[tuple[int, np.ndarray]] = []
            self._since_step = 0
            self._repair_counter = 0
        else:
            raise UnknownScheme(f"scheme 0x{scheme:02x}")

    def configure_lanes(self, lanes: int) -> None:
        """Interleave consecutive sources over ``lanes`` independent blocks
        (lane = block number mod lanes).  XOR only."""
        if self.scheme != SCHEME_XOR:
            raise schemes.InvalidParams("lane interleaving is an XOR feature")
        if lanes < 1 or self._counter:
            raise schemes.InvalidParams("lanes must be set before the first symbol")
        self.lanes = lanes
        self._lane_symbols = [[] for _ in range(lanes)]
        self._lane_blocks = [0] * lanes

    def set_code_params(self, params) -> None:
        """Stage new code parameters; they apply from the next block or
        window step, in-flight blocks complete under the old ones."""
        if self.scheme == SCHEME_RLC:
            if not isinstance(params, ConvolutionalParams):
                raise schemes.InvalidParams("RLC needs ConvolutionalParams")
            if params.k > 255 or params.repairs > 255 or params.c > 255:
                raise schemes.InvalidParams("parameters must fit 8 bits")
        else:
            if not isinstance(params, BlockCodeParams):
                raise schemes.InvalidParams("block scheme needs BlockCodeParams")
            if params.k > 255 or params.repairs > 255:
                raise schemes.InvalidParams("parameters must fit 8 bits")
        self._staged_params = params

    # -- source registration --------------------------------------------

    def next_source_id(self) -> int:
        """Reserve the id for the packet about to be built."""
        if self._pending_id is not None:
            raise FecFrameworkError("previous source id was never committed")
        if self.scheme == SCHEME_RLC:
            raw = self._ids.next()
        else:
            lane = self._counter % self.lanes
            block = self._lane_blocks[lane] * self.lanes + lane
            raw = block_source_id(block, len(self._lane_symbols[lane]))
        self._pending_id = raw
        return raw

    def commit_source(self, raw_id: int, packet_bytes: bytes) -> None:
        """Register the final packet bytes for a previously reserved id."""
        if self._pending_id != raw_id:
            raise FecFrameworkError("commit does not match the reserved id")
        self._pending_id = None
        symbol = frame_symbol(packet_bytes, self.symbol_size)
        if self.scheme == SCHEME_RLC:
            self._window.append((raw_id, symbol))
            if len(self._window) > self.params.c:
                self._window.pop(0)
            self._since_step += 1
            if self._since_step >= self.params.k:
                self._emit_window_repairs()
        else:
            lane = self._counter % self.lanes
            self._counter += 1
            self._lane_symbols[lane].append(symbol)
            if len(self._lane_symbols[lane]) >= self.params.k:
                self._emit_block(lane)

    def flush(self) -> None:
        """Close partial blocks / window steps (end of stream)."""
        if self._pending_id is not None:
            raise FecFrameworkError("cannot flush with an uncommitted source")
        if self.scheme == SCHEME_RLC:
            if self._since_step and self._window:
                self._emit_window_repairs()
        else:
            for lane in range(self.lanes):
                if self._lane_symbols[lane]:
                    self._emit_block(lane)

    @property
    def has_partial(self) -> bool:
        if self.scheme == SCHEME_RLC:
            return self._since_step > 0 and bool(self._window)
        return any(self._lane_symbols)

    # -- emission ---------------------------------------------------------

    def _emit_block(self, lane: int) -> None:
        symbols = self._lane_symbols[lane]
        block = self._lane_blocks[lane] * self.lanes + lane
        nss = len(symbols)
        if self.scheme == SCHEME_XOR:
            repairs = [schemes.xor_encode(symbols)]
        else:
            repairs = schemes.rs_encode(symbols, self.params)
        for idx, repair in enumerate(repairs):
            self.pending.append(
                PendingRepair(
                    payload=repair.payload.tobytes(),
                    repair_id=block_repair_id(block, idx, repair.scheme_specific),
                    nss=nss,
                    nrs=len(repairs),
                )
            )
        self._lane_symbols[lane] = []
        self._lane_blocks[lane] += 1
        if self._staged_params is not None and not any(self._lane_symbols):
            self.params = self._staged_params
            self._staged_params = None

    def _emit_window_repairs(self) -> None:
        self._since_step = 0
        window = self._window[-self.params.c :]
        window_start = window[0][0]
        symbols = [sym for _, sym in window]
        for _ in range(self.params.repairs):
            seed = self._next_seed()
            repair = schemes.rlc_encode(symbols, window_start, seed)
            self.pending.append(
                PendingRepair(
                    payload=repair.payload.tobytes(),
                    repair_id=conv_repair_id(window_start, seed),
                    nss=len(symbols),
                    nrs=self.params.repairs,
                )
            )
        if self._staged_params is not None:
            new = self._staged_params
            self._staged_params = None
            self.params = new
            if len(self._window) > new.c:
                self._window = self._window[-new.c :]

    def _next_seed(self) -> int:
        self._repair_counter += 1
        seed = splitmix64_mix(self._repair_counter) & 0xFFFFFFFF
        return seed if seed else 1


# ---------------------------------------------------------------------------
# Receiver side

@dataclass
class _PartialRepair:
    chunks: dict[int, bytes] = field(default_factory=dict)
    fin_offset: Optional[int] = None
    nss: int = 0
    nrs: int = 0


@dataclass
class _BlockState:
    sources: dict[int, np.ndarray] = field(default_factory=dict)
    repairs: dict[int, np.ndarray] = field(default_factory=dict)
    nss: Optional[int] = None
    nrs: Optional[int] = None


class ReceiverFec:
    """Buffers received source/repair symbols and drives recovery.

    Returns recovered packets as ``(source id, packet bytes)`` pairs; a
    packet that was actually received is never reported (and recovery of
    the same id is reported at most once).  Block state is discarded when
    the block completes or falls 64 blocks behind; convolutional state
    eviction is delegated to :class:`~fecsim.schemes.RlcDecoder`.
    """

    BLOCK_BACKLOG = 64

    def __init__(self, scheme: int, symbol_size: int, window: int = 1):
        if scheme not in (SCHEME_XOR, SCHEME_REED_SOLOMON, SCHEME_RLC):
            raise UnknownScheme(f"scheme 0x{scheme:02x}")
        self.scheme = scheme
        self.symbol_size = symbol_size
        self._reassembly: dict[int, _PartialRepair] = {}
        self._received: set[int] = set()
        self._recovered: set[int] = set()
        self._blocks: dict[int, _BlockState] = {}
        self._newest_block = -1
        self._rlc = (
            schemes.RlcDecoder(window) if scheme == SCHEME_RLC else None
        )

    def on_source_symbol(
        self, raw_id: int, packet_bytes: bytes
    ) -> list[tuple[int, bytes]]:
        """Register a received protected packet; returns packets this
        completes recovery for (idempotent for duplicates)."""
        if raw_id in self._received:
            return []
        self._received.add(raw_id)
        symbol = frame_symbol(packet_bytes, self.symbol_size)
        if self.scheme == SCHEME_RLC:
            return self._emit(self._rlc.add_source(raw_id, symbol))
        block_no, offset = split_block_source_id(raw_id)
        state = self._block(block_no)
        if state is None:
            return []
        state.sources.setdefault(offset, symbol)
        return self._attempt_block(block_no)

    def on_fec_frame(self, frame: FecFrame) -> list[tuple[int, bytes]]:
        """Feed one repair frame chunk; returns newly recovered packets."""
        part = self._reassembly.get(frame.repair_id)
        if part is None:
            part = _PartialRepair(nss=frame.nss, nrs=frame.nrs)
            self._reassembly[frame.repair_id] = part
        elif (part.nss, part.nrs) != (frame.nss, frame.nrs):
            raise MalformedFrame("chunks of one repair announce different codes")
        if frame.chunk_offset in part.chunks:
            return []  # duplicate chunk
        part.chunks[frame.chunk_offset] = frame.payload
        if frame.fin:
            part.fin_offset = frame.chunk_offset
        if part.fin_offset is None or len(part.chunks) != part.fin_offset + 1:
            return []
        payload = b"".join(part.chunks[i] for i in range(part.fin_offset + 1))
        del self._reassembly[frame.repair_id]
        symbol = np.frombuffer(payload, dtype=np.uint8)
        hi, lo = split_repair_id(frame.repair_id)
        if self.scheme == SCHEME_RLC:
            return self._emit(
                self._rlc.add_repair(hi, frame.nss, lo, symbol)
            )
        block_no, index = split_block_source_id(hi)
        state = self._block(block_no)
        if state is None:
            return []
        state.repairs.setdefault(index, symbol)
        state.nss, state.nrs = frame.nss, frame.nrs
        return self._attempt_block(block_no)

    # -- internals --------------------------------------------------------

    def _block(self, block_no: int) -> Optional[_BlockState]:
        if block_no <= self._newest_block - self.BLOCK_BACKLOG:
            return None
        if block_no > self._newest_block:
            self._newest_block = block_no
            floor = self._newest_block - self.BLOCK_BACKLOG
            for bn in [b for b in self._blocks if b <= floor]:
                del self._blocks[bn]
        return self._blocks.setdefault(block_no, _BlockState())

    def _attempt_block(self, block_no: int) -> list[tuple[int, bytes]]:
        state = self._blocks.get(block_no)
        if state is None or state.nss is None:
            return []  # code shape unknown until a repair frame arrives
        k = state.nss
        missing = [o for o in range(k) if o not in state.sources]
        if not missing:
            del self._blocks[block_no]
            return []
        if len(state.sources) + len(state.repairs) < k:
            return []
        if self.scheme == SCHEME_XOR:
            if len(missing) > 1 or not state.repairs:
                return []
            received = [state.sources.get(o) for o in range(k)]
            solved = {missing[0]: schemes.xor_recover(
                received, next(iter(state.repairs.values()))
            )}
        else:
            params = BlockCodeParams(k + state.nrs, k)
            try:
                solved = schemes.rs_decode(state.sources, state.repairs, params)
            except schemes.Unrecoverable:
                return []
        out = []
        for offset in sorted(solved):
            state.sources[offset] = solved[offset]
            out.append((block_source_id(block_no, offset), solved[offset]))
        if len(state.sources) == k:
            del self._blocks[block_no]
        return self._emit(out)

    def _emit(self, pairs: list[tuple[int, np.ndarray]]) -> list[tuple[int, bytes]]:
        out = []
        for raw_id, symbol in pairs:
            if raw_id in self._received or raw_id in self._recovered:
                continue
            self._recovered.add(raw_id)
            out.append((raw_id, unframe_symbol(symbol)))
        return out
