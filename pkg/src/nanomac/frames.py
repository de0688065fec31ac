"""MAC frame codec for the THz nanonetwork superframe.

On-air layout (all multi-octet fields little-endian)::

    PHY:  preamble (4, 0x00000000) | SFD (1, 0xA7) | PHR (1, MAC length) | PSDU
    MAC:  MHR | MSDU | FCS (2)

    kind        MHR fields                              MHR  MSDU  total bits
    Beacon      fc(2) seq(1) dest(2) src(2)             7    33    384
    Data        fc(2) seq(1) dest(2) src(2)             7    4     152
    Ack         fc(2) seq(1)                            3    0     88
    MacCommand  fc(2) seq(1) dest(2) src(2) cmd(1)      8    4     160

Frame control: bits 0-2 frame type, bit 3 ack request, bit 4 frame pending,
bits 5-15 reserved (zero).

The beacon MSDU is a 2-octet superframe specification, a 1-octet pending
address count, and a fixed list of 15 short addresses padded with 0xFFFF.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import IntEnum
from typing import Iterable, Sequence

BROADCAST = 0xFFFF
PREAMBLE = b"\x00\x00\x00\x00"
SFD = 0xA7
PHY_OVERHEAD = 6  # sync header (5) + PHY header (1)
FCS_SIZE = 2
ADDRESS_LIST_SLOTS = 15
BEACON_MSDU_SIZE = 2 + 1 + 2 * ADDRESS_LIST_SLOTS
DATA_MSDU_SIZE = 4
COMMAND_MSDU_SIZE = 4


class FrameError(ValueError):
    """Base class for codec failures."""


class InvalidPayloadLength(FrameError):
    pass


class BadSfd(FrameError):
    pass


class LengthMismatch(FrameError):
    pass


class FcsMismatch(FrameError):
    pass


class UnknownFrameType(FrameError):
    pass


class FrameKind(IntEnum):
    BEACON = 0
    DATA = 1
    ACK = 2
    MAC_COMMAND = 3


class CommandId(IntEnum):
    ASSOCIATION_REQUEST = 0x01
    ASSOCIATION_RESPONSE = 0x02
    DISASSOCIATION_NOTIFY = 0x03
    DATA_REQUEST = 0x04


BASE_BITS = {
    FrameKind.BEACON: 384,
    FrameKind.DATA: 152,
    FrameKind.ACK: 88,
    FrameKind.MAC_COMMAND: 160,
}

_MHR_SIZE = {
    FrameKind.BEACON: 7,
    FrameKind.DATA: 7,
    FrameKind.ACK: 3,
    FrameKind.MAC_COMMAND: 8,
}

_MSDU_SIZE = {
    FrameKind.BEACON: BEACON_MSDU_SIZE,
    FrameKind.DATA: DATA_MSDU_SIZE,
    FrameKind.ACK: 0,
    FrameKind.MAC_COMMAND: COMMAND_MSDU_SIZE,
}

_ACK_REQUEST = 0x0008
_FRAME_PENDING = 0x0010
_TYPE_MASK = 0x0007


@dataclass(frozen=True)
class MacFrame:
    """A parsed MAC frame.

    ``dest`` and ``src`` are ignored for acks, ``command_id`` is only
    meaningful for MAC command frames. ``payload`` is the raw MSDU.
    """

    kind: FrameKind
    sequence: int = 0
    dest: int | None = None
    src: int | None = None
    payload: bytes = b""
    command_id: CommandId | None = None
    ack_request: bool = False
    frame_pending: bool = False

    def __post_init__(self):
        if not 0 <= self.sequence <= 0xFF:
            raise ValueError(f"sequence must fit one octet, got {self.sequence}")
        for name in ("dest", "src"):
            value = getattr(self, name)
            if value is not None and not 0 <= value <= 0xFFFF:
                raise ValueError(f"{name} must be a 16-bit address, got {value}")


@dataclass(frozen=True)
class BeaconPayload:
    superframe_spec: int
    pending_count: int
    addresses: tuple[int, ...] = field(default_factory=tuple)

    def to_bytes(self) -> bytes:
        if len(self.addresses) > ADDRESS_LIST_SLOTS:
            raise InvalidPayloadLength(
                f"address list holds at most {ADDRESS_LIST_SLOTS} entries"
            )
        if BROADCAST in self.addresses:
            raise ValueError("0xFFFF is reserved and cannot be listed")
        if not 0 <= self.pending_count <= len(self.addresses):
            raise ValueError("pending count exceeds listed addresses")
        padded = list(self.addresses) + [BROADCAST] * (
            ADDRESS_LIST_SLOTS - len(self.addresses)
        )
        return struct.pack(
            f"<HB{ADDRESS_LIST_SLOTS}H",
            self.superframe_spec,
            self.pending_count,
            *padded,
        )

    @classmethod
    def from_bytes(cls, msdu: bytes) -> "BeaconPayload":
        if len(msdu) != BEACON_MSDU_SIZE:
            raise InvalidPayloadLength(
                f"beacon MSDU must be {BEACON_MSDU_SIZE} octets, got {len(msdu)}"
            )
        spec, pending, *addresses = struct.unpack(f"<HB{ADDRESS_LIST_SLOTS}H", msdu)
        listed = tuple(a for a in addresses if a != BROADCAST)
        return cls(spec, pending, listed)


def compute_fcs(octets: bytes) -> int:
    """CRC-16 over ``octets``: polynomial x^16 + x^12 + x^5 + 1, zero initial
    register, bits processed least-significant first, no final xor."""
    crc = 0
    for byte in octets:
        crc ^= byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0x8408
            else:
                crc >>= 1
    return crc


def frame_bit_length(kind: FrameKind, scale: float = 1.0) -> int:
    """PHY-encapsulated size of ``kind`` scaled by ``scale``, rounded half up."""
    if not 0.5 <= scale <= 1.0:
        raise ValueError(f"scale must lie in [0.5, 1.0], got {scale}")
    exact = Decimal(str(scale)) * BASE_BITS[FrameKind(kind)]
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def _mac_octets(frame: MacFrame) -> bytes:
    kind = FrameKind(frame.kind)
    if len(frame.payload) != _MSDU_SIZE[kind]:
        raise InvalidPayloadLength(
            f"{kind.name} MSDU must be {_MSDU_SIZE[kind]} octets, "
            f"got {len(frame.payload)}"
        )
    fc = int(kind)
    if frame.ack_request:
        fc |= _ACK_REQUEST
    if frame.frame_pending:
        fc |= _FRAME_PENDING
    header = struct.pack("<HB", fc, frame.sequence)
    if kind is not FrameKind.ACK:
        if frame.dest is None or frame.src is None:
            raise ValueError(f"{kind.name} frame needs dest and src addresses")
        header += struct.pack("<HH", frame.dest, frame.src)
    if kind is FrameKind.MAC_COMMAND:
        if frame.command_id is None:
            raise ValueError("MAC command frame needs a command_id")
        header += bytes([int(frame.command_id)])
    body = header + frame.payload
    return body + struct.pack("<H", compute_fcs(body))


def encode_frame(frame: MacFrame) -> bytes:
    """Serialize ``frame`` into PHY octets (sync header, PHR, PSDU)."""
    mac = _mac_octets(frame)
    return PREAMBLE + bytes([SFD, len(mac)]) + mac


def decode_frame(data: bytes | Sequence[int]) -> MacFrame:
    """Parse PHY octets, or a sequence of bits, back into a :class:`MacFrame`.

    Checks are applied in wire order: sync header, length, FCS, then frame type.
    """
    octets = data if isinstance(data, (bytes, bytearray)) else bits_to_octets(data)
    octets = bytes(octets)
    if len(octets) * 8 < BASE_BITS[FrameKind.ACK]:
        raise LengthMismatch(f"{len(octets) * 8} bits is shorter than any frame")
    if octets[:4] != PREAMBLE or octets[4] != SFD:
        raise BadSfd(f"sync header {octets[:5].hex()} is not 00000000a7")
    mac = octets[PHY_OVERHEAD:]
    if octets[5] != len(mac):
        raise LengthMismatch(f"PHY header says {octets[5]} octets, got {len(mac)}")
    body, fcs = mac[:-FCS_SIZE], struct.unpack("<H", mac[-FCS_SIZE:])[0]
    if compute_fcs(body) != fcs:
        raise FcsMismatch(f"FCS {fcs:#06x} != computed {compute_fcs(body):#06x}")

    fc, sequence = struct.unpack_from("<HB", body)
    frame_type = fc & _TYPE_MASK
    if frame_type not in FrameKind._value2member_map_ or fc & ~0x001F:
        raise UnknownFrameType(f"frame control {fc:#06x}")
    kind = FrameKind(frame_type)
    if len(body) != _MHR_SIZE[kind] + _MSDU_SIZE[kind]:
        raise LengthMismatch(f"{kind.name} frame cannot be {len(mac)} MAC octets")

    dest = src = None
    command_id = None
    if kind is not FrameKind.ACK:
        dest, src = struct.unpack_from("<HH", body, 3)
    if kind is FrameKind.MAC_COMMAND:
        try:
            command_id = CommandId(body[7])
        except ValueError:
            raise UnknownFrameType(f"command id {body[7]:#04x}") from None
    return MacFrame(
        kind=kind,
        sequence=sequence,
        dest=dest,
        src=src,
        payload=bytes(body[_MHR_SIZE[kind]:]),
        command_id=command_id,
        ack_request=bool(fc & _ACK_REQUEST),
        frame_pending=bool(fc & _FRAME_PENDING),
    )


def octets_to_bits(octets: bytes) -> list[int]:
    """Expand octets into on-air bit order (least-significant bit first)."""
    return [(byte >> i) & 1 for byte in octets for i in range(8)]


def bits_to_octets(bits: Iterable[int]) -> bytes:
    bits = list(bits)
    if len(bits) % 8:
        raise LengthMismatch(f"{len(bits)} bits is not a whole number of octets")
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for j, bit in enumerate(bits[i:i + 8]):
            if bit not in (0, 1):
                raise ValueError(f"bit values must be 0 or 1, got {bit}")
            byte |= bit << j
        out.append(byte)
    return bytes(out)


def hexdump(octets: bytes, width: int = 16) -> str:
    lines = []
    for offset in range(0, len(octets), width):
        chunk = octets[offset:offset + width]
        lines.append(f"{offset:04x}  {chunk.hex(' ')}")
    return "\n".join(lines)


# Canonical frames used by the CLI and by tests.

def data_frame(src: int, dest: int, payload: bytes, sequence: int = 0) -> MacFrame:
    return MacFrame(FrameKind.DATA, sequence, dest, src, payload, ack_request=True)


def ack_frame(sequence: int, frame_pending: bool = False) -> MacFrame:
    return MacFrame(FrameKind.ACK, sequence, frame_pending=frame_pending)


def command_frame(
    command: CommandId, src: int, dest: int, payload: bytes = bytes(4), sequence: int = 0
) -> MacFrame:
    return MacFrame(
        FrameKind.MAC_COMMAND, sequence, dest, src, payload, command_id=command,
        ack_request=True,
    )


def beacon_frame(
    src: int,
    addresses: Sequence[int] = (),
    pending_count: int = 0,
    sequence: int = 0,
    superframe_spec: int = 0,
) -> MacFrame:
    msdu = BeaconPayload(superframe_spec, pending_count, tuple(addresses)).to_bytes()
    return MacFrame(
        FrameKind.BEACON, sequence, BROADCAST, src, msdu,
        frame_pending=pending_count > 0,
    )
