"""XBF packet header: iBF, filter bitmap and the per-partition filter set.

Wire layout (all multi-byte integers big-endian)::

    0x5B | version 0x01 | u16 partition count |P|
    bitmap, ceil(|P|/8) bytes; partition i is bit (7 - i % 8) of byte i // 8
    iBF, m/8 bytes
    [flag byte: 0x00 raw, 0x01 run-length compressed]   (compressed form only)
    zBF: present filters in ascending partition order, m/8 bytes each,
         or the packed compressed bit stream

The compressed zBF is the concatenation of the present filters (filter
bit 0 first) written as its first bit followed by the Elias-gamma codes of
its maximal run lengths, packed MSB first and zero padded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .bloom import BitFilter
from .partition import Partitioning
from .trees import MulticastTree

MAGIC = 0x5B
VERSION = 0x01
FLAG_RAW = 0x00
FLAG_COMPRESSED = 0x01
FIXED_BYTES = 4


class HeaderError(ValueError):
    pass


@dataclass(frozen=True)
class XbfHeader:
    ibf: BitFilter
    partition_count: int
    zbf: tuple[tuple[int, BitFilter], ...]

    def __post_init__(self) -> None:
        m = self.ibf.m
        pids = [p for p, _ in self.zbf]
        if pids != sorted(set(pids)):
            raise HeaderError("zBF must be strictly ascending by partition id")
        for p, f in self.zbf:
            if not 0 <= p < self.partition_count:
                raise HeaderError(f"partition {p} outside 0..{self.partition_count - 1}")
            if f.m != m:
                raise HeaderError("all filters must share the iBF length")

    @property
    def m(self) -> int:
        return self.ibf.m

    @property
    def present(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.zbf)

    @property
    def bitmap(self) -> tuple[bool, ...]:
        present = set(self.present)
        return tuple(i in present for i in range(self.partition_count))

    def filter_for(self, partition: int) -> BitFilter | None:
        for p, f in self.zbf:
            if p == partition:
                return f
        return None

    def with_ibf(self, ibf: BitFilter) -> XbfHeader:
        return XbfHeader(ibf, self.partition_count, self.zbf)

    def size_bits(self) -> int:
        """Header overhead: iBF + bitmap + uncompressed zBF."""
        return self.m + self.partition_count + self.m * len(self.zbf)

    def compressed_size_bits(self) -> int:
        """Header overhead with the zBF run-length compressed."""
        return self.m + self.partition_count + compress_zbf(self).bit_length


def entry_partition(tree: MulticastTree, partitioning: Partitioning) -> int:
    """Partition of the source's lowest-numbered tree out-link."""
    g = partitioning.graph
    first = min(e for e in g.out_links[tree.source] if e in tree.links)
    return partitioning.assignment[first]


def build_header(
    tree: MulticastTree, partitioning: Partitioning, entry: int | None = None
) -> XbfHeader:
    """Encode ``tree``: one filter per touched partition, iBF set to the
    entry partition's filter."""
    if not tree.links:
        raise HeaderError("empty multicast tree")
    m = partitioning.max_partition_size
    per_part: dict[int, int] = {}
    for e in tree.links:
        p = partitioning.assignment[e]
        per_part[p] = per_part.get(p, 0) | (1 << partitioning.bit_of[e])
    zbf = tuple((p, BitFilter(bits, m)) for p, bits in sorted(per_part.items()))
    if entry is None:
        entry = entry_partition(tree, partitioning)
    if entry not in per_part:
        raise HeaderError(f"entry partition {entry} not crossed by the tree")
    return XbfHeader(BitFilter(per_part[entry], m), partitioning.partition_count, zbf)


# --------------------------------------------------------------------------
# Elias-gamma


def elias_gamma_encode(n: int) -> str:
    """``floor(log2 n)`` zeros followed by ``n`` in binary."""
    if n < 1:
        raise ValueError("Elias-gamma codes positive integers only")
    b = bin(n)[2:]
    return "0" * (len(b) - 1) + b


def read_gamma(bits: str, pos: int = 0) -> tuple[int, int]:
    """Decode one gamma code starting at ``pos``; returns ``(n, next_pos)``."""
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    end = pos + 2 * zeros + 1
    if end > len(bits):
        raise ValueError("truncated Elias-gamma code")
    return int(bits[pos + zeros : end], 2), end


def elias_gamma_decode(code: str) -> int:
    n, end = read_gamma(code)
    if end != len(code):
        raise ValueError("trailing bits after Elias-gamma code")
    return n


def run_lengths(bits: str) -> list[int]:
    runs = []
    i = 0
    while i < len(bits):
        j = i
        while j < len(bits) and bits[j] == bits[i]:
            j += 1
        runs.append(j - i)
        i = j
    return runs


def _pack(bits: str) -> bytes:
    if not bits:
        return b""
    padded = bits + "0" * (-len(bits) % 8)
    return int(padded, 2).to_bytes(len(padded) // 8, "big")


def _unpack(data: bytes) -> str:
    if not data:
        return ""
    return bin(int.from_bytes(data, "big"))[2:].zfill(8 * len(data))


@dataclass(frozen=True)
class CompressedZbf:
    first_bit: int
    run_lengths: tuple[int, ...]
    bit_stream: bytes
    bit_length: int

    @property
    def raw_bits(self) -> int:
        return sum(self.run_lengths)


def zbf_bits(h: XbfHeader) -> str:
    return "".join(f.to_string() for _, f in h.zbf)


def compress_bits(bits: str) -> CompressedZbf:
    if not bits:
        return CompressedZbf(0, (), b"", 0)
    runs = run_lengths(bits)
    stream = bits[0] + "".join(elias_gamma_encode(r) for r in runs)
    return CompressedZbf(int(bits[0]), tuple(runs), _pack(stream), len(stream))


def decompress_bits(stream: str, total: int) -> str:
    """Inverse of :func:`compress_bits` given the uncompressed length."""
    if total == 0:
        return ""
    bit = stream[0]
    pos = 1
    out = []
    produced = 0
    while produced < total:
        n, pos = read_gamma(stream, pos)
        out.append(bit * n)
        produced += n
        bit = "1" if bit == "0" else "0"
    if produced != total:
        raise HeaderError("run lengths overshoot the zBF length")
    return "".join(out)


def compress_zbf(h: XbfHeader) -> CompressedZbf:
    return compress_bits(zbf_bits(h))


def decompress_zbf(c: CompressedZbf, present: Sequence[int], m: int) -> tuple[tuple[int, BitFilter], ...]:
    bits = decompress_bits(_unpack(c.bit_stream)[: c.bit_length], len(present) * m)
    return tuple(
        (p, BitFilter.from_string(bits[i * m : (i + 1) * m])) for i, p in enumerate(present)
    )


# --------------------------------------------------------------------------
# wire format


def _bitmap_bytes(present: Iterable[int], count: int) -> bytes:
    out = bytearray((count + 7) // 8)
    for i in present:
        out[i // 8] |= 1 << (7 - i % 8)
    return bytes(out)


def _bitmap_present(data: bytes, count: int) -> list[int]:
    return [i for i in range(count) if data[i // 8] >> (7 - i % 8) & 1]


def filter_offset(bitmap: bytes, count: int, partition: int, m: int) -> int | None:
    """Byte offset of ``partition``'s filter in a raw serialized header,
    computed from the bitmap alone."""
    present = _bitmap_present(bitmap, count)
    if partition not in present:
        return None
    return FIXED_BYTES + len(bitmap) + m // 8 + present.index(partition) * (m // 8)


def serialize(h: XbfHeader, compress: bool = False) -> bytes:
    if h.partition_count > 0xFFFF:
        raise HeaderError("at most 65535 partitions fit the count field")
    if h.m % 8:
        raise HeaderError("filter length must be a multiple of 8 bits")
    head = bytes([MAGIC, VERSION]) + h.partition_count.to_bytes(2, "big")
    head += _bitmap_bytes(h.present, h.partition_count) + h.ibf.to_bytes()
    raw = b"".join(f.to_bytes() for _, f in h.zbf)
    if not compress:
        return head + raw
    c = compress_zbf(h)
    if len(c.bit_stream) < len(raw):
        return head + bytes([FLAG_COMPRESSED]) + c.bit_stream
    return head + bytes([FLAG_RAW]) + raw


def deserialize(data: bytes, m: int = 256, compressed: bool = False) -> XbfHeader:
    if m % 8:
        raise HeaderError("filter length must be a multiple of 8 bits")
    if len(data) < FIXED_BYTES or data[0] != MAGIC:
        raise HeaderError("not an XBF header")
    if data[1] != VERSION:
        raise HeaderError(f"unsupported version {data[1]}")
    count = int.from_bytes(data[2:4], "big")
    pos = FIXED_BYTES
    nb = (count + 7) // 8
    present = _bitmap_present(data[pos : pos + nb], count)
    pos += nb
    fb = m // 8
    ibf = BitFilter.from_bytes(data[pos : pos + fb], m)
    pos += fb
    flag = FLAG_RAW
    if compressed:
        flag = data[pos]
        pos += 1
    if flag == FLAG_COMPRESSED:
        bits = decompress_bits(_unpack(data[pos:]), len(present) * m)
        zbf = tuple(
            (p, BitFilter.from_string(bits[i * m : (i + 1) * m])) for i, p in enumerate(present)
        )
    elif flag == FLAG_RAW:
        if len(data) - pos != fb * len(present):
            raise HeaderError("zBF length does not match the bitmap")
        zbf = tuple(
            (p, BitFilter.from_bytes(data[pos + i * fb : pos + (i + 1) * fb], m)) for i, p in enumerate(present)
        )
    else:
        raise HeaderError(f"unknown zBF flag {flag:#x}")
    return XbfHeader(ibf, count, zbf)
