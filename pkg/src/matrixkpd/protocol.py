"""Simulated pairwise handshakes and their resource accounting.

Wire layout of one public-column message (all integers little-endian)::

    offset  size  field
    0       1     version (0x01)
    1       1     scheme id (0x00 blom, 0x01 ddhv, 0x02 or-ddhv)
    2       4     node id
    6       2     element count
    8       w*c   elements, w = ceil(ceil(log2 q) / 8) bytes each
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Any

from .galois import FieldElement, MulCounter, Rng
from .schemes import (
    Deployment,
    NodeShare,
    PayloadLengthMismatch,
    Scheme,
    SchemeParams,
    derive_key,
)

WIRE_VERSION = 0x01
HEADER = struct.Struct("<BBIH")
HEADER_BITS = 8 * HEADER.size


class WireError(ValueError):
    pass


class BadVersion(WireError):
    pass


class SchemeMismatch(WireError):
    pass


class ElementOutOfRange(WireError):
    pass


class TruncatedMessage(WireError):
    pass


class TrailingBytes(WireError):
    pass


class UnknownNode(WireError):
    pass


class KeyMismatch(AssertionError):
    """Both ends of a handshake derived different keys; always a bug."""

    def __init__(self, i: int, j: int, k_ij: int, k_ji: int):
        self.pair = (i, j)
        super().__init__(f"nodes {i} and {j} disagree: {k_ij} != {k_ji}")


def encode_message(share: NodeShare, params: SchemeParams) -> bytes:
    w = params.field.byte_width
    out = bytearray(HEADER.pack(WIRE_VERSION, params.kind.wire_id, share.node_id, len(share.public_payload)))
    for x in share.public_payload:
        out += int(x).to_bytes(w, "little")
    return bytes(out)


def decode_message(data: bytes, params: SchemeParams) -> tuple[int, tuple[FieldElement, ...]]:
    """Parse and validate a message; returns ``(node_id, payload)``."""
    if len(data) < HEADER.size:
        raise TruncatedMessage(f"{len(data)} bytes is shorter than the {HEADER.size}-byte header")
    version, scheme_id, node_id, count = HEADER.unpack_from(data)
    if version != WIRE_VERSION:
        raise BadVersion(f"wire version {version:#04x}, expected {WIRE_VERSION:#04x}")
    if scheme_id != params.kind.wire_id:
        raise SchemeMismatch(f"scheme id {scheme_id:#04x}, expected {params.kind.wire_id:#04x}")
    if count != params.payload_len:
        raise PayloadLengthMismatch(f"element count {count}, {params.kind.value} sends {params.payload_len}")
    w = params.field.byte_width
    need = HEADER.size + count * w
    if len(data) < need:
        raise TruncatedMessage(f"{len(data)} bytes, element count {count} needs {need}")
    if len(data) > need:
        raise TrailingBytes(f"{len(data) - need} bytes after the last element")
    if node_id >= params.n:
        raise UnknownNode(f"node id {node_id} outside [0, {params.n})")
    q = params.q
    payload = []
    for k in range(count):
        off = HEADER.size + k * w
        x = int.from_bytes(data[off:off + w], "little")
        if x >= q:
            raise ElementOutOfRange(f"element {k} = {x} is not reduced mod {q}")
        payload.append(x)
    return node_id, tuple(payload)


@dataclass
class ResourceMeter:
    mults: int
    comm_bits: int
    memory_bits: int


def memory_bits(params: SchemeParams) -> int:
    return params.m * params.field.bits


def lambda_memory_bits(params: SchemeParams) -> int:
    """Memory under the lambda-elements-per-node model used for both DDHV variants."""
    return params.lam * params.field.bits


def handshake(share: NodeShare, msg: bytes, params: SchemeParams) -> tuple[FieldElement, ResourceMeter]:
    """One side of the online phase: decode the peer's column, derive the key."""
    peer_id, payload = decode_message(msg, params)
    counter = MulCounter()
    key = derive_key(share, payload, peer_id, params, counter)
    meter = ResourceMeter(
        mults=counter.count,
        comm_bits=len(payload) * params.field.bits,
        memory_bits=memory_bits(params),
    )
    return key, meter


@dataclass
class AgreementReport:
    scheme: str
    q: int
    lam: int
    m: int
    n: int
    pairs_tested: int
    all_keys_match: bool
    mults_min: int
    mults_max: int
    mults_mean: float
    comm_bits_per_handshake: int
    header_bits: int
    memory_bits_per_node: int

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        mean = d.pop("mults_mean")
        d["mults_per_key"] = int(mean) if float(mean).is_integer() else mean
        order = ["scheme", "q", "lambda", "m", "n", "pairs_tested", "all_keys_match", "mults_per_key",
                 "mults_min", "mults_max", "comm_bits_per_handshake", "header_bits", "memory_bits_per_node"]
        return {k: d[k] for k in order}


def select_pairs(n: int, pairs: str | int = "all", seed: int = 0) -> list[tuple[int, int]]:
    """Unordered pairs i < j: all of them, or ``k`` sampled without replacement."""
    everything = list(combinations(range(n), 2))
    if pairs == "all":
        return everything
    k = int(pairs)
    if k >= len(everything):
        return everything
    picked = Rng(seed).child("pairs").choose(range(len(everything)), k)
    return [everything[i] for i in sorted(picked)]


def run_all_pairs(dep: Deployment, pairs: str | int = "all") -> AgreementReport:
    """Handshake every selected pair in both directions; raise on disagreement."""
    params = dep.params
    msgs = [encode_message(s, params) for s in dep.shares]
    selected = select_pairs(params.n, pairs, params.seed)
    mults: list[int] = []
    comm = set()
    for i, j in selected:
        k_ij, m_i = handshake(dep.shares[i], msgs[j], params)
        k_ji, m_j = handshake(dep.shares[j], msgs[i], params)
        if k_ij != k_ji:
            raise KeyMismatch(i, j, k_ij, k_ji)
        mults += (m_i.mults, m_j.mults)
        comm.update((m_i.comm_bits, m_j.comm_bits))
    if not mults:
        mults = [0]
    return AgreementReport(
        scheme=params.kind.value,
        q=params.q,
        lam=params.lam,
        m=params.m,
        n=params.n,
        pairs_tested=len(selected),
        all_keys_match=True,
        mults_min=min(mults),
        mults_max=max(mults),
        mults_mean=sum(mults) / len(mults),
        comm_bits_per_handshake=max(comm, default=params.payload_len * params.field.bits),
        header_bits=HEADER_BITS,
        memory_bits_per_node=memory_bits(params),
    )


def table_one_row(params: SchemeParams) -> dict[str, Any]:
    """Resource model for one scheme in field elements and bits."""
    bits = params.field.bits
    mults = {Scheme.BLOM: params.m, Scheme.DDHV: 2 * params.lam, Scheme.OR_DDHV: 2}[params.kind]
    return {
        "scheme": params.kind.value,
        "comm_elements": params.payload_len,
        "comm_bits": params.payload_len * bits,
        "mults_per_key": mults,
        "memory_elements": params.m,
        "memory_bits": memory_bits(params),
        "model_memory_bits": lambda_memory_bits(params) if params.kind is not Scheme.BLOM else None,
    }

