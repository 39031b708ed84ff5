"""Symmetric-matrix key pre-distribution schemes.

Three ways of choosing the public matrix G, all sharing the same secret
structure: a symmetric matrix D held by the authority, node i storing row i
of A = G^T D and handing out (a compressed form of) column i of G. Any two
nodes agree on k_ij = A_r(i) . G_c(j) because G^T D G is symmetric.

* ``blom``     dense random G with m = lambda + 1 rows; a node sends its whole column.
* ``ddhv``     Vandermonde G, column j is [1, x, x^2, ..., x^lambda] with
               x = s^(j+1); a node sends only x.
* ``or-ddhv``  sparse G with m = lambda rows and two nonzero entries per
               column at rows (j mod lambda, (j+1) mod lambda); a node sends
               the two values.

Node ids are 0-based throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from .galois import (
    DimensionMismatch,
    FieldElement,
    Matrix,
    Modulus,
    MulCounter,
    Rng,
    is_prime,
    mat_mul,
    random_symmetric,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Scheme(str, Enum):
    BLOM = "blom"
    DDHV = "ddhv"
    OR_DDHV = "or-ddhv"

    @property
    def wire_id(self) -> int:
        return _WIRE_IDS[self]

    @classmethod
    def from_wire_id(cls, wid: int) -> "Scheme":
        for kind, v in _WIRE_IDS.items():
            if v == wid:
                return kind
        raise KeyError(wid)


_WIRE_IDS = {Scheme.BLOM: 0x00, Scheme.DDHV: 0x01, Scheme.OR_DDHV: 0x02}


class InvalidParams(ValueError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        super().__init__("; ".join(v.message for v in self.violations))


class PayloadLengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    fatal: bool = True


@dataclass(frozen=True)
class SchemeParams:
    """Public system parameters of one deployment."""

    kind: Scheme
    q: int
    lam: int
    n: int
    s: int | None = None
    seed: int = 42
    allow_oversize: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Scheme(self.kind))

    @property
    def m(self) -> int:
        return self.lam if self.kind is Scheme.OR_DDHV else self.lam + 1

    @cached_property
    def field(self) -> Modulus:
        return Modulus(self.q)

    @property
    def payload_len(self) -> int:
        return {Scheme.BLOM: self.m, Scheme.DDHV: 1, Scheme.OR_DDHV: 2}[self.kind]

    @cached_property
    def generator(self) -> int:
        """Vandermonde base s: the user's choice or the smallest primitive root."""
        if self.kind is not Scheme.DDHV:
            raise AttributeError("only the ddhv scheme has a generator")
        return self.s if self.s is not None else self.field.primitive_root()

    def support(self, node_id: int) -> tuple[int, int]:
        """Rows holding the two nonzero entries of an or-ddhv column."""
        return node_id % self.lam, (node_id + 1) % self.lam


def validate_params(params: SchemeParams) -> list[Violation]:
    """Every rule ``params`` breaks; an empty list means usable.

    ``N > 2*lambda`` for or-ddhv is reported even when ``allow_oversize`` is
    set, but then as non-fatal.
    """
    out: list[Violation] = []
    q_ok = False
    if not 2 < params.q < 1 << 31:
        out.append(Violation("q-range", f"q={params.q} must satisfy 2 < q < 2**31"))
    elif not is_prime(params.q):
        out.append(Violation("q-prime", f"q={params.q} is not prime"))
    else:
        q_ok = True
    if params.lam < 2:
        out.append(Violation("lambda-min", f"lambda={params.lam} must be >= 2"))
    if params.n < 2:
        out.append(Violation("n-min", f"N={params.n} must be >= 2"))
    if params.kind is Scheme.OR_DDHV and params.n > 2 * params.lam:
        out.append(
            Violation(
                "n-max",
                f"N={params.n} exceeds the maximum network size 2*lambda={2 * params.lam} "
                "for or-ddhv (columns of G would collide)",
                fatal=not params.allow_oversize,
            )
        )
    if params.kind is Scheme.DDHV and q_ok:
        if params.s is not None and params.s % params.q == 0:
            out.append(Violation("s-range", f"s={params.s} must be nonzero mod q"))
        else:
            order = params.field.order(params.generator)
            if order < params.n:
                out.append(
                    Violation(
                        "s-order",
                        f"order of s={params.generator} mod {params.q} is {order} < N={params.n}; "
                        "Vandermonde columns would repeat",
                    )
                )
    return out


def check_params(params: SchemeParams) -> None:
    violations = validate_params(params)
    fatal = [v for v in violations if v.fatal]
    if fatal:
        raise InvalidParams(fatal)
    for v in violations:
        log.warning("unsafe parameters accepted: %s", v.message)


@dataclass(frozen=True)
class MasterSecret:
    d: Matrix

    def __post_init__(self) -> None:
        if not self.d.is_symmetric():
            raise ValueError("master secret must be a symmetric square matrix")


@dataclass(frozen=True)
class PublicMatrix:
    """Kind-specific description of G.

    Only one of ``dense`` (blom), ``s`` (ddhv) or ``pairs`` (or-ddhv) is set.
    """

    kind: Scheme
    field: Modulus
    m: int
    n: int
    dense: Matrix | None = None
    s: int | None = None
    pairs: tuple[tuple[int, int], ...] | None = None

    def payload(self, j: int) -> tuple[FieldElement, ...]:
        if not 0 <= j < self.n:
            raise IndexError(f"node {j} outside [0, {self.n})")
        if self.kind is Scheme.BLOM:
            return tuple(self.dense.col(j))
        if self.kind is Scheme.DDHV:
            return (self.field.pow(self.s, j + 1),)
        return self.pairs[j]

    def column(self, j: int) -> list[FieldElement]:
        return expand_payload(self.kind, self.field, self.m, j, self.payload(j))

    def to_matrix(self) -> Matrix:
        if self.kind is Scheme.BLOM:
            return self.dense
        cols = np.array([self.column(j) for j in range(self.n)], dtype=np.int64)
        return Matrix(cols.T.copy(), self.field)

    @classmethod
    def from_payloads(cls, params: SchemeParams, payloads: Sequence[Sequence[int]]) -> "PublicMatrix":
        """Rebuild G from the public payloads of every node, in id order."""
        f, m = params.field, params.m
        for p in payloads:
            if len(p) != params.payload_len:
                raise PayloadLengthMismatch(f"payload of length {len(p)}, expected {params.payload_len}")
        if params.kind is Scheme.BLOM:
            dense = Matrix(np.array(payloads, dtype=np.int64).reshape(len(payloads), m).T.copy(), f)
            return cls(params.kind, f, m, len(payloads), dense=dense)
        if params.kind is Scheme.DDHV:
            pub = cls(params.kind, f, m, len(payloads), s=params.generator)
            for j, p in enumerate(payloads):
                if tuple(p) != pub.payload(j):
                    raise ValueError(f"payload of node {j} is not s^{j + 1}")
            return pub
        return cls(params.kind, f, m, len(payloads), pairs=tuple((int(a), int(b)) for a, b in payloads))


@dataclass(frozen=True)
class NodeShare:
    node_id: int
    private_row: tuple[FieldElement, ...]
    public_payload: tuple[FieldElement, ...]


@dataclass(frozen=True)
class Deployment:
    params: SchemeParams
    secret: MasterSecret
    public: PublicMatrix
    shares: tuple[NodeShare, ...] = field(repr=False)


def build_public(params: SchemeParams, rng: Rng) -> PublicMatrix:
    f, m, n = params.field, params.m, params.n
    if params.kind is Scheme.BLOM:
        g = np.array([[f.sample(rng) for _ in range(n)] for _ in range(m)], dtype=np.int64)
        return PublicMatrix(params.kind, f, m, n, dense=Matrix(g, f))
    if params.kind is Scheme.DDHV:
        return PublicMatrix(params.kind, f, m, n, s=params.generator % f.q)
    pairs = tuple((f.sample(rng, exclude_zero=True), f.sample(rng, exclude_zero=True)) for _ in range(n))
    return PublicMatrix(params.kind, f, m, n, pairs=pairs)


def deal(params: SchemeParams, secret: MasterSecret, public: PublicMatrix,
         counter: MulCounter | None = None) -> Deployment:
    """Compute A = G^T D and hand node i row i of A plus its public payload."""
    a = mat_mul(public.to_matrix().T, secret.d, counter)
    shares = tuple(
        NodeShare(j, tuple(a.row(j)), public.payload(j)) for j in range(public.n)
    )
    return Deployment(params, secret, public, shares)


def setup(params: SchemeParams, counter: MulCounter | None = None) -> Deployment:
    """Offline phase: draw D then G from the seeded stream and deal shares."""
    check_params(params)
    rng = Rng(params.seed)
    d = random_symmetric(params.m, rng, params.field)
    public = build_public(params, rng)
    return deal(params, MasterSecret(d), public, counter)


def expand_payload(kind: Scheme, f: Modulus, m: int, peer_id: int, payload: Sequence[int],
                   counter: MulCounter | None = None) -> list[FieldElement]:
    expected = {Scheme.BLOM: m, Scheme.DDHV: 1, Scheme.OR_DDHV: 2}[kind]
    if len(payload) != expected:
        raise PayloadLengthMismatch(f"{kind.value} payload has {len(payload)} elements, expected {expected}")
    if kind is Scheme.BLOM:
        return list(payload)
    if kind is Scheme.DDHV:
        x = payload[0]
        col = [1]
        for _ in range(m - 1):
            col.append(f.mul(col[-1], x, counter))
        return col
    col = [0] * m
    col[peer_id % m] = payload[0]
    col[(peer_id + 1) % m] = payload[1]
    return col


def reconstruct_column(params: SchemeParams, peer_id: int, payload: Sequence[int],
                       counter: MulCounter | None = None) -> list[FieldElement]:
    """Peer's full column of G from its payload.

    ddhv charges lambda multiplications (1*x counts as one); the other kinds
    are free.
    """
    if not 0 <= peer_id < params.n:
        raise IndexError(f"peer {peer_id} outside [0, {params.n})")
    return expand_payload(params.kind, params.field, params.m, peer_id, payload, counter)


def derive_key(share: NodeShare, peer_payload: Sequence[int], peer_id: int,
               params: SchemeParams, counter: MulCounter | None = None) -> FieldElement:
    f, row = params.field, share.private_row
    if params.kind is Scheme.OR_DDHV:
        if len(peer_payload) != 2:
            raise PayloadLengthMismatch(f"or-ddhv payload has {len(peer_payload)} elements, expected 2")
        if not 0 <= peer_id < params.n:
            raise IndexError(f"peer {peer_id} outside [0, {params.n})")
        i1, i2 = params.support(peer_id)
        return f.add(f.mul(row[i1], peer_payload[0], counter), f.mul(row[i2], peer_payload[1], counter))

    col = reconstruct_column(params, peer_id, peer_payload, counter)
    if params.kind is Scheme.DDHV:
        # col[0] == 1: the first term is an addition, not a multiplication
        acc = row[0]
        start = 1
    else:
        acc = 0
        start = 0
    for k in range(start, len(col)):
        acc += f.mul(row[k], col[k], counter)
    return acc % f.q


def oracle_key_matrix(secret: MasterSecret, public: PublicMatrix) -> Matrix:
    """B = G^T D G: every pairwise key at once. Uncounted; for checking only."""
    g = public.to_matrix()
    if secret.d.rows != g.rows:
        raise DimensionMismatch(f"D is {secret.d.shape} but G has {g.rows} rows")
    return mat_mul(g.T, mat_mul(secret.d, g))


# -- JSON ---------------------------------------------------------------------

def _strs(xs: Sequence[int]) -> list[str]:
    return [str(int(x)) for x in xs]


def params_to_json(params: SchemeParams) -> dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "scheme": params.kind.value,
        "q": params.q,
        "lambda": params.lam,
        "m": params.m,
        "n": params.n,
    }


def share_to_json(share: NodeShare, params: SchemeParams) -> dict[str, Any]:
    out = params_to_json(params)
    out["node_id"] = share.node_id
    out["private_row"] = _strs(share.private_row)
    out["public_payload"] = _strs(share.public_payload)
    return out


def share_from_json(obj: dict[str, Any]) -> tuple[SchemeParams, NodeShare]:
    if obj.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported share format version {obj.get('version')!r}")
    params = SchemeParams(Scheme(obj["scheme"]), int(obj["q"]), int(obj["lambda"]), int(obj["n"]))
    if int(obj["m"]) != params.m:
        raise ValueError(f"m={obj['m']} inconsistent with scheme {params.kind.value}")
    share = NodeShare(
        int(obj["node_id"]),
        tuple(int(x) for x in obj["private_row"]),
        tuple(int(x) for x in obj["public_payload"]),
    )
    if len(share.private_row) != params.m or len(share.public_payload) != params.payload_len:
        raise ValueError("share vector lengths do not match the scheme")
    return params, share


def authority_to_json(dep: Deployment) -> dict[str, Any]:
    p = dep.params
    out = params_to_json(p)
    out["seed"] = p.seed
    if p.kind is Scheme.DDHV:
        out["s"] = str(p.generator)
    if p.allow_oversize:
        out["allow_oversize"] = True
    out["D"] = _strs(dep.secret.d.a.reshape(-1).tolist())
    return out


def authority_from_json(obj: dict[str, Any]) -> tuple[SchemeParams, MasterSecret]:
    if obj.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported authority format version {obj.get('version')!r}")
    params = SchemeParams(
        Scheme(obj["scheme"]),
        int(obj["q"]),
        int(obj["lambda"]),
        int(obj["n"]),
        s=int(obj["s"]) if "s" in obj else None,
        seed=int(obj["seed"]),
        allow_oversize=bool(obj.get("allow_oversize", False)),
    )
    m = params.m
    entries = [int(x) for x in obj["D"]]
    if len(entries) != m * m:
        raise ValueError(f"D has {len(entries)} entries, expected {m * m}")
    d = Matrix.from_rows([entries[i * m:(i + 1) * m] for i in range(m)], params.field)
    return params, MasterSecret(d)
