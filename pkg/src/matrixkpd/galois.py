"""Prime-field arithmetic and dense linear algebra over Z_q.

Field elements are plain ``int`` values kept in ``[0, q)``. The modulus is
capped below 2**31 so a product of two residues fits in a signed 64-bit
integer, which lets :class:`Matrix` keep its entries in ``numpy.int64``
arrays without ever overflowing.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

FieldElement = int

MAX_MODULUS = 1 << 31
_MASK64 = (1 << 64) - 1
# Miller-Rabin with these bases is exact for n < 3_215_031_751 > 2**31.
_MR_BASES = (2, 3, 5, 7)


class ZeroInverse(ZeroDivisionError):
    pass


class DimensionMismatch(ValueError):
    pass


def is_prime(n: int) -> bool:
    """Deterministic primality test, exact for every n below 2**31."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def prime_factors(n: int) -> list[int]:
    """Distinct prime factors of ``n`` by trial division (n < 2**31)."""
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1 if p == 2 else 2
    if n > 1:
        out.append(n)
    return out


class MulCounter:
    """Tally of field multiplications performed on behalf of one session.

    Not thread-safe: give each concurrent session its own counter.
    """

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def tick(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("counter cannot be decremented")
        self.count += n

    def __repr__(self) -> str:
        return f"MulCounter({self.count})"


class Rng:
    """Seeded source of 64-bit draws.

    Backed by the stdlib Mersenne Twister (``random.Random`` seeded with a
    non-negative int, which is reproducible across platforms and Python
    releases). Only ``getrandbits(64)`` is consumed; every derived quantity
    goes through :meth:`below`, so streams never depend on ``random``'s
    higher-level helpers.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed & _MASK64
        self._gen = random.Random(self.seed)

    def draw64(self) -> int:
        return self._gen.getrandbits(64)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection from 64-bit draws."""
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - (1 << 64) % n
        while True:
            x = self.draw64()
            if x < limit:
                return x % n

    def choose(self, population: Sequence[int], k: int) -> list[int]:
        """``k`` distinct items, by a partial Fisher-Yates shuffle."""
        pool = list(population)
        if not 0 <= k <= len(pool):
            raise ValueError(f"cannot choose {k} of {len(pool)}")
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def child(self, label: object) -> "Rng":
        return Rng(derive_seed(self.seed, label))


def derive_seed(seed: int, label: object) -> int:
    """Stable 64-bit sub-seed for ``(seed, label)``."""
    h = hashlib.blake2b(f"{seed & _MASK64}:{label}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Modulus:
    q: int

    def __post_init__(self) -> None:
        if not 2 < self.q < MAX_MODULUS:
            raise ValueError(f"modulus {self.q} outside (2, 2**31)")
        if not is_prime(self.q):
            raise ValueError(f"modulus {self.q} is not prime")

    @property
    def bits(self) -> int:
        # ceil(log2 q); q is an odd prime, never a power of two
        return self.q.bit_length()

    @property
    def byte_width(self) -> int:
        return (self.bits + 7) // 8

    def reduce(self, x: int) -> FieldElement:
        return x % self.q

    def add(self, a: FieldElement, b: FieldElement) -> FieldElement:
        return (a + b) % self.q

    def sub(self, a: FieldElement, b: FieldElement) -> FieldElement:
        return (a - b) % self.q

    def neg(self, a: FieldElement) -> FieldElement:
        return -a % self.q

    def mul(self, a: FieldElement, b: FieldElement, counter: MulCounter | None = None) -> FieldElement:
        if counter is not None:
            counter.count += 1
        return a * b % self.q

    def inv(self, a: FieldElement) -> FieldElement:
        a %= self.q
        if a == 0:
            raise ZeroInverse(f"0 has no inverse mod {self.q}")
        return pow(a, self.q - 2, self.q)

    def pow(self, a: FieldElement, e: int) -> FieldElement:
        if e < 0:
            raise ValueError("negative exponent")
        result, base = 1, a % self.q
        while e:
            if e & 1:
                result = result * base % self.q
            base = base * base % self.q
            e >>= 1
        return result

    def sample(self, rng: Rng, exclude_zero: bool = False) -> FieldElement:
        if exclude_zero:
            return 1 + rng.below(self.q - 1)
        return rng.below(self.q)

    def order(self, a: FieldElement) -> int:
        """Multiplicative order of a nonzero element."""
        a %= self.q
        if a == 0:
            raise ZeroInverse("0 has no multiplicative order")
        n = self.q - 1
        for p in prime_factors(self.q - 1):
            while n % p == 0 and self.pow(a, n // p) == 1:
                n //= p
        return n

    def primitive_root(self) -> FieldElement:
        factors = prime_factors(self.q - 1)
        for g in range(2, self.q):
            if all(self.pow(g, (self.q - 1) // p) != 1 for p in factors):
                return g
        raise AssertionError("unreachable for prime q")


class Matrix:
    """Dense matrix over Z_q with entries held in a row-major int64 array."""

    __slots__ = ("a", "field")

    def __init__(self, a: np.ndarray, field: Modulus) -> None:
        a = np.asarray(a, dtype=np.int64)
        if a.ndim != 2 or 0 in a.shape:
            raise DimensionMismatch(f"expected a non-empty 2-D array, got shape {a.shape}")
        if a.size and (a.min() < 0 or a.max() >= field.q):
            raise ValueError("matrix entries must be reduced mod q")
        self.a = a
        self.field = field

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]], field: Modulus) -> "Matrix":
        return cls(np.array([[int(x) % field.q for x in r] for r in rows], dtype=np.int64), field)

    @classmethod
    def zeros(cls, rows: int, cols: int, field: Modulus) -> "Matrix":
        return cls(np.zeros((rows, cols), dtype=np.int64), field)

    @classmethod
    def identity(cls, n: int, field: Modulus) -> "Matrix":
        return cls(np.eye(n, dtype=np.int64), field)

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    def __getitem__(self, ij: tuple[int, int]) -> FieldElement:
        return int(self.a[ij])

    def row(self, i: int) -> list[FieldElement]:
        return [int(x) for x in self.a[i]]

    def col(self, j: int) -> list[FieldElement]:
        return [int(x) for x in self.a[:, j]]

    def tolist(self) -> list[list[FieldElement]]:
        return self.a.tolist()

    def transpose(self) -> "Matrix":
        return Matrix(self.a.T.copy(), self.field)

    T = property(transpose)

    def is_symmetric(self) -> bool:
        return self.rows == self.cols and bool(np.array_equal(self.a, self.a.T))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.field == other.field and np.array_equal(self.a, other.a)

    def __hash__(self) -> int:
        return hash((self.field.q, self.a.shape, self.a.tobytes()))

    def __repr__(self) -> str:
        return f"Matrix({self.tolist()}, q={self.field.q})"


def mat_transpose(m: Matrix) -> Matrix:
    return m.transpose()


def _mulmod(x: np.ndarray, y: np.ndarray, q: int) -> np.ndarray:
    # Split y into 16-bit halves so every partial dot product stays below
    # 2**63: (2**31 * 2**16) * k < 2**63 for inner dimension k < 2**16.
    if x.shape[1] >= 1 << 16:
        raise DimensionMismatch("inner dimension too large for exact int64 product")
    lo = y & 0xFFFF
    hi = y >> 16
    return ((x @ hi % q) * (1 << 16) + x @ lo) % q


def mat_mul(a: Matrix, b: Matrix, counter: MulCounter | None = None) -> Matrix:
    """Product mod q; charges ``a.rows * a.cols * b.cols`` multiplications."""
    if a.field != b.field:
        raise DimensionMismatch("operands live in different fields")
    if a.cols != b.rows:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    if counter is not None:
        counter.tick(a.rows * a.cols * b.cols)
    return Matrix(_mulmod(a.a, b.a, a.field.q), a.field)


def random_symmetric(order: int, rng: Rng, field: Modulus) -> Matrix:
    """Upper triangle drawn row by row, lower triangle mirrored."""
    if order < 1:
        raise ValueError("order must be >= 1")
    a = np.zeros((order, order), dtype=np.int64)
    for i in range(order):
        for j in range(i, order):
            a[i, j] = a[j, i] = field.sample(rng)
    return Matrix(a, field)


class GaussResult(NamedTuple):
    rank: int
    particular: list[FieldElement] | None
    nullspace: list[list[FieldElement]]


def _rref(m: np.ndarray, q: int, ncols: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over Z_q of the first ``ncols`` columns.

    Pivot = first nonzero entry scanning downward from the current row.
    """
    m = m.copy()
    nrows = m.shape[0]
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        nz = np.flatnonzero(m[r:, c])
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            m[[r, p], c:] = m[[p, r], c:]
        inv = pow(int(m[r, c]), q - 2, q)
        m[r, c:] = m[r, c:] * inv % q
        hit = np.flatnonzero(m[:, c])
        hit = hit[hit != r]
        if hit.size:
            m[hit, c:] = (m[hit, c:] - m[hit, c:c + 1] * m[r, c:]) % q
        pivots.append(c)
        r += 1
    return m, pivots


def solve_mod(a: np.ndarray, b: np.ndarray, q: int) -> GaussResult:
    """Array-level worker behind :func:`gauss_solve`."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64).reshape(-1)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"{a.shape[0]} equations but {b.shape[0]} right-hand sides")
    nrows, ncols = a.shape
    red, pivots = _rref(np.hstack([a % q, (b % q)[:, None]]), q, ncols)
    rank = len(pivots)

    particular = None
    if not red[rank:, ncols].any():
        x = np.zeros(ncols, dtype=np.int64)
        x[pivots] = red[:rank, ncols]
        particular = [int(v) for v in x]

    pivot_set = set(pivots)
    nullspace = []
    for f in range(ncols):
        if f in pivot_set:
            continue
        v = np.zeros(ncols, dtype=np.int64)
        v[f] = 1
        v[pivots] = -red[:rank, f] % q
        nullspace.append([int(x) for x in v])
    return GaussResult(rank, particular, nullspace)


def gauss_solve(a: Matrix, b: Sequence[int]) -> GaussResult:
    """Solve ``a x = b`` over Z_q.

    Returns the rank of ``a``, one solution (``None`` when the system is
    inconsistent) and a basis of the homogeneous solution space, whose size
    is ``a.cols - rank``.
    """
    return solve_mod(a.a, np.asarray(list(b), dtype=np.int64), a.field.q)


def matrix_rank(a: Matrix) -> int:
    _, pivots = _rref(a.a, a.field.q, a.cols)
    return len(pivots)
