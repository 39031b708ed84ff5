"""Node-capture adversary.

Capturing node i reveals A_r(i) = G_c(i)^T D, i.e. m linear equations in the
entries of D whose coefficients are public (G is known). Enough captured
nodes pin D down completely, after which every pairwise key follows from
public payloads alone.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .galois import DimensionMismatch, FieldElement, GaussResult, Matrix, Rng, derive_seed, solve_mod
from .schemes import (
    Deployment,
    InvalidParams,
    MasterSecret,
    NodeShare,
    PublicMatrix,
    Scheme,
    SchemeParams,
    Violation,
    check_params,
    expand_payload,
    setup,
)

WITNESS_BUDGET = 10_000


class EmptyTranscript(ValueError):
    pass


class InconsistentTranscript(ValueError):
    pass


@dataclass(frozen=True)
class CompromiseTranscript:
    params: SchemeParams
    public: PublicMatrix
    compromised: tuple[NodeShare, ...]

    def __post_init__(self) -> None:
        ids = [s.node_id for s in self.compromised]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate node ids in transcript: {ids}")

    @property
    def ids(self) -> list[int]:
        return [s.node_id for s in self.compromised]


def capture(dep: Deployment, ids: Sequence[int]) -> CompromiseTranscript:
    return CompromiseTranscript(dep.params, dep.public, tuple(dep.shares[i] for i in ids))


class UnknownIndex:
    """Column numbering for the unknown entries of D.

    Folded: one unknown per d_kl with k <= l, m(m+1)/2 in total.
    Unfolded: every d_kl is its own unknown, m^2 in total.
    """

    def __init__(self, m: int, fold: bool = True):
        self.m = m
        self.fold = fold
        if fold:
            self.pairs = [(k, l) for k in range(m) for l in range(k, m)]
        else:
            self.pairs = [(k, l) for k in range(m) for l in range(m)]
        self._col = {p: c for c, p in enumerate(self.pairs)}
        grid = np.empty((m, m), dtype=np.int64)
        for k in range(m):
            for l in range(m):
                grid[k, l] = self.index(k, l)
        self.grid = grid

    @property
    def size(self) -> int:
        return len(self.pairs)

    def index(self, k: int, l: int) -> int:
        if self.fold and k > l:
            k, l = l, k
        return self._col[(k, l)]

    def to_matrix(self, values: Sequence[int], field: Any) -> Matrix:
        v = np.asarray(values, dtype=np.int64)
        return Matrix(v[self.grid], field)


def _columns(t: CompromiseTranscript) -> list[list[FieldElement]]:
    p = t.params
    return [expand_payload(p.kind, p.field, p.m, s.node_id, s.public_payload) for s in t.compromised]


def assemble_system(t: CompromiseTranscript, fold_symmetry: bool = True
                    ) -> tuple[Matrix, list[FieldElement], UnknownIndex]:
    """One equation a_ij = sum_k g_ki d_kj per captured row entry.

    Rows are ordered node by node, then by j. Without folding no
    d_kl = d_lk constraints are added.
    """
    if not t.compromised:
        raise EmptyTranscript("no compromised nodes")
    m = t.params.m
    idx = UnknownIndex(m, fold_symmetry)
    a = np.zeros((m * len(t.compromised), idx.size), dtype=np.int64)
    j = np.arange(m)[:, None]
    k = np.arange(m)[None, :]
    for n, col in enumerate(_columns(t)):
        block = a[n * m:(n + 1) * m]
        block[j, idx.grid[k, j]] = np.asarray(col, dtype=np.int64)[k]
    rhs = [x for s in t.compromised for x in s.private_row]
    return Matrix(a, t.params.field), rhs, idx


def predict_key(d: Matrix, payload_i: Sequence[int], id_i: int, payload_j: Sequence[int], id_j: int,
                params: SchemeParams) -> FieldElement:
    """G_c(i)^T D G_c(j) from public payloads and a candidate D."""
    if d.shape != (params.m, params.m):
        raise DimensionMismatch(f"candidate D is {d.shape}, expected {(params.m, params.m)}")
    q = params.q
    ci = expand_payload(params.kind, params.field, params.m, id_i, payload_i)
    cj = expand_payload(params.kind, params.field, params.m, id_j, payload_j)
    rows = d.tolist()
    dcj = [sum(x * y for x, y in zip(r, cj)) % q for r in rows]
    return sum(x * y for x, y in zip(ci, dcj)) % q


def _regenerates(d: Matrix, t: CompromiseTranscript) -> bool:
    q = t.params.q
    rows = d.tolist()
    for col, share in zip(_columns(t), t.compromised):
        got = [sum(col[k] * rows[k][l] for k in range(len(col))) % q for l in range(len(col))]
        if got != list(share.private_row):
            return False
    return True


@dataclass
class RecoveryResult:
    ids: list[int]
    fold_symmetry: bool
    rank: int
    unknowns: int
    equations: int
    nullspace_dim: int
    d_candidate: Matrix | None
    regeneration_ok: bool
    audit_checked: int = 0
    audit_mismatches: int = 0
    solution: GaussResult | None = field(default=None, repr=False)
    index: UnknownIndex | None = field(default=None, repr=False)

    @property
    def recovered(self) -> bool:
        return self.d_candidate is not None

    def to_json(self, params: SchemeParams, authority: MasterSecret | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "scheme": params.kind.value,
            "q": params.q,
            "lambda": params.lam,
            "n": params.n,
            "compromised": list(self.ids),
            "fold_symmetry": self.fold_symmetry,
            "rank": self.rank,
            "unknowns": self.unknowns,
            "equations": self.equations,
            "nullspace_dim": self.nullspace_dim,
            "recovered": self.recovered,
            "audit_checked": self.audit_checked,
            "audit_mismatches": self.audit_mismatches,
        }
        if authority is not None:
            out["matches_authority"] = self.recovered and self.d_candidate == authority.d
        return out


def recover(t: CompromiseTranscript, fold_symmetry: bool = True) -> RecoveryResult:
    """Solve the capture system; return D when it is uniquely determined.

    A unique solution is only accepted after it regenerates every captured
    row, is symmetric, and reproduces the keys the captured nodes can
    compute themselves.
    """
    a, rhs, idx = assemble_system(t, fold_symmetry)
    sol = solve_mod(a.a, np.asarray(rhs, dtype=np.int64), t.params.q)
    if sol.particular is None:
        raise InconsistentTranscript(
            f"captured rows of nodes {t.ids} admit no D (rank {sol.rank}); transcript is corrupted"
        )
    result = RecoveryResult(
        ids=t.ids,
        fold_symmetry=fold_symmetry,
        rank=sol.rank,
        unknowns=idx.size,
        equations=a.rows,
        nullspace_dim=len(sol.nullspace),
        d_candidate=None,
        regeneration_ok=False,
        solution=sol,
        index=idx,
    )
    if result.nullspace_dim:
        return result
    d = idx.to_matrix(sol.particular, t.params.field)
    result.regeneration_ok = d.is_symmetric() and _regenerates(d, t)
    if not result.regeneration_ok:
        return result
    result.d_candidate = d
    _audit(result, t)
    return result


def _audit(result: RecoveryResult, t: CompromiseTranscript) -> None:
    # a captured node can compute k_ij for any j on its own; the candidate must agree
    p, pub = t.params, t.public
    checked = bad = 0
    rows = result.d_candidate.tolist()
    cols = [pub.column(j) for j in range(pub.n)]
    for share in t.compromised:
        ci = cols[share.node_id]
        ci_d = [sum(ci[k] * rows[k][l] for k in range(p.m)) % p.q for l in range(p.m)]
        for j in range(pub.n):
            own = sum(x * y for x, y in zip(share.private_row, cols[j])) % p.q
            pred = sum(x * y for x, y in zip(ci_d, cols[j])) % p.q
            checked += 1
            bad += own != pred
    result.audit_checked, result.audit_mismatches = checked, bad


@dataclass
class Witness:
    pair: tuple[int, int]
    d1: Matrix
    d2: Matrix
    key1: FieldElement
    key2: FieldElement
    coefficients: tuple[int, ...]


def ambiguity_witness(t: CompromiseTranscript, pair: tuple[int, int], seed: int = 0,
                      budget: int = WITNESS_BUDGET) -> Witness | None:
    """Two symmetric D consistent with the transcript that disagree on one key.

    Searches particular + span(nullspace): every coefficient vector when there
    are at most ``budget`` of them, otherwise ``budget`` seeded random draws.
    Returns ``None`` if the search finds no disagreement.
    """
    res = recover(t, fold_symmetry=True)
    if res.nullspace_dim == 0:
        raise ValueError("transcript determines D uniquely; there is nothing ambiguous")
    p, pub = t.params, t.public
    q, dim = p.q, res.nullspace_dim
    i, j = pair
    base = np.asarray(res.solution.particular, dtype=np.int64)
    basis = np.asarray(res.solution.nullspace, dtype=np.int64)
    pi, pj = pub.payload(i), pub.payload(j)

    d1 = res.index.to_matrix(base, p.field)
    key1 = predict_key(d1, pi, i, pj, j, p)

    if q ** dim <= budget:
        coeffs = itertools.islice(itertools.product(range(q), repeat=dim), 1, None)
    else:
        rng = Rng(derive_seed(seed, f"witness:{i}:{j}"))
        coeffs = (tuple(rng.below(q) for _ in range(dim)) for _ in range(budget))

    for c in coeffs:
        v = base.copy()
        for ck, nk in zip(c, basis):
            if ck:
                v = (v + ck * nk) % q
        d2 = res.index.to_matrix(v, p.field)
        key2 = predict_key(d2, pi, i, pj, j, p)
        if key2 != key1:
            assert _regenerates(d2, t) and d2.is_symmetric()
            return Witness((i, j), d1, d2, key1, key2, tuple(int(x) for x in c))
    return None


@dataclass
class SecurityStats:
    scheme: str
    q: int
    lam: int
    n: int
    c: int
    trials: int
    unknowns: int
    rank_histogram: dict[int, int]
    full_recovery_fraction: float
    colliding_support_fraction: float

    def to_json(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme,
            "q": self.q,
            "lambda": self.lam,
            "n": self.n,
            "c": self.c,
            "trials": self.trials,
            "unknowns": self.unknowns,
            "rank_histogram": {str(k): v for k, v in sorted(self.rank_histogram.items())},
            "full_recovery_fraction": self.full_recovery_fraction,
            "colliding_support_fraction": self.colliding_support_fraction,
        }


def colliding_fraction(params: SchemeParams, ids: Sequence[int]) -> float:
    """Share of compromised pairs whose or-ddhv columns have the same support."""
    if params.kind is not Scheme.OR_DDHV or len(ids) < 2:
        return 0.0
    pairs = list(itertools.combinations(ids, 2))
    return sum(a % params.lam == b % params.lam for a, b in pairs) / len(pairs)


def security_experiment(params: SchemeParams, c: int, trials: int, dep: Deployment | None = None,
                        fold_symmetry: bool = True) -> SecurityStats:
    """Capture ``c`` uniformly random nodes in each of ``trials`` trials.

    Without ``dep`` every trial gets a fresh deployment from its own
    sub-seed; with ``dep`` only the compromise set varies. Either way trial
    ``t`` depends on ``(params.seed, t)`` alone.
    """
    check_params(params)
    if not 0 <= c <= params.n:
        raise InvalidParams([Violation("compromise-count", f"cannot compromise {c} of {params.n} nodes")])
    if trials < 1:
        raise InvalidParams([Violation("trials", f"trials={trials} must be >= 1")])
    unknowns = UnknownIndex(params.m, fold_symmetry).size
    ranks: Counter[int] = Counter()
    full = 0
    colliding = 0.0
    for trial in range(trials):
        sub = derive_seed(params.seed, f"trial:{trial}")
        d = dep if dep is not None else setup(replace(params, seed=sub))
        ids = sorted(Rng(sub).child("compromise").choose(range(params.n), c))
        colliding += colliding_fraction(params, ids)
        if c == 0:
            ranks[0] += 1
            continue
        res = recover(capture(d, ids), fold_symmetry)
        ranks[res.rank] += 1
        full += res.recovered and res.d_candidate == d.secret.d
    return SecurityStats(
        scheme=params.kind.value,
        q=params.q,
        lam=params.lam,
        n=params.n,
        c=c,
        trials=trials,
        unknowns=unknowns,
        rank_histogram=dict(sorted(ranks.items())),
        full_recovery_fraction=full / trials,
        colliding_support_fraction=colliding / trials,
    )
