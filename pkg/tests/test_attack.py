import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixkpd.attack import (
    CompromiseTranscript,
    EmptyTranscript,
    InconsistentTranscript,
    UnknownIndex,
    ambiguity_witness,
    assemble_system,
    capture,
    colliding_fraction,
    predict_key,
    recover,
    security_experiment,
)
from matrixkpd.galois import DimensionMismatch, Matrix, Modulus
from matrixkpd.schemes import InvalidParams, NodeShare, Scheme, SchemeParams, oracle_key_matrix, setup

KINDS = [Scheme.BLOM, Scheme.DDHV, Scheme.OR_DDHV]


def consistent_symmetric(dep, ids):
    """Every symmetric D (exhaustively) that regenerates the captured rows."""
    p = dep.params
    m, q = p.m, p.q
    upper = [(k, l) for k in range(m) for l in range(k, m)]
    cols = np.array([dep.public.column(i) for i in ids])  # c x m
    rows = np.array([dep.shares[i].private_row for i in ids])
    grid = np.array(list(itertools.product(range(q), repeat=len(upper))))
    d = np.zeros((len(grid), m, m), dtype=np.int64)
    for c, (k, l) in enumerate(upper):
        d[:, k, l] = d[:, l, k] = grid[:, c]
    regen = np.einsum("ik,nkl->nil", cols, d) % q
    ok = (regen == rows[None]).all(axis=(1, 2))
    return d[ok]


class TestAssemble:
    def test_single_sparse_node(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        a, rhs, idx = assemble_system(capture(dep, [0]))
        g1, g2 = dep.public.pairs[0]
        assert idx.size == 3 and a.rows == 2
        # a_00 = g1 d00 + g2 d10 ; a_01 = g1 d01 + g2 d11
        want = np.zeros((2, 3), dtype=np.int64)
        want[0, idx.index(0, 0)] = g1
        want[0, idx.index(1, 0)] = g2
        want[1, idx.index(0, 1)] = g1
        want[1, idx.index(1, 1)] = g2
        assert (a.a == want).all()
        assert rhs == list(dep.shares[0].private_row)
        assert (np.count_nonzero(a.a, axis=1) == 2).all()

    def test_dense_rows_touch_a_column_of_d(self):
        dep = setup(SchemeParams(Scheme.BLOM, 65537, 4, 8))
        a, _, idx = assemble_system(capture(dep, [2, 5]))
        m = dep.params.m
        for r in range(a.rows):
            j = r % m
            touched = set(np.flatnonzero(a.a[r]))
            assert touched == {idx.index(k, j) for k in range(m)}

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("fold", [True, False])
    def test_counts(self, kind, fold):
        dep = setup(SchemeParams(kind, 251, 5, 10))
        m = dep.params.m
        for c in (1, 3, 6):
            a, rhs, idx = assemble_system(capture(dep, list(range(c))), fold)
            assert idx.size == (m * (m + 1) // 2 if fold else m * m)
            assert a.rows == len(rhs) == m * c

    def test_empty(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        with pytest.raises(EmptyTranscript):
            assemble_system(capture(dep, []))

    def test_unknown_index_bijective(self):
        for m in (1, 2, 5):
            for fold in (True, False):
                idx = UnknownIndex(m, fold)
                cols = {idx.index(k, l) for k, l in idx.pairs}
                assert cols == set(range(idx.size))

    def test_duplicate_ids_rejected(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        with pytest.raises(ValueError):
            capture(dep, [1, 1])


class TestRecover:
    def test_full_rank_small(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        res = recover(capture(dep, [0, 1]))
        assert res.nullspace_dim == 0 and res.recovered
        assert res.d_candidate == dep.secret.d
        assert res.audit_checked == 8 and res.audit_mismatches == 0

    def test_underdetermined_single_node(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        res = recover(capture(dep, [0]))
        assert res.unknowns == 3 and res.equations == 2
        assert res.nullspace_dim >= 1 and not res.recovered

    def test_corrupted_transcript(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 251, 4, 8))
        t = capture(dep, [0, 1, 2, 3])
        assert recover(t).recovered
        s = t.compromised[2]
        row = list(s.private_row)
        row[1] ^= 1
        bad = CompromiseTranscript(t.params, t.public,
                                   t.compromised[:2] + (NodeShare(s.node_id, tuple(row), s.public_payload),)
                                   + t.compromised[3:])
        try:
            res = recover(bad)
        except InconsistentTranscript:
            return
        assert not res.recovered or res.d_candidate != dep.secret.d

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("seed", range(20))
    def test_complete_at_full_rank(self, kind, seed):
        dep = setup(SchemeParams(kind, 65537, 4, 8, seed=seed))
        res = recover(capture(dep, list(range(dep.params.m))))
        assert res.rank == res.unknowns
        assert res.d_candidate == dep.secret.d

    @pytest.mark.parametrize("kind", [Scheme.BLOM, Scheme.DDHV])
    @pytest.mark.parametrize("seed", range(20))
    def test_c_equals_m_always_recovers(self, kind, seed):
        p = SchemeParams(kind, 65537, 5, 12, seed=seed)
        stats = security_experiment(p, p.m, 5)
        assert stats.full_recovery_fraction == 1.0

    @pytest.mark.parametrize("fold", [True, False])
    def test_unfolded_mode_recovers_same_d(self, fold):
        dep = setup(SchemeParams(Scheme.BLOM, 1009, 3, 8))
        res = recover(capture(dep, [0, 1, 2, 3]), fold)
        assert res.unknowns == (10 if fold else 16)
        assert res.d_candidate == dep.secret.d

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from(KINDS), st.integers(0, 2**32), st.data())
    def test_soundness_and_monotonicity(self, kind, seed, data):
        dep = setup(SchemeParams(kind, 251, 4, 8, seed=seed))
        order = data.draw(st.permutations(range(8)))
        last = 0
        for c in range(1, 9):
            res = recover(capture(dep, order[:c]))
            assert res.rank >= last
            last = res.rank
            if res.recovered:
                assert res.d_candidate.is_symmetric()
                assert res.d_candidate == dep.secret.d
                assert res.audit_mismatches == 0


class TestPredict:
    @pytest.mark.parametrize("kind", KINDS)
    def test_true_d_matches_oracle(self, kind):
        dep = setup(SchemeParams(kind, 1009, 3, 6))
        b = oracle_key_matrix(dep.secret, dep.public)
        for i, j in itertools.product(range(6), repeat=2):
            pi, pj = dep.public.payload(i), dep.public.payload(j)
            assert predict_key(dep.secret.d, pi, i, pj, j, dep.params) == b[i, j]

    def test_zero_and_symmetry(self):
        p = SchemeParams(Scheme.OR_DDHV, 13, 3, 6)
        dep = setup(p)
        assert predict_key(Matrix.zeros(3, 3, p.field), (1, 2), 0, (3, 4), 1, p) == 0
        d = Matrix.from_rows([[1, 2, 3], [2, 5, 7], [3, 7, 11]], p.field)
        for i, j in itertools.combinations(range(6), 2):
            pi, pj = dep.public.payload(i), dep.public.payload(j)
            assert predict_key(d, pi, i, pj, j, p) == predict_key(d, pj, j, pi, i, p)

    def test_shape_checked(self):
        p = SchemeParams(Scheme.OR_DDHV, 13, 3, 6)
        with pytest.raises(DimensionMismatch):
            predict_key(Matrix.zeros(2, 2, p.field), (1, 2), 0, (3, 4), 1, p)


class TestAmbiguity:
    @pytest.mark.parametrize("q,lam,ids", [(13, 2, [0]), (13, 2, [3]), (7, 3, [0, 1]), (7, 3, [1, 4])])
    def test_witness_against_enumeration(self, q, lam, ids):
        dep = setup(SchemeParams(Scheme.OR_DDHV, q, lam, 2 * lam, seed=3))
        candidates = consistent_symmetric(dep, ids)
        assert any((c == dep.secret.d.a).all() for c in candidates)
        free = [i for i in range(2 * lam) if i not in ids]
        t = capture(dep, ids)
        assert recover(t).nullspace_dim == round(np.log(len(candidates)) / np.log(q))
        for i, j in itertools.combinations(free, 2):
            ci, cj = np.array(dep.public.column(i)), np.array(dep.public.column(j))
            keys = {int(ci @ c @ cj % q) for c in candidates}
            w = ambiguity_witness(t, (i, j))
            if len(keys) > 1:
                assert w is not None and w.key1 != w.key2
                assert {w.key1, w.key2} <= keys
                assert w.d1.is_symmetric() and w.d2.is_symmetric()
                assert any((c == w.d2.a).all() for c in candidates)
            else:
                assert w is None

    def test_full_rank_precondition(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 13, 2, 4))
        with pytest.raises(ValueError):
            ambiguity_witness(capture(dep, [0, 1]), (2, 3))

    def test_compromised_pair_has_no_witness(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 251, 4, 8))
        t = capture(dep, [0, 1, 2])
        assert recover(t).nullspace_dim >= 1
        assert ambiguity_witness(t, (0, 1)) is None
        assert ambiguity_witness(t, (0, 5)) is None

    def test_random_scan_when_space_is_large(self):
        dep = setup(SchemeParams(Scheme.OR_DDHV, 65537, 4, 8))
        t = capture(dep, [0])
        assert 65537 ** recover(t).nullspace_dim > 10_000
        w = ambiguity_witness(t, (2, 5), seed=1)
        assert w is not None and w.key1 != w.key2


class TestExperiment:
    def test_no_compromise(self):
        s = security_experiment(SchemeParams(Scheme.OR_DDHV, 251, 4, 8), 0, 5)
        assert s.rank_histogram == {0: 5} and s.full_recovery_fraction == 0.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_everything_compromised(self, kind):
        s = security_experiment(SchemeParams(kind, 251, 4, 8), 8, 5)
        assert s.full_recovery_fraction == 1.0
        assert s.rank_histogram == {s.unknowns: 5}

    def test_reported_fields(self):
        s = security_experiment(SchemeParams(Scheme.OR_DDHV, 251, 8, 16), 8, 200)
        obj = json.loads(json.dumps(s.to_json()))
        assert {"scheme", "q", "lambda", "n", "c", "trials", "rank_histogram", "full_recovery_fraction",
                "colliding_support_fraction"} <= set(obj)
        assert 0 < s.full_recovery_fraction <= 1
        assert sum(s.rank_histogram.values()) == 200
        assert 0 < s.colliding_support_fraction < 1

    def test_schedule_independent(self):
        p = SchemeParams(Scheme.OR_DDHV, 251, 4, 8, seed=11)
        assert security_experiment(p, 4, 30).to_json() == security_experiment(p, 4, 30).to_json()

    def test_fixed_deployment_mode(self):
        dep = setup(SchemeParams(Scheme.BLOM, 251, 3, 8))
        s = security_experiment(dep.params, 4, 10, dep=dep)
        assert s.full_recovery_fraction == 1.0

    def test_invalid(self):
        with pytest.raises(InvalidParams):
            security_experiment(SchemeParams(Scheme.OR_DDHV, 251, 4, 8), 9, 1)

    def test_colliding_fraction(self):
        p = SchemeParams(Scheme.OR_DDHV, 251, 4, 8)
        assert colliding_fraction(p, [0, 4]) == 1.0
        assert colliding_fraction(p, [0, 1, 4]) == pytest.approx(1 / 3)
        assert colliding_fraction(SchemeParams(Scheme.BLOM, 251, 4, 8), [0, 4]) == 0.0
