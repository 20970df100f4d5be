"""Tests for the Kronecker-recursive factorization and its lazy streamer."""

from itertools import islice

import numpy as np
import pytest

from bltnoise.error_eval import (
    bintree_value,
    opt_lt_toe,
    rownorm_of,
    sensitivity_of,
)
from bltnoise.params import blt_coeffs
from bltnoise.rational import ra_blt_build
from bltnoise.recursive import (
    RecursiveFactorization,
    blt_base_factory,
    comb_dense,
    comc_dense,
    recursive_norms,
    recursive_stream,
    theorem2_params,
)
from bltnoise.seq import ltt_dense, series_reciprocal

from helpers import bintree_dense, consumption_perm, random_factorization


def blt_dense_pair(fact, n):
    """Dense (B, C) of a BLT factorization at horizon n."""
    r = blt_coeffs(fact.rational(), n).coeffs
    return ltt_dense(np.cumsum(r)), ltt_dense(series_reciprocal(r))


def dense_recursion(B1, C1, levels):
    """Iterate the combine step against its own output."""
    B, C = B1, C1
    for _ in range(levels - 1):
        B = comb_dense(B1, B)
        C = comc_dense(C1, C)
    return B, C


def ones_lt(n):
    return np.tril(np.ones((n, n)))


class TestCombineIdentities:
    def test_worked_six_step_example(self):
        # trivial bases (B = A, C = I) for 2 and 3 steps combine into the
        # 6-step all-ones lower-triangular matrix
        B1, C1 = ones_lt(2), np.eye(2)
        B2, C2 = ones_lt(3), np.eye(3)
        B = comb_dense(B1, B2)
        C = comc_dense(C1, C2)
        assert B.shape == (6, 8) and C.shape == (8, 6)
        np.testing.assert_allclose(B @ C, ones_lt(6), atol=1e-14)

    def test_product_identity_blt_bases(self):
        rng = np.random.default_rng(5)
        f1 = random_factorization(rng, 2, n=4)
        f2 = random_factorization(rng, 1, n=3)
        B1, C1 = blt_dense_pair(f1, 4)
        B2, C2 = blt_dense_pair(f2, 3)
        prod = comb_dense(B1, B2) @ comc_dense(C1, C2)
        np.testing.assert_allclose(prod, ones_lt(12), atol=1e-10)

    def test_product_identity_mixed_bases(self):
        rng = np.random.default_rng(6)
        f1 = random_factorization(rng, 2, n=4)
        B1, C1 = blt_dense_pair(f1, 4)
        B2, C2 = bintree_dense(1)
        prod = comb_dense(B1, B2) @ comc_dense(C1, C2)
        np.testing.assert_allclose(prod, ones_lt(8), atol=1e-10)

    def test_column_norms_add_exactly(self):
        rng = np.random.default_rng(7)
        C1 = rng.normal(size=(5, 3))
        C2 = rng.normal(size=(4, 6))
        combined = comc_dense(C1, C2)

        def max_col_sq(M):
            return np.max(np.sum(M * M, axis=0))

        np.testing.assert_allclose(
            max_col_sq(combined), max_col_sq(C1) + max_col_sq(C2), rtol=1e-15
        )

    def test_scalar_ones_stack(self):
        combined = comc_dense([[1.0]], [[1.0]])
        np.testing.assert_array_equal(combined, [[1.0], [1.0]])
        assert np.linalg.norm(combined[:, 0]) == pytest.approx(np.sqrt(2.0))

    def test_dense_cap_enforced(self):
        with pytest.raises(ValueError, match="cap"):
            comb_dense(np.eye(70), np.eye(70))


class TestRecursiveNorms:
    def test_single_level_is_identity(self):
        assert recursive_norms(1.7, 2.3, 1) == (1.7, 2.3)

    def test_four_levels_double(self):
        sens, rown = recursive_norms(1.25, 1.0, 4)
        assert sens == pytest.approx(2.5)
        sens, rown = recursive_norms(1.2, 0.9, 4)
        assert sens == pytest.approx(2.4)
        assert rown == pytest.approx(1.8)

    def test_levels_validated(self):
        with pytest.raises(ValueError):
            recursive_norms(1.0, 1.0, 0)

    def test_dense_norms_match(self):
        """Dense column norms realize sqrt(l) exactly; row norms stay below."""
        rng = np.random.default_rng(8)
        fact = random_factorization(rng, 2, n=4)
        B1, C1 = blt_dense_pair(fact, 4)
        levels = 3
        B, C = dense_recursion(B1, C1, levels)
        sens_base = sensitivity_of(fact, 4)
        rown_base = rownorm_of(fact, 4)
        want_sens, want_rown = recursive_norms(sens_base, rown_base, levels)
        got_sens = np.sqrt(np.max(np.sum(C * C, axis=0)))
        got_rown = np.sqrt(np.max(np.sum(B * B, axis=1)))
        np.testing.assert_allclose(got_sens, want_sens, rtol=1e-10)
        assert got_rown <= want_rown + 1e-12


class TestRecursiveStream:
    def run_stream(self, fact, n1, levels, m, Z, perm):
        source = iter([Z[p] for p in perm])
        gen = recursive_stream(blt_base_factory(fact, m), n1, levels, m, source)
        return np.vstack(list(islice(gen, n1**levels)))

    @pytest.mark.parametrize("n1", [2, 3, 4])
    @pytest.mark.parametrize("levels", [1, 2, 3])
    @pytest.mark.parametrize("m", [1, 4])
    def test_matches_dense(self, n1, levels, m):
        rng = np.random.default_rng(100 * n1 + 10 * levels + m)
        fact = random_factorization(rng, 2, n=n1)
        B1, C1 = blt_dense_pair(fact, n1)
        B, _ = dense_recursion(B1, C1, levels)
        Z = rng.normal(size=(B.shape[1], m))
        perm = consumption_perm(n1, levels)
        got = self.run_stream(fact, n1, levels, m, Z, perm)
        np.testing.assert_allclose(got, B @ Z, atol=1e-9)

    def test_discarded_carry_columns_are_zero(self):
        # draws the streamer never consumes correspond to dense columns the
        # shift matrix zeroed out, so their noise values cannot matter
        rng = np.random.default_rng(9)
        fact = random_factorization(rng, 2, n=3)
        B1, C1 = blt_dense_pair(fact, 3)
        levels = 3
        B, _ = dense_recursion(B1, C1, levels)
        perm = consumption_perm(3, levels)
        consumed = len(perm) - (levels - 1)
        unused_cols = perm[consumed:]
        assert len(unused_cols) == levels - 1
        np.testing.assert_array_equal(B[:, unused_cols], 0.0)

    def test_consumption_count(self):
        n1, levels, m = 3, 3, 2
        rng = np.random.default_rng(10)
        fact = random_factorization(rng, 2, n=n1)
        rec = RecursiveFactorization(base=fact, levels=levels)

        count = 0

        def counted():
            nonlocal count
            while True:
                count += 1
                yield np.zeros(m)

        gen = recursive_stream(blt_base_factory(fact, m), n1, levels, m, counted())
        rows = list(islice(gen, rec.n))
        assert len(rows) == n1**levels
        assert count == rec.n_prime - (levels - 1)
        with pytest.raises(StopIteration):
            next(gen)
        assert count == rec.n_prime

    def test_exhausted_source_raises(self):
        n1, levels, m = 2, 2, 1
        rng = np.random.default_rng(11)
        fact = random_factorization(rng, 1, n=n1)
        needed = consumption_perm(n1, levels)
        source = [np.zeros(m)] * (len(needed) - (levels - 1) - 1)
        gen = recursive_stream(blt_base_factory(fact, m), n1, levels, m, source)
        with pytest.raises(RuntimeError, match="exhausted"):
            list(islice(gen, n1**levels))

    def test_bad_noise_shape_rejected(self):
        rng = np.random.default_rng(12)
        fact = random_factorization(rng, 1, n=2)
        gen = recursive_stream(
            blt_base_factory(fact, 2), 2, 1, 2, iter([np.zeros(3)])
        )
        with pytest.raises(ValueError, match="shape"):
            next(gen)

    def test_levels_validated(self):
        with pytest.raises(ValueError):
            recursive_stream(lambda: None, 2, 0, 1, iter([]))
        with pytest.raises(ValueError):
            RecursiveFactorization(base=None, levels=0)


class TestRecursiveFactorization:
    def test_shape_properties(self):
        rng = np.random.default_rng(13)
        fact = random_factorization(rng, 2, n=3)
        rec = RecursiveFactorization(base=fact, levels=2)
        assert rec.n1 == 3 and rec.n1_prime == 3
        assert rec.n == 9
        assert rec.n_prime == 12
        B1, C1 = blt_dense_pair(fact, 3)
        B, C = dense_recursion(B1, C1, 2)
        assert B.shape == (rec.n, rec.n_prime)
        assert C.shape == (rec.n_prime, rec.n)

    def test_dense_pair_base(self):
        B1, C1 = bintree_dense(1)
        rec = RecursiveFactorization(base=(B1, C1), levels=3)
        assert rec.n1 == 2 and rec.n1_prime == 3
        assert rec.n == 8 and rec.n_prime == 3 * 7


class TestTheorem2Params:
    def test_worked_examples(self):
        assert theorem2_params(10**6) == (14, 54, 6)
        assert theorem2_params(25) == (5, 37, 2)

    def test_levels_cover_horizon(self):
        for n in (25, 10**3, 10**4, 10**6, 10**8):
            n1, d, levels = theorem2_params(n)
            assert n1**levels >= n
            assert n1 ** (levels - 1) < n
            assert d >= 3

    def test_small_n_rejected(self):
        with pytest.raises(ValueError):
            theorem2_params(24)

    def test_bound_at_ten_thousand(self):
        """The recursive MaxErr stays within the additive/multiplicative
        budget l * base <= opt * (1 + 3 pi / ln n1) + 4 + 3 / ln n1 + ln(n1) / pi."""
        n = 10**4
        n1, d, levels = theorem2_params(n)
        base = ra_blt_build(d, n1)
        max_err_rec = levels * sensitivity_of(base, n1) * rownorm_of(base, n1)
        ln_n1 = np.log(n1)
        budget = (
            opt_lt_toe(n) * (1.0 + 3.0 * np.pi / ln_n1)
            + 4.0
            + 3.0 / ln_n1
            + ln_n1 / np.pi
        )
        assert max_err_rec <= budget


class TestBinaryTree:
    @pytest.mark.parametrize("levels", [1, 2, 3, 4, 5, 6])
    def test_factorizes_and_max_err(self, levels):
        B, C = bintree_dense(levels)
        n = 2**levels
        np.testing.assert_allclose(B @ C, ones_lt(n), atol=1e-12)
        rown = np.sqrt(np.max(np.sum(B * B, axis=1)))
        sens = np.sqrt(np.max(np.sum(C * C, axis=0)))
        assert rown * sens == pytest.approx(levels + 1)
        assert rown * sens == pytest.approx(bintree_value(n))
