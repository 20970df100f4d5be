"""Tests for buffered streaming multiplication and seeded noise generation."""

import json
import math

import numpy as np
import pytest
from scipy.special import ndtri

from bltnoise.params import (
    BltFactorization,
    MatrixPowerForm,
    blt_coeffs,
    diagonal_power_form,
)
from bltnoise.seq import ToeplitzSeq, ltt_apply_dense
from bltnoise.streaming import (
    PER_STEP,
    PREFIX,
    RNG_NAME,
    NoiseStreamConfig,
    _uniform_chunk,
    noise_stream,
    stream_init,
    stream_step,
    write_noise_csv,
    write_noise_f64,
)
from bltnoise.error_eval import rownorm_of, sensitivity_of

from helpers import random_factorization, random_rational, reference_normals


class TestStreamStep:
    def test_impulse_response(self):
        r = random_rational(np.random.default_rng(0), 1)
        r = type(r)(theta=[0.5], omega=[0.5], t=1.0)
        state = stream_init(diagonal_power_form(r), 1)
        outs = [stream_step(state, np.array([z])) for z in (1.0, 0.0, 0.0)]
        np.testing.assert_allclose(np.concatenate(outs), [1.0, 0.5, 0.25], rtol=1e-15)

    def test_prefix_sums(self):
        r = type(random_rational(np.random.default_rng(0), 1))([1.0], [1.0], 1.0)
        state = stream_init(diagonal_power_form(r), 1)
        outs = [stream_step(state, np.array([1.0])) for _ in range(3)]
        np.testing.assert_array_equal(np.concatenate(outs), [1.0, 2.0, 3.0])

    def test_init_shape_and_first_output(self):
        rng = np.random.default_rng(1)
        r = random_rational(rng, 2)
        form = diagonal_power_form(r)
        state = stream_init(form, 3)
        assert state.S.shape == (2, 3)
        assert not state.S.any() and state.k == 0
        z = rng.standard_normal(3)
        out = stream_step(state, z)
        r0 = form.t + form.u @ form.v
        np.testing.assert_allclose(out, r0 * z, rtol=1e-14)

    def test_degree_zero(self):
        form = MatrixPowerForm(np.zeros(0), np.zeros((0, 0)), np.zeros(0), 1.0)
        state = stream_init(form, 2)
        assert state.S.shape == (0, 2)
        z = np.array([3.0, -1.0])
        np.testing.assert_array_equal(stream_step(state, z), z)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(42)
        n, m = 32, 4
        for _ in range(5):
            r = random_rational(rng, 3)
            rc = blt_coeffs(r, n)
            Z = rng.standard_normal((n, m))
            state = stream_init(diagonal_power_form(r), m)
            got = np.vstack([stream_step(state, Z[k]) for k in range(n)])
            np.testing.assert_allclose(got, ltt_apply_dense(rc, Z), rtol=1e-10, atol=1e-12)

    def test_buffer_state_identity(self):
        """After k steps the buffer equals sum_j W^{k-1-j} v Z_j."""
        rng = np.random.default_rng(7)
        r = random_rational(rng, 2)
        form = diagonal_power_form(r)
        Z = rng.standard_normal((5, 1))
        state = stream_init(form, 1)
        for k in range(5):
            stream_step(state, Z[k])
        W = form.W
        expected = sum(
            np.linalg.matrix_power(W, 4 - j) @ np.outer(form.v, Z[j]) for j in range(5)
        )
        np.testing.assert_allclose(state.S, expected, rtol=1e-12)
        assert state.k == 5

    def test_dimension_mismatch(self):
        r = type(random_rational(np.random.default_rng(0), 1))([0.5], [0.5], 1.0)
        state = stream_init(diagonal_power_form(r), 2)
        with pytest.raises(ValueError):
            stream_step(state, np.ones(3))


class TestNoiseStreamConfig:
    def test_sigma_scaling(self):
        rng = np.random.default_rng(3)
        fact = random_factorization(rng, 2, 64)
        cfg = NoiseStreamConfig(fact, 64, 2, seed=0, zeta=2.5)
        np.testing.assert_allclose(cfg.sigma, 2.5 * sensitivity_of(fact, 64), rtol=1e-15)

    def test_validation(self):
        fact = BltFactorization([0.5], [0.75], 8)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 0, 1, seed=0, zeta=1.0)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 8, 0, seed=0, zeta=1.0)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 8, 1, seed=-1, zeta=1.0)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 8, 1, seed=2**64, zeta=1.0)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 8, 1, seed=0, zeta=-0.1)
        with pytest.raises(ValueError):
            NoiseStreamConfig(fact, 8, 1, seed=0, zeta=1.0, output_kind="bogus")


class TestNoiseStream:
    def test_matches_dense(self):
        rng = np.random.default_rng(11)
        n, m = 200, 3
        fact = random_factorization(rng, 3, n)
        cfg = NoiseStreamConfig(fact, n, m, seed=5, zeta=1.0)
        got = np.vstack(list(noise_stream(cfg)))
        z = reference_normals(5, n, m) * cfg.sigma
        want = ltt_apply_dense(blt_coeffs(fact.rational(), n), z)
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    def test_prefix_is_cumsum_of_per_step(self):
        rng = np.random.default_rng(13)
        n, m = 150, 2
        fact = random_factorization(rng, 2, n)
        per = np.vstack(list(noise_stream(NoiseStreamConfig(fact, n, m, seed=9, zeta=1.0))))
        pre = np.vstack(
            list(noise_stream(NoiseStreamConfig(fact, n, m, seed=9, zeta=1.0, output_kind=PREFIX)))
        )
        np.testing.assert_allclose(pre, np.cumsum(per, axis=0), rtol=1e-12, atol=1e-12)

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(17)
        fact = random_factorization(rng, 2, 64)
        cfg = NoiseStreamConfig(fact, 2100, 2, seed=123, zeta=1.0)
        a = np.vstack(list(noise_stream(cfg)))
        b = np.vstack(list(noise_stream(cfg)))
        assert np.array_equal(a, b)

    def test_column_shards_bitwise_identical(self):
        """Sharding by columns reproduces the unsharded stream exactly."""
        rng = np.random.default_rng(19)
        fact = random_factorization(rng, 3, 64)
        cfg = NoiseStreamConfig(fact, 130, 5, seed=77, zeta=1.0)
        full = np.vstack(list(noise_stream(cfg)))
        shards = [
            np.vstack(list(noise_stream(cfg, columns=cols)))
            for cols in ([0, 1], [2], [3, 4])
        ]
        assert np.array_equal(np.hstack(shards), full)

    def test_zeta_zero_rows(self):
        fact = BltFactorization([0.5], [0.75], 8)
        cfg = NoiseStreamConfig(fact, 8, 3, seed=1, zeta=0.0)
        rows = list(noise_stream(cfg))
        assert len(rows) == 8
        assert all(not row.any() for row in rows)

    def test_identity_factorization_row_variance(self):
        """With C = I the prefix noise at step k sums k+1 i.i.d. normals."""
        fact = BltFactorization([], [], 64)
        cfg = NoiseStreamConfig(fact, 64, 1, seed=3, zeta=1.0, output_kind=PREFIX)
        got = np.vstack(list(noise_stream(cfg))).ravel()
        z = reference_normals(3, 64, 1).ravel()
        np.testing.assert_allclose(got, np.cumsum(z), rtol=1e-12)

    def test_monte_carlo_last_row_variance(self):
        """Empirical variance of the final prefix row approaches sigma^2 * ||B row||^2."""
        rng = np.random.default_rng(23)
        fact = random_factorization(rng, 2, 64)
        n, trials = 64, 4000
        target = rownorm_of(fact, n) ** 2
        acc = np.empty(trials)
        for s in range(trials):
            cfg = NoiseStreamConfig(fact, n, 1, seed=s, zeta=1.0, output_kind=PREFIX)
            last = None
            for row in noise_stream(cfg):
                last = row
            acc[s] = last[0]
        sigma2 = sensitivity_of(fact, n) ** 2
        got = np.var(acc) / sigma2
        assert abs(got - target) / target < 0.08

    def test_chunk_boundaries_invisible(self):
        """Outputs agree across chunk sizes (the 1024-row internal chunking)."""
        rng = np.random.default_rng(29)
        fact = random_factorization(rng, 2, 64)
        from bltnoise.streaming import _noise_chunks

        cfg = NoiseStreamConfig(fact, 2500, 2, seed=31, zeta=1.0)
        a = np.vstack([blk for _, blk in _noise_chunks(cfg)])
        b = np.vstack([blk for _, blk in _noise_chunks(cfg, chunk_rows=7)])
        starts = [s for s, _ in _noise_chunks(cfg, chunk_rows=7)]
        assert starts == list(range(0, 2500, 7))
        np.testing.assert_allclose(a, b, rtol=0, atol=0)


class TestWriters:
    def test_csv_writer(self, tmp_path):
        fact = BltFactorization([0.5], [0.75], 4)
        cfg = NoiseStreamConfig(fact, 4, 2, seed=2, zeta=1.0)
        path = tmp_path / "noise.csv"
        write_noise_csv(cfg, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "step,dim0,dim1"
        assert len(lines) == 5
        row0 = lines[1].split(",")
        assert row0[0] == "0"
        got = np.vstack(list(noise_stream(cfg)))
        np.testing.assert_allclose(float(row0[1]), got[0, 0], rtol=1e-15)

    def test_f64_writer_and_sidecar(self, tmp_path):
        fact = BltFactorization([0.5], [0.75], 6)
        cfg = NoiseStreamConfig(fact, 6, 3, seed=8, zeta=2.0)
        path = tmp_path / "noise.f64"
        sidecar = write_noise_f64(cfg, path, factorization_path="f.json")
        raw = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(6, 3)
        got = np.vstack(list(noise_stream(cfg)))
        np.testing.assert_array_equal(raw, got)
        meta = json.loads((tmp_path / "noise.f64.json").read_text())
        assert sidecar == str(tmp_path / "noise.f64.json")
        assert meta["n"] == 6 and meta["m"] == 3 and meta["zeta"] == 2.0
        assert meta["seed"] == 8 and meta["rng"] == RNG_NAME
        assert meta["factorization_path"] == "f.json"
        np.testing.assert_allclose(meta["sigma"], cfg.sigma, rtol=1e-15)


class TestStateSize:
    def test_per_step_buffer_is_d_by_m(self):
        """The only live state is the d x m buffer (plus O(d) parameters)."""
        rng = np.random.default_rng(37)
        r = random_rational(rng, 5)
        state = stream_init(diagonal_power_form(r), 7)
        assert state.S.nbytes == 5 * 7 * 8
        for _ in range(100):
            stream_step(state, np.zeros(7))
        assert state.S.shape == (5, 7)
