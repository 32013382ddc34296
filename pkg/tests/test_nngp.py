#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NNGP 诱导协方差与近场形式检查的测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.basis.basis_embed import build_basis_system, embed
from app.errors import ConfigError, DataError
from app.nngp.nngp_kernel import NNGPConfig, arc_cosine_step, c0, induced_cov, nearfield_form_check


class TestBaseTerm:
    def test_example(self):
        cfg = NNGPConfig(sigma_b2=0.5, sigma_w2=2.0)
        assert c0([1.0, 0.0], [1.0, 1.0], cfg) == pytest.approx(1.5)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            c0([1.0], [1.0, 2.0], NNGPConfig())

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            NNGPConfig(sigma_w2=0.0)
        with pytest.raises(ConfigError):
            NNGPConfig(activation="tanh")
        with pytest.raises(ConfigError):
            NNGPConfig(depth=0)


class TestArcCosine:
    def test_identical_inputs(self):
        cfg = NNGPConfig(sigma_b2=0.2, sigma_w2=3.0)
        assert arc_cosine_step(2.0, 2.0, 2.0, cfg) == pytest.approx(0.2 + 3.0 / 2.0 * 2.0)

    def test_orthogonal_inputs(self):
        cfg = NNGPConfig(sigma_w2=1.0)
        assert arc_cosine_step(0.0, 1.0, 1.0, cfg) == pytest.approx(1.0 / (2.0 * np.pi))

    def test_requires_positive_diagonal(self):
        with pytest.raises(DataError):
            arc_cosine_step(0.0, 0.0, 1.0, NNGPConfig())


class TestInducedCov:
    @pytest.mark.parametrize("activation", ["relu", "identity"])
    @pytest.mark.parametrize("depth", [1, 2, 3, 4, 5])
    def test_symmetric_psd(self, rng, depth, activation):
        x = rng.random((40, 6))
        gram = induced_cov(x, NNGPConfig(sigma_b2=0.1, sigma_w2=1.5, depth=depth, activation=activation))
        assert np.max(np.abs(gram - gram.T)) < 1e-12
        eig = np.linalg.eigvalsh(gram)
        assert eig.min() >= -1e-8 * max(1.0, eig.max())

    @pytest.mark.parametrize("depth", [1, 2, 3, 4])
    def test_relu_diagonal_telescopes(self, rng, depth):
        x = rng.random((10, 4))
        cfg = NNGPConfig(sigma_b2=0.0, sigma_w2=1.7, depth=depth)
        base = np.diag(induced_cov(x, NNGPConfig(sigma_b2=0.0, sigma_w2=1.7)))
        assert_allclose(np.diag(induced_cov(x, cfg)), (1.7 / 2.0) ** (depth - 1) * base, rtol=1e-10)

    def test_identity_single_layer(self, rng):
        x = rng.random((8, 3))
        cfg = NNGPConfig(sigma_b2=0.3, sigma_w2=2.0, activation="identity")
        assert_allclose(induced_cov(x, cfg), 0.3 + 2.0 * x @ x.T / 3.0)

    def test_identity_recursion(self, rng):
        x = rng.random((8, 3))
        one = induced_cov(x, NNGPConfig(sigma_b2=0.3, sigma_w2=2.0, activation="identity"))
        two = induced_cov(x, NNGPConfig(sigma_b2=0.3, sigma_w2=2.0, depth=2, activation="identity"))
        assert_allclose(two, 0.3 + 2.0 * one)

    def test_accepts_embedding(self):
        s = np.linspace(0.0, 1.0, 25)
        emb = embed(s, build_basis_system(s, levels=2, domain=[0.0, 1.0]))
        assert induced_cov(emb, NNGPConfig()).shape == (25, 25)


class TestNearfield:
    def test_fine_grid_passes(self):
        s = np.linspace(0.0, 1.0, 400)
        emb = embed(s, build_basis_system(s, levels=2, domain=[0.0, 1.0]))
        report = nearfield_form_check(s, emb)
        assert report.passed
        assert report.c > 0
        assert report.n_pairs == 400 + 399

    def test_needs_increasing_grid(self):
        with pytest.raises(DataError):
            nearfield_form_check([0.0, 0.2, 0.1], np.ones((3, 2)))

    def test_row_mismatch(self):
        with pytest.raises(DataError):
            nearfield_form_check([0.0, 0.1, 0.2], np.ones((4, 2)))
