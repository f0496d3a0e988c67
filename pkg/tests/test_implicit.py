"""Gradient relations through black-box inversion, gated by finite differences."""

import numpy as np
from conftest import grad_fd, random_transform, rel_err, richardson_diff

from bumpflows.implicit import (backward_input, backward_params, inverse_forward,
                                inverse_mixed_second_param,
                                inverse_second_derivative, inverse_third_derivative)
from bumpflows.rootfind import RootFindConfig, invert_params
from bumpflows.transforms import AffineMap, MixtureTransform

TIGHT = RootFindConfig(bins=16, eps=1e-12)


def near_identity(rng, n=3):
    t = random_transform(rng, n_components=n)
    t.raw[-1] = 40.0
    return t


class TestForward:
    def test_identity_transform(self, rng):
        t = near_identity(rng)
        y = rng.uniform(0.1, 0.9, size=8)
        x, nlj, _ = inverse_forward(t, y, TIGHT)
        np.testing.assert_allclose(x, y, atol=1e-9)
        np.testing.assert_allclose(nlj, 0.0, atol=1e-9)

    def test_affine_analytic(self):
        t = AffineMap(2.0, 0.25)
        y = np.linspace(-1, 1, 7)
        x, nlj, _ = inverse_forward(t, y)
        np.testing.assert_allclose(x, (y - 0.25) / 2.0, atol=0)
        np.testing.assert_allclose(nlj, -np.log(2.0), atol=0)

    def test_mixture_round_trip(self, rng):
        t = random_transform(rng, n_components=5)
        y = rng.uniform(0.02, 0.98, size=64)
        x, _, _ = inverse_forward(t, y, TIGHT)
        np.testing.assert_allclose(t.value(x), y, atol=1e-9)


class TestBackwardInput:
    def test_affine_half(self):
        t = AffineMap(2.0)
        _, _, rec = inverse_forward(t, np.array([0.4]))
        g = backward_input(rec, np.array([1.0]), np.array([0.0]))
        np.testing.assert_allclose(g, 0.5, atol=0)

    def test_zero_cotangents(self, rng):
        t = random_transform(rng)
        _, _, rec = inverse_forward(t, rng.uniform(0.1, 0.9, size=5), TIGHT)
        g = backward_input(rec, np.zeros(5), np.zeros(5))
        np.testing.assert_array_equal(g, np.zeros(5))

    def test_matches_fd(self, rng):
        t = random_transform(rng, n_components=4)
        y = rng.uniform(0.1, 0.9, size=6)
        _, _, rec = inverse_forward(t, y, TIGHT)
        gx = rng.normal(size=6)
        gl = rng.normal(size=6)
        g = backward_input(rec, gx, gl)

        def val(yy):
            x, nlj, _ = inverse_forward(t, yy, TIGHT)
            return np.sum(gx * x) + np.sum(gl * nlj)

        h = 1e-6
        fd = np.zeros(6)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            fd[i] = (val(y + e) - val(y - e)) / (2 * h)
        assert rel_err(g, fd, floor=1e-5) <= 1e-5

    def test_reciprocity(self, rng):
        # slope of the inverse times slope of the forward equals one
        for _ in range(20):
            t = random_transform(rng, n_components=4)
            y = rng.uniform(0.05, 0.95, size=8)
            x, _, rec = inverse_forward(t, y, TIGHT)
            dinv = backward_input(rec, np.ones(8), np.zeros(8))
            np.testing.assert_allclose(dinv * t.forward(x).dy, 1.0, atol=1e-9)


class TestBackwardParams:
    def test_affine_shift_direction(self):
        t = AffineMap(2.0, 0.1)
        _, _, rec = inverse_forward(t, np.array([0.7]))
        g = backward_params(rec, np.array([1.0]), np.array([0.0]))
        np.testing.assert_allclose(g[1], -0.5, atol=0)  # (scale, shift) order

    def test_identity_floor_suppresses_component_params(self, rng):
        t = near_identity(rng)
        _, _, rec = inverse_forward(t, rng.uniform(0.2, 0.8, size=8), TIGHT)
        g = backward_params(rec, np.ones(8), np.ones(8))
        n, cw = t.cfg.n_components, t.cfg.comp_width
        assert np.max(np.abs(g[: n * cw])) <= 1e-12

    def test_matches_fd(self, rng):
        t = random_transform(rng, n_components=4)
        y = rng.uniform(0.1, 0.9, size=8)
        _, _, rec = inverse_forward(t, y, TIGHT)
        gx = rng.normal(size=8)
        gl = rng.normal(size=8)
        g = backward_params(rec, gx, gl)

        def val(theta):
            t2 = MixtureTransform(t.cfg, theta)
            x, nlj, _ = inverse_forward(t2, y, TIGHT)
            return float(np.sum(gx * x) + np.sum(gl * nlj))

        # h sits above the solver's eps-induced noise in the differences
        fd = grad_fd(val, t.raw, h=1e-5)
        assert rel_err(g, fd, floor=1e-3) <= 1e-4


class TestHigherOrder:
    def test_affine_zeroes(self):
        t = AffineMap(3.0, -0.2)
        _, _, rec = inverse_forward(t, np.linspace(-1, 1, 5))
        np.testing.assert_array_equal(inverse_second_derivative(rec), np.zeros(5))
        np.testing.assert_array_equal(inverse_third_derivative(rec), np.zeros(5))
        np.testing.assert_array_equal(inverse_mixed_second_param(rec), np.zeros((5, 2)))

    def test_identity_zeroes(self, rng):
        t = near_identity(rng)
        _, _, rec = inverse_forward(t, rng.uniform(0.2, 0.8, size=4), TIGHT)
        np.testing.assert_allclose(inverse_second_derivative(rec), 0.0, atol=1e-9)
        np.testing.assert_allclose(inverse_third_derivative(rec), 0.0, atol=1e-9)

    def test_second_derivative_fd(self, rng):
        t = random_transform(rng, n_components=4)
        y = rng.uniform(0.15, 0.85, size=5)
        _, _, rec = inverse_forward(t, y, TIGHT)
        d2 = inverse_second_derivative(rec)

        def beta(yy):
            return invert_params(t.params, np.atleast_1d(yy), TIGHT)

        for i in range(5):
            fd = float(richardson_diff(lambda v: beta(np.array([v]))[0], y[i],
                                       h=1e-3, order=2))
            assert abs(d2[i] - fd) / (abs(fd) + 1e-2) <= 1e-3

    def test_third_derivative_fd(self, rng):
        t = random_transform(rng, n_components=4)
        y = rng.uniform(0.2, 0.8, size=4)
        _, _, rec = inverse_forward(t, y, TIGHT)
        d3 = inverse_third_derivative(rec)

        def beta(yy):
            return invert_params(t.params, np.atleast_1d(yy), TIGHT)

        for i in range(4):
            fd = float(richardson_diff(lambda v: beta(np.array([v]))[0], y[i],
                                       h=2e-3, order=3))
            assert abs(d3[i] - fd) / (abs(fd) + 1e-1) <= 1e-2

    def test_mixed_param_fd(self, rng):
        t = random_transform(rng, n_components=2)
        y = rng.uniform(0.2, 0.8, size=3)
        _, _, rec = inverse_forward(t, y, TIGHT)
        mixed = inverse_mixed_second_param(rec)

        def d2_of(theta):
            t2 = MixtureTransform(t.cfg, theta)
            _, _, rec2 = inverse_forward(t2, y, TIGHT)
            return inverse_second_derivative(rec2)

        h = 1e-5
        for j in range(t.cfg.param_count):
            tp, tm = t.raw.copy(), t.raw.copy()
            tp[j] += h
            tm[j] -= h
            fd = (d2_of(tp) - d2_of(tm)) / (2 * h)
            denom = np.abs(fd) + 1e-1
            assert np.max(np.abs(mixed[:, j] - fd) / denom) <= 1e-2


class TestGradientPathEquivalence:
    def test_affine_ift_equals_analytic(self, rng):
        # gradients via the implicit route equal direct differentiation of
        # the closed-form inverse to near machine precision
        scale, shift = 1.7, -0.4
        t = AffineMap(scale, shift)
        y = rng.uniform(-1, 1, size=6)
        _, _, rec = inverse_forward(t, y)
        gx = rng.normal(size=6)
        gl = rng.normal(size=6)

        g_y = backward_input(rec, gx, gl)
        np.testing.assert_allclose(g_y, gx / scale, atol=1e-10)

        g_p = backward_params(rec, gx, gl)
        # x = (y - shift)/scale; nlj = -log scale
        d_scale = np.sum(gx * (-(y - shift) / scale ** 2) + gl * (-1.0 / scale))
        d_shift = np.sum(gx * (-1.0 / scale))
        np.testing.assert_allclose(g_p, [d_scale, d_shift], atol=1e-10)
