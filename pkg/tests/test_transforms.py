"""Element-wise bijection properties: bumps, mixtures, jets, serialization."""

import numpy as np
import pytest
from conftest import grad_fd, random_transform, rel_err

from bumpflows.graphs import param_jacobian
from bumpflows.ramps import RampSpec
from bumpflows.transforms import (AffineMap, MixtureTransform, TransformerConfig,
                                  bump_forward, constrain)


class TestBumpForward:
    def test_interval_boundary_interpolation(self):
        # support strictly inside (0, 1)
        jet = bump_forward(4.0, 0.5, RampSpec("exponential", alpha=1, beta=2),
                           np.array([0.0, 1.0]))
        np.testing.assert_allclose(jet.y, [0.0, 1.0], atol=1e-15)

    def test_interval_center_symmetry(self):
        jet = bump_forward(1.0, 0.5, RampSpec("exponential", alpha=1, beta=2),
                           np.array([0.5]))
        np.testing.assert_allclose(jet.y, 0.5, atol=1e-14)

    def test_circle_wrapped_integral_matches_quadrature(self):
        # value at x equals the integral of the wrapped bump density from 0,
        # computed here by fine trapezoid quadrature of the translated slopes
        a, b, x = 2.0, 0.95, 0.1
        spec = RampSpec("exponential", alpha=1.0, beta=2.0)
        jet = bump_forward(a, b, spec, np.array([x]), domain="circle")

        from bumpflows.ramps import sigmoid_eval

        def wrapped_density(t):
            total = np.zeros_like(t)
            for k in (-1.0, 0.0, 1.0):
                z = a * ((t + k) - b) + 0.5
                total += a * sigmoid_eval(spec, z)[1]
            return total

        grid = np.linspace(0.0, x, 20001)
        val = np.trapezoid(wrapped_density(grid), grid)
        np.testing.assert_allclose(jet.y[0], val, atol=1e-9)

    def test_circle_value_in_unit_range(self):
        jet = bump_forward(2.0, 0.95, RampSpec("exponential", alpha=1, beta=2),
                           np.array([0.0, 0.5, 1.0]), domain="circle")
        np.testing.assert_allclose(jet.y[[0, 2]], [0.0, 1.0], atol=1e-14)


class TestMixture:
    def test_identity_floor(self, rng):
        cfg = TransformerConfig(domain="interval", n_components=4)
        raw = rng.normal(size=cfg.param_count)
        raw[-1] = 40.0  # c -> 1
        t = MixtureTransform(cfg, raw)
        x = np.linspace(0.0, 1.0, 33)
        jet = t.forward(x)
        np.testing.assert_allclose(jet.y, x, atol=1e-12)
        np.testing.assert_allclose(jet.dy, 1.0, atol=1e-12)
        np.testing.assert_allclose(jet.g, 0.0, atol=1e-12)

    def test_single_component_degenerate_simplex(self, rng):
        cfg1 = TransformerConfig(domain="interval", n_components=1)
        raw = rng.normal(size=cfg1.param_count)
        t = MixtureTransform(cfg1, raw)
        x = np.linspace(0, 1, 9)
        p = t.params
        assert np.allclose(p.w, 1.0)
        # mixture equals (1-c) * bump + c * x
        a, b, alpha, c = p.a[0, 0], p.b[0, 0], p.alpha[0, 0], p.c[0]
        bump = bump_forward(a, b, RampSpec("exponential", alpha=alpha, beta=2.0), x)
        np.testing.assert_allclose(t.forward(x).y, (1 - c) * bump.y + c * x, atol=1e-12)

    def test_mirrored_components_fix_midpoint(self):
        cfg = TransformerConfig(domain="interval", n_components=2)
        raw = np.zeros(cfg.param_count)
        comp = raw[: 2 * cfg.comp_width].reshape(2, cfg.comp_width)
        comp[0, 1] = 1.2     # b = sigmoid(1.2)
        comp[1, 1] = -1.2    # mirrored location
        t = MixtureTransform(cfg, raw)
        y = t.forward(np.array([0.5])).y
        np.testing.assert_allclose(y, 0.5, atol=1e-9)

    def test_bijectivity_and_boundaries(self, rng):
        for domain in ("interval", "circle"):
            for _ in range(40):
                t = random_transform(rng, domain=domain, n_components=5)
                x = np.linspace(0.0, 1.0, 257)
                jet = t.forward(x)
                c = t.params.c[0]
                assert np.all(jet.dy >= c - 1e-12)
                assert np.all(np.diff(jet.y) > 0)
                assert abs(jet.y[0]) <= 1e-12
                assert abs(jet.y[-1] - 1.0) <= 1e-12

    def test_circle_periodic_derivatives(self, rng):
        for _ in range(20):
            t = random_transform(rng, domain="circle", n_components=4)
            jet = t.forward(np.array([0.0, 1.0]))
            assert abs(jet.dy[0] - jet.dy[1]) <= 1e-9
            assert abs(jet.d2y[0] - jet.d2y[1]) <= 1e-9
            assert abs(jet.d3y[0] - jet.d3y[1]) <= 1e-9

    def test_slope_quadrature_normalization(self, rng):
        x = np.linspace(0.0, 1.0, 4097)
        for domain in ("interval", "circle"):
            t = random_transform(rng, domain=domain)
            dy = t.forward(x).dy
            assert abs(np.trapezoid(dy, x) - 1.0) <= 1e-6

    def test_jet_fd_consistency(self, rng):
        t = random_transform(rng, n_components=4)
        x = rng.uniform(0.05, 0.95, size=16)
        jet = t.forward(x)
        h = 1e-4
        stencil = [t.forward(x + k * h).y for k in (-2, -1, 0, 1, 2)]
        fd1 = (stencil[3] - stencil[1]) / (2 * h)
        fd2 = (stencil[3] - 2 * stencil[2] + stencil[1]) / h ** 2
        fd3 = (stencil[4] - 2 * stencil[3] + 2 * stencil[1] - stencil[0]) / (2 * h ** 3)
        assert rel_err(jet.dy, fd1, floor=1e-6) <= 1e-4
        assert rel_err(jet.d2y, fd2, floor=1e-3) <= 1e-4
        assert rel_err(jet.d3y, fd3, floor=1e-1) <= 1e-3

    def test_log_slope_identities(self, rng):
        t = random_transform(rng)
        jet = t.forward(rng.uniform(0, 1, size=32))
        np.testing.assert_allclose(jet.g, np.log(jet.dy), rtol=1e-12)
        np.testing.assert_allclose(jet.dg, jet.d2y / jet.dy, rtol=1e-12)
        np.testing.assert_allclose(jet.d2g, jet.d3y / jet.dy - (jet.d2y / jet.dy) ** 2,
                                   rtol=1e-12, atol=1e-12)


class TestParamJacobian:
    def test_matches_finite_differences(self, rng):
        t = random_transform(rng, n_components=3)
        x = rng.uniform(0.1, 0.9, size=5)
        jy, jdy = param_jacobian(t.cfg, t.raw, x)

        def f_y(theta):
            return MixtureTransform(t.cfg, theta).forward(x).y

        def f_dy(theta):
            return MixtureTransform(t.cfg, theta).forward(x).dy

        for i in range(x.size):
            fd_y = grad_fd(lambda th: f_y(th)[i], t.raw)
            fd_dy = grad_fd(lambda th: f_dy(th)[i], t.raw)
            # the absolute floor sits above central-difference noise (~1e-10)
            assert rel_err(jy[i], fd_y, floor=1e-4) <= 1e-5
            assert rel_err(jdy[i], fd_dy, floor=1e-3) <= 1e-4

    def test_identity_mix_direction(self, rng):
        # d y / d c_raw = (x - sum_i w_i u_i) * dc/dc_raw
        from bumpflows.transforms import C_MIN

        t = random_transform(rng, n_components=3)
        x = rng.uniform(0.1, 0.9, size=4)
        jy, _ = param_jacobian(t.cfg, t.raw, x)
        p = t.params
        c = p.c[0]
        jet = t.forward(x)
        mixture_part = (jet.y - c * x) / (1.0 - c)
        craw = t.raw[-1]
        sig = 1.0 / (1.0 + np.exp(-craw))
        dc = (1.0 - C_MIN) * sig * (1.0 - sig)
        np.testing.assert_allclose(jy[:, -1], (x - mixture_part) * dc, rtol=1e-9)

    def test_frozen_shape_not_in_vector(self):
        cfg = TransformerConfig(domain="interval", n_components=5,
                                ramp="exponential", shape=2.0, trainable_alpha=True)
        assert cfg.param_count == 5 * 3 + 5 + 1
        mono = TransformerConfig(domain="interval", n_components=5, ramp="monomial",
                                 shape=3, trainable_alpha=False)
        assert mono.param_count == 5 * 2 + 5 + 1


class TestAffine:
    def test_examples(self):
        t = AffineMap(1.0, 0.0)
        np.testing.assert_array_equal(t.forward(np.array([0.3])).y, [0.3])
        t2 = AffineMap(2.0, 1.0)
        np.testing.assert_array_equal(t2.forward(np.array([0.5])).y, [2.0])
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(t2.inverse(t2.forward(x).y), x, atol=0)

    def test_validation(self):
        with pytest.raises(ValueError):
            AffineMap(0.0)


class TestSerialization:
    def test_json_round_trip(self, rng):
        for domain in ("interval", "circle"):
            for ramp in ("exponential", "monomial"):
                t = random_transform(rng, domain=domain, ramp=ramp,
                                     shape=2.0 if ramp == "exponential" else 2)
                t2 = MixtureTransform.loads(t.dumps())
                assert t2.cfg == t.cfg
                np.testing.assert_array_equal(t2.raw, t.raw)
                x = rng.uniform(0, 1, 8)
                np.testing.assert_array_equal(t2.forward(x).y, t.forward(x).y)
