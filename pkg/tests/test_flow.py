"""Coupling-flow consistency: passes, densities, forces, serialization."""

import numpy as np
import pytest
from conftest import random_model, rel_err

from bumpflows import tape
from bumpflows.flow import CouplingLayer, FlowModel, build_model
from bumpflows.nets import DenseNet
from bumpflows.rootfind import RootFindConfig
from bumpflows.tape import Node
from bumpflows.transforms import TransformerConfig

TIGHT = RootFindConfig(bins=16, eps=1e-12)


class TestIdentityModel:
    def test_near_identity_at_init(self, rng):
        m = build_model(2, ("interval",) * 2, 4, rng, n_components=6, hidden=(8,))
        x = rng.uniform(0, 1, size=(16, 2))
        z, ldj = m.inverse_np(x)
        assert np.max(np.abs(z - x)) <= 1e-3
        assert np.max(np.abs(ldj)) <= 1e-2

    def test_identity_floor_exact(self, rng):
        m = random_model(rng, weight_scale=0.0)
        for layer in m.layers:
            layer.raw_offsets[-1] = 40.0  # c -> 1 on every transform
        x = rng.uniform(0, 1, size=(16, 2))
        z, ldj = m.inverse_np(x)
        np.testing.assert_allclose(z, x, atol=1e-12)
        np.testing.assert_allclose(ldj, 0.0, atol=1e-12)
        assert np.max(np.abs(m.log_density(x))) <= 1e-12


class TestMasking:
    def test_conditioning_contract(self, rng):
        # single layer, B = {1}: first coordinate passes through, the second
        # depends on the first through the conditioner
        net = DenseNet.create(1, [6], TransformerConfig(n_components=3).param_count,
                              rng, zero_last=False)
        layer = CouplingLayer((0,), (1,), net, TransformerConfig(n_components=3),
                              "inverse")
        m = FlowModel(2, ("interval",) * 2, [layer], check_coverage=False)
        z = np.array([[0.3, 0.6], [0.7, 0.6]])
        x, _ = m.forward_np(z)
        np.testing.assert_array_equal(x[:, 0], z[:, 0])
        assert x[0, 1] != x[1, 1]

    def test_mask_coverage_enforced(self, rng):
        cfg = TransformerConfig(n_components=2)
        net = DenseNet.create(1, [4], cfg.param_count, rng)
        same_half = [CouplingLayer((0,), (1,), net, cfg, "forward"),
                     CouplingLayer((0,), (1,), net, cfg, "forward")]
        with pytest.raises(ValueError, match="dimension must be transformed"):
            FlowModel(2, ("interval",) * 2, same_half)
        with pytest.raises(ValueError, match="partition"):
            FlowModel(3, ("interval",) * 3, [CouplingLayer(
                (0,), (1,), net, cfg, "forward")])


class TestConsistency:
    def test_round_trip_and_logdet_antisymmetry(self, rng):
        for direction in ("forward", "inverse"):
            m = random_model(rng, n_layers=3, n_components=5, hidden=(12,),
                             direction=direction, rootcfg=TIGHT)
            x = rng.uniform(0.02, 0.98, size=(64, 2))
            z, ldj_i = m.inverse_np(x)
            x2, ldj_f = m.forward_np(z)
            assert np.max(np.abs(x2 - x)) <= 1e-8
            assert np.max(np.abs(ldj_i + ldj_f)) <= 1e-8

    def test_logdet_matches_fd_jacobian(self, rng):
        # tight solver eps keeps root-finding noise below the FD step
        m = random_model(rng, weight_scale=0.5, rootcfg=RootFindConfig(bins=16, eps=1e-13))
        z = rng.uniform(0.1, 0.9, size=(5, 2))
        _, ldj = m.forward_np(z)
        h = 1e-6
        for i in range(z.shape[0]):
            J = np.zeros((2, 2))
            for j in range(2):
                zp, zm = z[i : i + 1].copy(), z[i : i + 1].copy()
                zp[0, j] += h
                zm[0, j] -= h
                J[:, j] = (m.forward_np(zp)[0] - m.forward_np(zm)[0])[0] / (2 * h)
            assert rel_err(ldj[i], np.log(abs(np.linalg.det(J))), floor=1e-6) <= 1e-4

    def test_log_density_identity_relation(self, rng):
        m = random_model(rng, weight_scale=0.6)
        x = rng.uniform(0.05, 0.95, size=(32, 2))
        z, ldj = m.inverse_np(x)
        np.testing.assert_allclose(m.log_density(x), ldj, atol=0)
        _, ldj_f = m.forward_np(z)
        np.testing.assert_allclose(m.log_density(x), -ldj_f, atol=1e-8)

    def test_tape_matches_numeric(self, rng):
        for direction in ("forward", "inverse"):
            m = random_model(rng, direction=direction, rootcfg=TIGHT)
            x = rng.uniform(0, 1, size=(16, 2))
            node = m.log_density_graph(Node(x))
            np.testing.assert_allclose(node.value, m.log_density(x), atol=1e-12)

    def test_density_normalization_quadrature(self, rng):
        m = random_model(rng, n_layers=2, n_components=4, weight_scale=0.5)
        r = 256
        ticks = np.linspace(0.0, 1.0, r)
        g1, g2 = np.meshgrid(ticks, ticks, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
        p = np.exp(m.log_density(pts)).reshape(r, r)
        integral = np.trapezoid(np.trapezoid(p, ticks, axis=1), ticks)
        assert abs(integral - 1.0) <= 3e-3


class TestForce:
    def test_identity_force_zero(self, rng):
        m = random_model(rng, weight_scale=0.0)
        for layer in m.layers:
            layer.raw_offsets[-1] = 40.0
        f = m.force(rng.uniform(0.1, 0.9, size=(8, 2)))
        np.testing.assert_allclose(f, 0.0, atol=1e-10)

    def test_force_matches_fd_including_conditioner_path(self, rng):
        m = random_model(rng, n_layers=2, n_components=5, hidden=(10,),
                         weight_scale=0.6)
        x = rng.uniform(0.1, 0.9, size=(12, 2))
        f = m.force(x)
        h = 1e-6
        fd = np.zeros_like(f)
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[:, j] += h
            xm[:, j] -= h
            fd[:, j] = (m.log_density(xp) - m.log_density(xm)) / (2 * h)
        assert rel_err(f, fd, floor=1e-4) <= 1e-4

    def test_force_through_rootfinding_layers(self, rng):
        m = random_model(rng, direction="inverse", rootcfg=TIGHT, weight_scale=0.5)
        x = rng.uniform(0.1, 0.9, size=(8, 2))
        f = m.force(x)
        h = 1e-5
        fd = np.zeros_like(f)
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[:, j] += h
            xm[:, j] -= h
            fd[:, j] = (m.log_density(xp) - m.log_density(xm)) / (2 * h)
        assert rel_err(f, fd, floor=1e-3) <= 1e-4


class TestCircle:
    def test_periodic_density_and_force(self, rng):
        m = random_model(rng, domain="circle", n_layers=2, n_components=4,
                         weight_scale=0.5)
        ys = np.linspace(0.1, 0.9, 5)
        for j in range(2):
            lo = np.stack([np.zeros(5), ys], axis=1) if j == 0 else np.stack([ys, np.zeros(5)], axis=1)
            hi = lo.copy()
            hi[:, j] = 1.0
            np.testing.assert_allclose(m.log_density(lo), m.log_density(hi), atol=1e-9)
            np.testing.assert_allclose(m.force(lo), m.force(hi), atol=1e-9)


class TestSampling:
    def test_seed_determinism(self, rng):
        m = random_model(rng, weight_scale=0.4)
        x1, lp1 = m.sample(64, seed=9)
        x2, lp2 = m.sample(64, seed=9)
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(lp1, lp2)

    def test_log_density_consistency(self, rng):
        m = random_model(rng, weight_scale=0.5, rootcfg=TIGHT)
        x, lp = m.sample(128, seed=3)
        np.testing.assert_allclose(lp, m.log_density(x), atol=1e-8)

    def test_identity_samples_uniform(self, rng):
        from scipy import stats

        m = random_model(rng, weight_scale=0.0)
        for layer in m.layers:
            layer.raw_offsets[-1] = 40.0
        n = 100000
        x, _ = m.sample(n, seed=11)
        for j in range(2):
            stat = stats.kstest(x[:, j], "uniform").statistic
            assert stat <= 1.63 / np.sqrt(n)


class TestSerialization:
    def test_checkpoint_round_trip(self, rng, tmp_path):
        m = random_model(rng, weight_scale=0.5)
        path = tmp_path / "model.json"
        m.save(path)
        m2 = FlowModel.load(path)
        x = rng.uniform(0, 1, size=(8, 2))
        np.testing.assert_array_equal(m2.log_density(x), m.log_density(x))
        m2.save(tmp_path / "again.json")
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()

    def test_version_check(self, rng, tmp_path):
        m = random_model(rng)
        d = m.to_json()
        d["version"] = 999
        with pytest.raises(ValueError, match="version"):
            FlowModel.from_json(d)
