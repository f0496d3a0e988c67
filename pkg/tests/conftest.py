"""Shared helpers: random factories and finite-difference oracles."""

import numpy as np
import pytest

from bumpflows.flow import build_model
from bumpflows.transforms import MixtureTransform, TransformerConfig


def random_transform(rng, domain="interval", n_components=6, ramp="exponential",
                     shape=2.0, scale=1.2) -> MixtureTransform:
    cfg = TransformerConfig(domain=domain, n_components=n_components, ramp=ramp,
                            shape=shape, trainable_alpha=ramp == "exponential")
    raw = rng.normal(scale=scale, size=cfg.param_count)
    return MixtureTransform(cfg, raw)


def random_model(rng, domain="interval", n_layers=2, n_components=4, hidden=(8,),
                 weight_scale=0.4, direction="forward", rootcfg=None,
                 trainable_alpha=True):
    """Perturbed small model; nonzero weight_scale also lowers the identity
    floor so densities genuinely deform."""
    model = build_model(2, (domain,) * 2, n_layers, rng, n_components=n_components,
                        hidden=hidden, direction=direction, rootcfg=rootcfg,
                        trainable_alpha=trainable_alpha)
    arrays = model.param_arrays()
    for a in arrays:
        a += rng.normal(scale=weight_scale, size=a.shape)
    model.set_param_arrays(arrays)
    if weight_scale > 0:
        for layer in model.layers:
            p = layer.transformer.param_count
            layer.raw_offsets[p - 1 :: p] = 0.0   # c starts near 1/2
    return model


def central_diff(f, x, h=1e-6, order=1):
    """Central finite differences of a scalar-to-array map at scalar x."""
    if order == 1:
        return (f(x + h) - f(x - h)) / (2 * h)
    if order == 2:
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / h ** 2
    if order == 3:
        return (f(x + 2 * h) - 2 * f(x + h) + 2 * f(x - h) - f(x - 2 * h)) / (2 * h ** 3)
    raise ValueError(order)


def richardson_diff(f, x, h=1e-3, order=3):
    """Richardson-extrapolated central difference (one halving)."""
    a = central_diff(f, x, h, order)
    b = central_diff(f, x, h / 2.0, order)
    return (4.0 * b - a) / 3.0


def grad_fd(f, theta, h=1e-6):
    """Gradient of scalar f at parameter vector theta by central differences."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.zeros_like(theta)
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        g[j] = (f(tp) - f(tm)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.max(np.abs(a - b) / (np.abs(b) + floor))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
