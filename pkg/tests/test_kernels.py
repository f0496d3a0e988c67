"""Backend agreement: the compiled kernel must match the NumPy reference."""

import numpy as np
import pytest

from bumpflows.kernels import available_backends, backend_name, get_backend
from bumpflows.rootfind import RootFindConfig, invert_params
from bumpflows.transforms import TransformerConfig, constrain

HAVE_COMPILED = "compiled" in available_backends()
needs_compiled = pytest.mark.skipif(not HAVE_COMPILED,
                                    reason="compiled kernel not built")

CASES = [
    ("interval", "exponential", 2.0),
    ("interval", "exponential", 1.0),
    ("interval", "monomial", 3),
    ("circle", "exponential", 2.0),
    ("circle", "monomial", 2),
]


def _params(rng, domain, ramp, shape, rows):
    cfg = TransformerConfig(domain=domain, n_components=7, ramp=ramp, shape=shape,
                            trainable_alpha=ramp == "exponential")
    raw = rng.normal(scale=1.3, size=(rows, cfg.param_count))
    return constrain(cfg, raw)


@needs_compiled
@pytest.mark.parametrize("case,domain,ramp,shape", [(i, *c) for i, c in enumerate(CASES)])
@pytest.mark.parametrize("rows", [1, 64])
def test_jets_parity(case, domain, ramp, shape, rows):
    rng = np.random.default_rng(1000 + 10 * case + rows)
    p = _params(rng, domain, ramp, shape, rows)
    x = rng.uniform(0.0, 1.0, size=64)
    jp = p.jets(x, backend="python")
    jc = p.jets(x, backend="compiled")
    for name in ("y", "dy", "d2y", "d3y", "g", "dg", "d2g"):
        a, b = getattr(jp, name), getattr(jc, name)
        scale = 1.0 + np.abs(a)
        assert np.max(np.abs(a - b) / scale) <= 1e-9, name


@needs_compiled
@pytest.mark.parametrize("case,domain,ramp,shape", [(i, *c) for i, c in enumerate(CASES)])
def test_values_and_grid_parity(case, domain, ramp, shape):
    rng = np.random.default_rng(2000 + case)
    p = _params(rng, domain, ramp, shape, rows=32)
    x = rng.uniform(0.0, 1.0, size=32)
    np.testing.assert_allclose(p.values(x, backend="python"),
                               p.values(x, backend="compiled"), atol=1e-13)
    s = np.sort(rng.uniform(0.0, 1.0, size=(32, 9)), axis=1)
    np.testing.assert_allclose(p.values_grid(s, backend="python"),
                               p.values_grid(s, backend="compiled"), atol=1e-13)
    norms_py = p.norms(backend="python")
    norms_cy = p.norms(backend="compiled")
    np.testing.assert_allclose(norms_py[0], norms_cy[0], atol=1e-13)
    np.testing.assert_allclose(norms_py[1], norms_cy[1], atol=1e-13)
    np.testing.assert_allclose(p.values_grid(s, backend="compiled", norms=norms_cy),
                               p.values_grid(s, backend="compiled"), atol=0)


@needs_compiled
def test_inversion_identical_across_backends():
    rng = np.random.default_rng(9)
    p = _params(rng, "interval", "exponential", 2.0, rows=128)
    y = rng.uniform(0.02, 0.98, size=128)
    cfg = RootFindConfig(bins=16, eps=1e-10)
    xa = invert_params(p, y, cfg, backend="python")
    xb = invert_params(p, y, cfg, backend="compiled")
    np.testing.assert_allclose(xa, xb, atol=1e-12)


@needs_compiled
def test_boundary_interpolation_exact_compiled():
    rng = np.random.default_rng(10)
    for domain in ("interval", "circle"):
        p = _params(rng, domain, "exponential", 2.0, rows=16)
        ends = p.values_grid(np.tile([0.0, 1.0], (16, 1)), backend="compiled")
        assert np.max(np.abs(ends[:, 0])) <= 1e-12
        assert np.max(np.abs(ends[:, 1] - 1.0)) <= 1e-12


def test_backend_selection_api():
    assert backend_name() in ("python", "compiled")
    assert get_backend("python").__name__.endswith("reference")
    with pytest.raises(ValueError):
        get_backend("not-a-backend")
