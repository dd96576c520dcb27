import numpy as np
import pytest

from milc.diffcore import Tensor
from milc.diffcore.gradcheck import relative_error
from milc.model import ModelBundle
from milc.saliency import saliency_map, selected_logit


def fitted(seed=0, dtype=np.float64):
    m = ModelBundle.create(seed=seed, dtype=dtype)
    m.meta["kind"] = "downstream"
    return m


def test_shape_and_range():
    x = np.random.default_rng(0).standard_normal((10, 200))
    s = saliency_map(fitted(), x, "s0")
    assert s.map.shape == (10, 200)
    assert s.map.min() >= 0 and s.map.max() == pytest.approx(1.0)
    assert np.all(np.isfinite(s.map))
    assert s.attention.shape == (19,)
    assert s.sidecar()["sample_id"] == "s0"


def test_discarded_tail_is_exactly_zero():
    x = np.random.default_rng(1).standard_normal((10, 207))
    s = saliency_map(fitted(), x)
    assert not s.raw[:, 200:].any()
    assert s.raw[:, :200].any()


def test_zero_head_gives_zero_map():
    m = fitted()
    for name in m.names(("head.",)):
        m.params[name].data[:] = 0
    s = saliency_map(m, np.random.default_rng(2).standard_normal((10, 60)))
    assert not s.raw.any() and not s.map.any()


def test_finite_difference_spot_check():
    m = fitted(3)
    r = np.random.default_rng(4)
    x = r.standard_normal((10, 80))
    s = saliency_map(m, x)
    h = 1e-5
    for _ in range(5):
        ch, t = int(r.integers(10)), int(r.integers(80))
        xp, xm = x.copy(), x.copy()
        xp[ch, t] += h
        xm[ch, t] -= h
        fp = float(selected_logit(m, Tensor(xp), s.predicted_class)[0].data)
        fm = float(selected_logit(m, Tensor(xm), s.predicted_class)[0].data)
        assert relative_error(s.raw[ch, t], abs((fp - fm) / (2 * h))) < 1e-3


def test_unfitted_model_rejected():
    with pytest.raises(ValueError, match="fitted"):
        saliency_map(ModelBundle.create(seed=0), np.zeros((10, 40)))


def test_bad_input_rejected():
    with pytest.raises(ValueError, match="shorter"):
        saliency_map(fitted(), np.zeros((10, 10)))
    with pytest.raises(ValueError, match="channels|shape"):
        saliency_map(fitted(), np.zeros((9, 40)))


def test_parameters_left_untouched():
    m = fitted(5)
    before = m.checksum()
    saliency_map(m, np.random.default_rng(6).standard_normal((10, 40)))
    assert m.checksum() == before
    assert not any(t.requires_grad for t in m.tensors())
