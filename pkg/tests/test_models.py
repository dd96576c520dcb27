import numpy as np
import pytest

from milc import encoder as enc
from milc import seqmodel
from milc.diffcore import Tensor, check_gradients, ops
from milc.model import ModelBundle


def tensors(d):
    return {k: Tensor(v, name=k) for k, v in d.items()}


@pytest.fixture
def sim_params(rng):
    cfg = enc.EncoderConfig.for_variant("simulation")
    return cfg, tensors(enc.init_encoder(cfg, 10, 20, rng, np.float64))


def test_simulation_conv_lengths(sim_params):
    cfg, p = sim_params
    assert cfg.conv_lengths(20) == [17, 14, 12, 11]
    assert cfg.flat_dim(20) == 704
    z = enc.encode(p, cfg, Tensor(np.random.default_rng(0).standard_normal((3, 10, 20))))
    assert z.shape == (3, 256)


def test_real_variant_dims(rng):
    cfg = enc.EncoderConfig.for_variant("real")
    assert cfg.conv_lengths(20) == [17, 14, 12]
    p = tensors(enc.init_encoder(cfg, 53, 20, rng, np.float64))
    assert p["encoder.fc.weight"].shape == (256, 200 * 12)
    assert enc.encode(p, cfg, Tensor(np.zeros((2, 53, 20)))).shape == (2, 256)


def test_zero_window_zero_biases_gives_zero(sim_params):
    cfg, p = sim_params
    for k, t in p.items():
        if k.endswith("bias"):
            t.data[:] = 0
    z = enc.encode(p, cfg, Tensor(np.zeros((1, 10, 20))))
    assert not z.data.any()


def test_encoder_rejects_bad_shapes(sim_params):
    cfg, p = sim_params
    with pytest.raises(ValueError, match="channels|10"):
        enc.encode(p, cfg, Tensor(np.zeros((1, 9, 20))))
    with pytest.raises(ValueError, match="too short"):
        enc.encode(p, cfg, Tensor(np.zeros((1, 10, 9))))


def test_encoder_batch_independence(sim_params, rng):
    cfg, p = sim_params
    x = rng.standard_normal((6, 10, 20))
    batched = enc.encode(p, cfg, Tensor(x)).data
    single = np.concatenate([enc.encode(p, cfg, Tensor(x[k : k + 1])).data for k in range(6)])
    np.testing.assert_allclose(batched, single, atol=1e-6)


def test_decoder_restores_window_shape(rng):
    cfg = enc.EncoderConfig.for_variant("simulation")
    p = tensors({**enc.init_encoder(cfg, 10, 20, rng, np.float64), **enc.init_decoder(cfg, 10, 20, rng, np.float64)})
    out = enc.decode(p, cfg, enc.encode(p, cfg, Tensor(rng.standard_normal((2, 10, 20)))), 20)
    assert out.shape == (2, 10, 20)
    assert [p[f"decoder.deconv{k}.weight"].shape[1] for k in range(4)] == [128, 64, 32, 10]


@pytest.fixture
def seq_params(rng):
    return tensors(seqmodel.init_seqmodel(rng, dtype=np.float64))


def test_single_window_attention(seq_params, rng):
    z = Tensor(rng.standard_normal((2, 1, 256)))
    c, alpha, h = seqmodel.aggregate(seq_params, z)
    np.testing.assert_array_equal(alpha.data, 1.0)
    np.testing.assert_allclose(c.data, h.data[:, 0], atol=1e-15)
    assert c.shape == (2, 200)


def test_constant_scores_give_uniform_attention(seq_params, rng):
    seq_params["attn.score.weight"].data[:] = 0
    z = Tensor(np.repeat(rng.standard_normal((1, 1, 256)), 6, axis=1))
    _, alpha, _ = seqmodel.aggregate(seq_params, z)
    np.testing.assert_allclose(alpha.data, 1 / 6)


def test_global_vector_is_weighted_sum(seq_params, rng):
    z = Tensor(rng.standard_normal((3, 5, 256)))
    c, alpha, h = seqmodel.aggregate(seq_params, z)
    W, b, w = (seq_params[k].data for k in ("attn.proj.weight", "attn.proj.bias", "attn.score.weight"))
    for n in range(3):
        e = np.array([w[0] @ np.tanh(W @ h.data[n, t] + b) for t in range(5)])
        a = np.exp(e - e.max()) / np.exp(e - e.max()).sum()
        np.testing.assert_allclose(alpha.data[n], a, atol=1e-12)
        np.testing.assert_allclose(c.data[n], sum(a[t] * h.data[n, t] for t in range(5)), atol=1e-6)


def test_attention_distribution_and_convex_hull(seq_params):
    r = np.random.default_rng(11)
    for _ in range(20):
        T = int(r.integers(1, 9))
        z = Tensor(3 * r.standard_normal((2, T, 256)))
        c, alpha, h = seqmodel.aggregate(seq_params, z)
        assert np.all(alpha.data >= 0)
        np.testing.assert_allclose(alpha.data.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(c.data >= h.data.min(axis=1) - 1e-12)
        assert np.all(c.data <= h.data.max(axis=1) + 1e-12)


def test_order_sensitivity_witness(seq_params, rng):
    z = rng.standard_normal((1, 4, 256))
    c1, _, _ = seqmodel.aggregate(seq_params, Tensor(z))
    c2, _, _ = seqmodel.aggregate(seq_params, Tensor(z[:, ::-1].copy()))
    assert not np.allclose(c1.data, c2.data)


def test_bilstm_matches_manual_recurrence(seq_params, rng):
    z = rng.standard_normal((1, 3, 256))
    h = seqmodel.bilstm(seq_params, Tensor(z)).data[0]

    def sig(v):
        return 1 / (1 + np.exp(-v))

    def run(d, order):
        wih, whh, b = (seq_params[f"lstm.{d}.{n}"].data for n in ("w_ih", "w_hh", "bias"))
        hh, cc, out = np.zeros(100), np.zeros(100), {}
        for t in order:
            pre = wih @ z[0, t] + whh @ hh + b
            i, f, g, o = sig(pre[:100]), sig(pre[100:200]), np.tanh(pre[200:300]), sig(pre[300:])
            cc = f * cc + i * g
            hh = o * np.tanh(cc)
            out[t] = hh
        return out

    fwd, bwd = run("fwd", [0, 1, 2]), run("bwd", [2, 1, 0])
    for t in range(3):
        np.testing.assert_allclose(h[t], np.concatenate([fwd[t], bwd[t]]), atol=1e-12)


def test_forget_gate_bias_initialized_to_one(seq_params):
    np.testing.assert_array_equal(seq_params["lstm.fwd.bias"].data[100:200], 1.0)


def test_aggregate_rejects_empty(seq_params):
    with pytest.raises(ValueError):
        seqmodel.aggregate(seq_params, Tensor(np.zeros((1, 0, 256))))


def test_phi_is_affine(rng):
    p = tensors(seqmodel.init_critic(rng, dtype=np.float64))
    W, b = p["critic.phi.weight"].data, p["critic.phi.bias"].data
    z1, z2 = rng.standard_normal(256), rng.standard_normal(256)
    f = lambda z: seqmodel.phi(p, Tensor(z[None])).data[0]  # noqa: E731
    a, bb = 0.3, -1.2
    np.testing.assert_allclose(f(a * z1 + bb * z2), a * f(z1) + bb * f(z2) + (1 - a - bb) * b, atol=1e-12)
    np.testing.assert_allclose(f(z1), W @ z1 + b, atol=1e-12)
    p["critic.phi.bias"].data[:] = 0
    assert not f(np.zeros(256)).any()


def test_full_model_gradcheck():
    m = ModelBundle.create(seed=2, dtype=np.float64)
    params = m.set_trainable()
    x = np.random.default_rng(3).standard_normal((2, 10, 60))
    w = m.windows(x)
    y = np.array([0, 1])
    errs = check_gradients(lambda: ops.cross_entropy(m.logits(w), y), params, max_coords=6)
    assert max(errs.values()) < 1e-4, errs


def test_nlc_conv_matches_ncl(rng):
    x = rng.standard_normal((2, 3, 9))
    w = rng.standard_normal((4, 3, 3))
    b = rng.standard_normal(4)
    a = ops.conv1d(Tensor(x), Tensor(w), Tensor(b)).data
    c = ops.conv1d(Tensor(x.transpose(0, 2, 1)), Tensor(w), Tensor(b), layout="nlc").data
    np.testing.assert_allclose(a, c.transpose(0, 2, 1), atol=1e-12)
