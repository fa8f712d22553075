import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import check, toy_vae_case
from latentsd import tensor as T
from latentsd.tensor import AdamState, Tensor, adam_step
from latentsd.vae import (VaeModel, decode, decode_array, encode, encode_mean, kl_divergence, load_model,
                          reconstruction_loss, save_model, vae_loss)


def zero_model(input_dim=5, latent_dim=3, hidden=(4,)):
    model = VaeModel(input_dim, latent_dim, hidden, rng=0)
    for p in model.parameters():
        p.data = np.zeros_like(p.data)
    return model


def test_shapes():
    m = VaeModel(12, latent_dim=4, hidden=(8, 6))
    assert m.encoder[-1].weight.shape == (6, 8)
    assert m.decoder[0].weight.shape == (4, 6)
    assert m.decoder[-1].weight.shape == (8, 12)


def test_zero_weight_encoder_outputs_bias():
    m = zero_model()
    m.encoder[-1].bias.data = np.arange(6.0)
    out = encode(m, np.random.default_rng(0).random((7, 5)))
    assert np.array_equal(out.mu.data, np.tile([0.0, 1.0, 2.0], (7, 1)))
    assert np.array_equal(out.log_var.data, np.tile([3.0, 4.0, 5.0], (7, 1)))


def test_zero_noise_gives_mean():
    m = VaeModel(5, 3, (4,), rng=1)
    x = np.random.default_rng(0).random((4, 5))
    out = encode(m, x, eps=np.zeros((4, 3)))
    assert np.array_equal(out.z.data, out.mu.data)


def test_same_seed_same_sample():
    m = VaeModel(5, 3, (4,), rng=1)
    x = np.random.default_rng(0).random((4, 5))
    a = encode(m, x, rng=np.random.default_rng(9))
    b = encode(m, x, rng=np.random.default_rng(9))
    assert np.array_equal(a.z.data, b.z.data)
    assert np.array_equal(a.eps, b.eps)


def test_shape_mismatch():
    m = VaeModel(5, 3, (4,))
    with pytest.raises(ValueError):
        encode(m, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        decode(m, np.zeros((2, 2)))


def test_zero_weight_decoder_is_sigmoid_bias():
    m = zero_model()
    m.decoder[-1].bias.data = np.linspace(-2, 2, 5)
    out = decode(m, np.random.default_rng(0).standard_normal((3, 3))).data
    expected = 1 / (1 + np.exp(-np.linspace(-2, 2, 5)))
    assert np.allclose(out, np.tile(expected, (3, 1)), atol=1e-15)


def test_batch_independence():
    m = VaeModel(6, 3, (5,), rng=2)
    z = np.random.default_rng(1).standard_normal((32, 3))
    assert np.allclose(decode_array(m, z[7:8])[0], decode_array(m, z)[7], rtol=0, atol=1e-14)


def toy_images(rng, n):
    # 8x8 bars: a random row or column lit up, plus mild noise
    img = np.zeros((n, 8, 8))
    pos = rng.integers(0, 8, n)
    vertical = rng.random(n) < 0.5
    for i in range(n):
        if vertical[i]:
            img[i, :, pos[i]] = 1.0
        else:
            img[i, pos[i], :] = 1.0
    return np.clip(img + rng.normal(0, 0.05, img.shape), 0, 1).reshape(n, 64)


def test_training_beats_untrained():
    rng = np.random.default_rng(0)
    x = toy_images(rng, 256)
    model = VaeModel(64, latent_dim=4, hidden=(32,), rng=0)

    def mse():
        return float(((decode_array(model, encode_mean(model, x)) - x) ** 2).mean())

    before = mse()
    state = AdamState(learning_rate=1e-2)
    params = model.parameters()
    noise = np.random.default_rng(1)
    for step in range(200):
        idx = rng.choice(256, 32, replace=False)
        model.zero_grad()
        vae_loss(model, x[idx], rng=noise).total.backward()
        adam_step(params, state)
    assert mse() < 0.5 * before


def test_kl_examples():
    assert kl_divergence(Tensor([[0.0]]), Tensor([[0.0]])).item() == 0.0
    assert abs(kl_divergence(Tensor([[1.0]]), Tensor([[0.0]])).item() - 0.5) < 1e-12


def test_kl_sums_latents_and_averages_batch():
    mu = np.array([[1.0, 0.0], [0.0, 2.0]])
    lv = np.zeros((2, 2))
    # rows: 0.5 and 2.0
    assert kl_divergence(Tensor(mu), Tensor(lv)).item() == pytest.approx(1.25, abs=1e-12)


def test_kl_non_negative():
    rng = np.random.default_rng(0)
    mu = rng.uniform(-3, 3, (1000, 1))
    lv = rng.uniform(-4, 4, (1000, 1))
    per = -0.5 * (1 + lv - mu**2 - np.exp(lv))
    assert per.min() >= 0
    for i in range(0, 1000, 50):
        assert kl_divergence(Tensor(mu[i:i + 50]), Tensor(lv[i:i + 50])).item() >= 0


def test_loss_zero_at_perfect_reconstruction():
    x = Tensor(np.array([[0.2, 0.7]]))
    assert reconstruction_loss(x, x).item() == 0.0
    assert (reconstruction_loss(x, x) + kl_divergence(Tensor([[0.0]]), Tensor([[0.0]]))).item() == 0.0


def test_recon_is_a_pixel_sum():
    assert reconstruction_loss(np.zeros((1, 4)), Tensor(np.ones((1, 4)))).item() == 4.0


def test_vae_loss_gradient_on_toy_model():
    rng = np.random.default_rng(0)
    for _ in range(5):
        arrays, build = toy_vae_case(rng)
        assert check(build, arrays) < 1e-4


def test_reparameterization_gradients():
    mu = Tensor(np.array([[0.3, -1.0]]), requires_grad=True)
    lv = Tensor(np.array([[0.4, -0.2]]), requires_grad=True)
    eps = np.array([[1.5, -0.7]])
    sigma = (lv * 0.5).exp()
    z = mu + sigma * eps
    z.sum().backward()
    assert np.array_equal(mu.grad, np.ones((1, 2)))
    # dz/dsigma = eps, and dsigma/dlv = sigma / 2
    assert np.allclose(lv.grad, eps * np.exp(lv.data / 2) / 2)


def test_kl_only_training_collapses_to_prior():
    rng = np.random.default_rng(0)
    x = rng.random((64, 6))
    model = VaeModel(6, latent_dim=2, hidden=(8,), rng=3)
    state = AdamState(learning_rate=1e-2)
    params = model.encoder_parameters()
    for _ in range(600):
        out = encode(model, x)
        for p in params:
            p.zero_grad()
        kl_divergence(out.mu, out.log_var).backward()
        adam_step(params, state)
    out = encode(model, x)
    assert np.abs(out.mu.data).max() < 0.05
    assert np.abs(np.exp(out.log_var.data / 2) - 1).max() < 0.05


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-8, 8))
def test_loss_finite(seed, scale):
    # much larger weights push log variance past the float64 range of exp (~709)
    model = VaeModel(4, 2, (3,), rng=seed)
    for p in model.parameters():
        p.data = p.data * scale
    x = np.random.default_rng(seed).random((3, 4))
    out = vae_loss(model, x, eps=np.zeros((3, 2)))
    assert np.isfinite(out.total.item())


def test_model_round_trip(tmp_path):
    model = VaeModel(6, 2, (5,), rng=4)
    x = np.random.default_rng(0).random((8, 6))
    state = AdamState()
    model.zero_grad()
    vae_loss(model, x, eps=np.zeros((8, 2))).total.backward()
    adam_step(model.parameters(), state)
    save_model(tmp_path / "m.ckpt", model, state, {"epochs": 1})
    back, st_back, extra = load_model(tmp_path / "m.ckpt")
    assert extra == {"epochs": 1}
    assert back.config() == model.config()
    for a, b in zip(model.parameters(), back.parameters()):
        assert np.array_equal(a.data, b.data)
    assert st_back.step == 1
    assert all(np.array_equal(a, b) for a, b in zip(state.m, st_back.m))
    save_model(tmp_path / "n.ckpt", back, st_back, extra)
    assert (tmp_path / "n.ckpt").read_bytes() == (tmp_path / "m.ckpt").read_bytes()


def test_no_grad_encode_mean_matches():
    model = VaeModel(6, 2, (5,), rng=4)
    x = np.random.default_rng(0).random((10, 6))
    assert np.array_equal(encode_mean(model, x, batch_size=3), encode(model, x).mu.data)
    with T.no_grad():
        assert not encode(model, x).mu.requires_grad
