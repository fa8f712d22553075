"""Dense variational autoencoder on flattened images."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import AdamState, Tensor


@dataclass
class Dense:
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "Dense":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(Tensor(w, requires_grad=True), Tensor(np.zeros(fan_out), requires_grad=True))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class VaeModel:
    """Encoder input -> hidden... -> 2*latent_dim (mean, log variance); decoder mirrors it.

    Hidden layers use ReLU, the decoder output a sigmoid so reconstructions
    live in [0, 1].
    """

    def __init__(self, input_dim: int, latent_dim: int = 16, hidden: Sequence[int] = (256, 128),
                 rng: np.random.Generator | int | None = 0):
        rng = np.random.default_rng(rng)
        self.input_dim = int(input_dim)
        self.latent_dim = int(latent_dim)
        self.hidden = tuple(int(h) for h in hidden)
        enc_dims = [self.input_dim, *self.hidden, 2 * self.latent_dim]
        dec_dims = [self.latent_dim, *reversed(self.hidden), self.input_dim]
        self.encoder = [Dense.init(a, b, rng) for a, b in zip(enc_dims[:-1], enc_dims[1:])]
        self.decoder = [Dense.init(a, b, rng) for a, b in zip(dec_dims[:-1], dec_dims[1:])]

    def encoder_parameters(self) -> list[Tensor]:
        return [t for layer in self.encoder for t in (layer.weight, layer.bias)]

    def decoder_parameters(self) -> list[Tensor]:
        return [t for layer in self.decoder for t in (layer.weight, layer.bias)]

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.decoder_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for part, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for i, layer in enumerate(layers):
                out[f"{part}.{i}.weight"] = layer.weight
                out[f"{part}.{i}.bias"] = layer.bias
        return out

    def config(self) -> dict:
        return {"input_dim": self.input_dim, "latent_dim": self.latent_dim, "hidden": list(self.hidden)}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


@dataclass
class LatentBatch:
    mu: Tensor
    log_var: Tensor
    z: Tensor
    # the standard-normal draw used for z, kept so a pass can be replayed
    eps: np.ndarray


def _forward(layers: list[Dense], h: Tensor) -> Tensor:
    for layer in layers[:-1]:
        h = layer(h).relu()
    return layers[-1](h)


def encode(model: VaeModel, x, rng: np.random.Generator | None = None,
           eps: np.ndarray | None = None) -> LatentBatch:
    """Posterior parameters and a reparameterized sample z = mu + exp(log_var/2) * eps.

    `eps` fixes the noise; otherwise it is drawn from `rng`. With neither,
    eps = 0 and z equals mu.
    """
    x = T.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"encode: expected (batch, {model.input_dim}) input, got {x.shape}")
    out = _forward(model.encoder, x)
    L = model.latent_dim
    mu, log_var = out[:, :L], out[:, L:]
    if eps is None:
        eps = rng.standard_normal(mu.shape) if rng is not None else np.zeros(mu.shape)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu.shape:
        raise ValueError(f"encode: noise shape {eps.shape} != latent shape {mu.shape}")
    z = mu + (log_var * 0.5).exp() * eps
    return LatentBatch(mu, log_var, z, eps)


def decode(model: VaeModel, z) -> Tensor:
    z = T.as_tensor(z)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise ValueError(f"decode: expected (batch, {model.latent_dim}) latents, got {z.shape}")
    return _forward(model.decoder, z).sigmoid()


def kl_divergence(mu: Tensor, log_var: Tensor) -> Tensor:
    """KL(N(mu, var) || N(0, 1)) summed over latents, averaged over the batch."""
    mu, log_var = T.as_tensor(mu), T.as_tensor(log_var)
    if mu.shape != log_var.shape:
        raise ValueError("kl_divergence: mu and log_var shapes differ")
    per_elem = (1.0 + log_var - mu * mu - log_var.exp()) * -0.5
    per_row = per_elem.sum(axis=-1) if per_elem.ndim > 1 else per_elem.sum()
    return per_row.mean() if per_row.ndim else per_row


def reconstruction_loss(x, x_hat: Tensor) -> Tensor:
    """Squared error summed over pixels, averaged over the batch."""
    diff = T.as_tensor(x_hat) - T.as_tensor(x)
    return (diff * diff).sum(axis=1).mean()


@dataclass
class VaeLoss:
    total: Tensor
    recon: Tensor
    kl: Tensor
    latent: LatentBatch
    x_hat: Tensor


def vae_loss(model: VaeModel, x, rng: np.random.Generator | None = None, eps: np.ndarray | None = None,
             kl_weight: float = 1.0) -> VaeLoss:
    latent = encode(model, x, rng=rng, eps=eps)
    x_hat = decode(model, latent.z)
    recon = reconstruction_loss(x, x_hat)
    kl = kl_divergence(latent.mu, latent.log_var)
    total = recon + kl if kl_weight == 1.0 else recon + kl * kl_weight
    return VaeLoss(total, recon, kl, latent, x_hat)


def encode_mean(model: VaeModel, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Posterior means for a whole dataset, without recording gradients."""
    x = np.asarray(x, dtype=np.float64)
    out = []
    with T.no_grad():
        for i in range(0, x.shape[0], batch_size):
            out.append(encode(model, x[i:i + batch_size]).mu.data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.latent_dim))


def decode_array(model: VaeModel, z: np.ndarray) -> np.ndarray:
    with T.no_grad():
        return decode(model, np.atleast_2d(np.asarray(z, dtype=np.float64))).data


def save_model(path, model: VaeModel, optimizer: AdamState | None = None, meta: dict | None = None) -> None:
    arrays = {k: t.data for k, t in model.named_parameters().items()}
    header = {"kind": "vae", "model": model.config(), "extra": meta or {}}
    if optimizer is not None:
        header["adam"] = {"learning_rate": optimizer.learning_rate, "beta1": optimizer.beta1,
                          "beta2": optimizer.beta2, "epsilon": optimizer.epsilon, "step": optimizer.step}
        for i, (m, v) in enumerate(zip(optimizer.m, optimizer.v)):
            arrays[f"adam.m.{i}"] = m
            arrays[f"adam.v.{i}"] = v
    T.save_checkpoint(path, arrays, header)


def load_model(path) -> tuple[VaeModel, AdamState | None, dict]:
    arrays, header = T.load_checkpoint(path)
    if header.get("kind") != "vae":
        raise ValueError(f"{path}: not a VAE checkpoint")
    cfg = header["model"]
    model = VaeModel(cfg["input_dim"], cfg["latent_dim"], cfg["hidden"])
    for name, t in model.named_parameters().items():
        if name not in arrays or arrays[name].shape != t.shape:
            raise ValueError(f"{path}: parameter {name} missing or mis-shaped")
        t.data = arrays[name].copy()
    state = None
    if "adam" in header:
        a = header["adam"]
        n = len(model.parameters())
        state = AdamState(a["learning_rate"], a["beta1"], a["beta2"], a["epsilon"],
                          [arrays[f"adam.m.{i}"].copy() for i in range(n) if f"adam.m.{i}" in arrays],
                          [arrays[f"adam.v.{i}"].copy() for i in range(n) if f"adam.v.{i}" in arrays],
                          a["step"])
    return model, state, header.get("extra", {})
