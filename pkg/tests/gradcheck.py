"""Central finite-difference checks shared by the unit and acceptance suites."""

import numpy as np

from latentsd import tensor as T
from latentsd.sdtrain import pearson_correlation, sd_loss
from latentsd.vae import VaeModel, encode, vae_loss

H = 1e-5


def relative_error(analytic, numeric) -> float:
    """Max abs deviation over all inputs, scaled by the largest gradient magnitude.

    Scaling per input instead would blow up roundoff on inputs whose true
    gradient is exactly zero (e.g. a shift the loss is invariant to).
    """
    analytic = [np.asarray(a) for a in analytic]
    numeric = [np.asarray(n) for n in numeric]
    scale = max(max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0)) for a, n in zip(analytic, numeric))
    dev = max(np.abs(a - n).max(initial=0.0) for a, n in zip(analytic, numeric))
    return float(dev / max(scale, 1e-8))


def numeric_grads(f, arrays, h=H):
    """d f / d arrays by central differences; f maps a list of arrays to a float."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for i in np.ndindex(a.shape):
            keep = a[i]
            a[i] = keep + h
            up = f(arrays)
            a[i] = keep - h
            down = f(arrays)
            a[i] = keep
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def check(build, arrays, h=H) -> float:
    """Max relative error over inputs of the scalar `build(list of Tensor)`."""
    leaves = [T.Tensor(a.copy(), requires_grad=True) for a in arrays]
    build(leaves).backward()
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]

    def f(arrs):
        with T.no_grad():
            return build([T.Tensor(a) for a in arrs]).item()

    numeric = numeric_grads(f, [a.copy() for a in arrays], h)
    return relative_error(analytic, numeric)


def _weighted(out, w):
    # random projection to a scalar so every output element matters
    return (out * w).sum()


def _u(rng, *shape, lo=-2.0, hi=2.0):
    return rng.uniform(lo, hi, size=shape)


def op_cases(rng):
    """One random configuration per op: name -> (arrays, build)."""
    m, n, p = rng.integers(1, 5, size=3)
    w_mn = _u(rng, m, n)
    cases = {
        "add": ([_u(rng, m, n), _u(rng, n)], lambda t: _weighted(t[0] + t[1], w_mn)),
        "sub": ([_u(rng, m, n), _u(rng, m, 1)], lambda t: _weighted(t[0] - t[1], w_mn)),
        "mul": ([_u(rng, m, n), _u(rng, m, n)], lambda t: _weighted(t[0] * t[1], w_mn)),
        "div": ([_u(rng, m, n), _u(rng, m, n, lo=0.5, hi=2.0) * rng.choice([-1, 1], size=(m, n))],
                lambda t: _weighted(t[0] / t[1], w_mn)),
        "neg": ([_u(rng, m, n)], lambda t: _weighted(-t[0], w_mn)),
        "power": ([_u(rng, m, n, lo=0.2, hi=2.0)], lambda t: _weighted(t[0] ** 2.5, w_mn)),
        "exp": ([_u(rng, m, n)], lambda t: _weighted(t[0].exp(), w_mn)),
        "log": ([_u(rng, m, n, lo=0.1, hi=2.0)], lambda t: _weighted(t[0].log(), w_mn)),
        "sqrt": ([_u(rng, m, n, lo=0.1, hi=2.0)], lambda t: _weighted(t[0].sqrt(), w_mn)),
        "relu": ([_nonzero(rng, m, n)], lambda t: _weighted(t[0].relu(), w_mn)),
        "sigmoid": ([_u(rng, m, n)], lambda t: _weighted(t[0].sigmoid(), w_mn)),
        "softplus": ([_u(rng, m, n)], lambda t: _weighted(T.softplus(t[0]), w_mn)),
        "matmul": ([_u(rng, m, n), _u(rng, n, p)], _matmul_build(_u(rng, m, p))),
        "transpose": ([_u(rng, m, n)], lambda t: _weighted(t[0].T, w_mn.T)),
        "sum": ([_u(rng, m, n)], _sum_build(_u(rng, n))),
        "mean": ([_u(rng, m, n)], _mean_build(_u(rng, m, 1))),
        "broadcast": ([_u(rng, 1, n)], lambda t: _weighted(T.broadcast_to(t[0], (m, n)), w_mn)),
        "reshape": ([_u(rng, m, n)], lambda t: _weighted(t[0].reshape(n * m), w_mn.reshape(-1))),
        "index": ([_u(rng, m, n)], _take_build(rng, m, n)),
        "concat": ([_u(rng, m, n), _u(rng, m, p)], _concat_build(_u(rng, m, n + p))),
        "pearson": ([_u(rng, 8)], _pearson_build(rng)),
    }
    return cases


def _nonzero(rng, *shape):
    # keep relu inputs away from its kink
    x = _u(rng, *shape)
    return np.where(np.abs(x) < 1e-3, 0.5, x)


def _matmul_build(w):
    return lambda t: _weighted(t[0] @ t[1], w)


def _sum_build(w):
    return lambda t: _weighted(t[0].sum(axis=0), w)


def _mean_build(w):
    return lambda t: _weighted(t[0].mean(axis=1, keepdims=True), w)


def _take_build(rng, m, n):
    rows = rng.integers(0, m, size=5)  # repeats exercise gradient accumulation
    cols = rng.integers(0, n, size=5)
    w = _u(rng, 5)
    return lambda t: _weighted(t[0][rows, cols], w)


def _concat_build(w):
    return lambda t: _weighted(T.concat([t[0], t[1]], axis=1), w)


def _pearson_build(rng):
    target = np.r_[0, 1, rng.integers(0, 2, size=6)]
    return lambda t: pearson_correlation(t[0], target)


def toy_vae_case(rng):
    """Parameters of a small VAE and a loss over them with fixed noise."""
    model = VaeModel(input_dim=3, latent_dim=2, hidden=(2,), rng=int(rng.integers(2**31)))
    x = rng.uniform(0, 1, size=(4, 3))
    eps = rng.standard_normal((4, 2))
    params = model.parameters()

    def build(leaves):
        # swap the leaves in for the model's tensors for the duration of the forward pass
        _bind(model, leaves)
        try:
            return vae_loss(model, x, eps=eps).total
        finally:
            _bind(model, params)

    return [p.data.copy() for p in params], build


def toy_sd_case(rng):
    """Encoder parameters of a 2-latent model under the SD loss on both latents."""
    model = VaeModel(input_dim=3, latent_dim=2, hidden=(3,), rng=int(rng.integers(2**31)))
    x = rng.uniform(-1, 1, size=(10, 3))
    t = np.r_[0, 1, rng.integers(0, 2, size=8)]
    params = model.encoder_parameters()

    def build(leaves):
        _bind(model, leaves, encoder_only=True)
        try:
            return sd_loss(encode(model, x), {0, 1}, t)
        finally:
            _bind(model, params, encoder_only=True)

    return [p.data.copy() for p in params], build


def _bind(model, tensors, encoder_only=False):
    layers = model.encoder if encoder_only else model.encoder + model.decoder
    it = iter(tensors)
    for layer in layers:
        layer.weight = next(it)
        layer.bias = next(it)
