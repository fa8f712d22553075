"""
Reverse-mode autodiff and Adam
==============================

Building a small expression, checking its gradient against central
differences, and fitting a least-squares problem with Adam.
"""

import numpy as np

from latentsd import tensor as T
from latentsd.tensor import Adam, Tensor

# %%
# f(x, w) = sum(sigmoid(x @ w)) with a gradient for both inputs.
rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
f = (x @ w).sigmoid().sum()
f.backward()
print("f =", f.item())

# %%
# Central differences on one weight entry.
h = 1e-5


def value(wdata):
    with T.no_grad():
        return (Tensor(x.data) @ Tensor(wdata)).sigmoid().sum().item()


up, down = w.data.copy(), w.data.copy()
up[1, 0] += h
down[1, 0] -= h
print(f"analytic {w.grad[1, 0]:.10f}  numeric {(value(up) - value(down)) / (2 * h):.10f}")

# %%
# Adam on least squares: recover a known weight vector.
a = rng.standard_normal((200, 5))
truth = np.arange(1.0, 6.0).reshape(5, 1)
y = a @ truth
theta = Tensor(np.zeros((5, 1)), requires_grad=True)
opt = Adam([theta], lr=0.05)
for step in range(500):
    opt.zero_grad()
    loss = ((Tensor(a) @ theta - y) ** 2).mean()
    loss.backward()
    opt.step()
print("recovered", np.round(theta.data.ravel(), 3), "loss", f"{loss.item():.2e}")
