"""Reverse-mode gradients against central differences on a tiny conv net."""

import numpy as np

from lightxfer import autodiff as ad
from lightxfer.autodiff import Tensor

rng = np.random.default_rng(0)

with ad.default_dtype(np.float64):
    x = Tensor(rng.normal(size=(1, 3, 8, 8)))
    w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=4), requires_grad=True)

    def loss():
        y = ad.leaky_relu(ad.conv2d(x, w, b, padding=1))
        return ad.mean(ad.sigmoid(ad.avg_pool2d(y)))

    out = loss()
    out.backward()
    print("loss", out.item())

    # perturb a few weights by hand
    h = 1e-5
    for idx in [(0, 0, 0, 0), (1, 2, 1, 1), (3, 1, 2, 0)]:
        old = w.data[idx]
        w.data[idx] = old + h
        up = loss().item()
        w.data[idx] = old - h
        down = loss().item()
        w.data[idx] = old
        print(idx, "analytic", f"{w.grad[idx]: .8f}", "numeric", f"{(up - down) / (2 * h): .8f}")

# Adam on a quadratic
p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
opt = ad.Adam([p], lr=0.1)
for step in range(200):
    opt.zero_grad()
    f = ad.sum_(p * p)
    f.backward()
    opt.step()
print("Adam minimum:", np.round(p.data, 4))
