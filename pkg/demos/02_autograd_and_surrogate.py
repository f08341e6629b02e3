"""Reverse-mode autograd and the firing-function surrogate gradient.

The library ships its own small tape-based autodiff over float64 numpy
arrays. The one unusual op is `spike`: its forward pass is a hard
threshold (0 or 1), which has a zero derivative almost everywhere, so its
backward pass substitutes a smooth arctan-shaped surrogate. That is what
makes gradient descent work on binary spiking networks.
"""

import numpy as np

import spikedet.autograd as ag
from spikedet.autograd import SurrogateSpec, Tensor, atan_surrogate_grad

# --- ordinary ops: gradients match finite differences ---------------------
x = Tensor(np.array([[0.3, -1.2], [2.0, 0.7]]), requires_grad=True)
w = Tensor(np.array([[0.5, -0.4], [1.1, 0.2]]), requires_grad=True)
loss = ag.tsum(ag.power(ag.elementwise_mul(ag.sigmoid(x), w), 2.0))
loss.backward()
print("autodiff dL/dx:\n", x.grad)

h = 1e-6
fd = np.zeros_like(x.data)
for i in np.ndindex(x.data.shape):
    for sign in (+1, -1):
        xp = x.data.copy()
        xp[i] += sign * h
        val = float(ag.tsum(ag.power(
            ag.elementwise_mul(ag.sigmoid(Tensor(xp)), Tensor(w.data)), 2.0)).data)
        fd[i] += sign * val / (2 * h)
print("finite differences agree:", np.allclose(x.grad, fd, rtol=1e-5))

# --- the firing op ----------------------------------------------------------
v = Tensor(np.linspace(-2, 2, 9), requires_grad=True)
out = ag.spike(v, SurrogateSpec(alpha=2.0))
print("\nmembrane:", np.round(v.data, 2))
print("spikes:  ", out.data, " (hard 0/1 forward)")

ag.tsum(out).backward()
print("surrogate gradient (peaks at the threshold):")
for vi, gi in zip(v.data, v.grad):
    bar = "#" * int(40 * gi)
    print(f"  v={vi:+.1f}  g={gi:.3f} {bar}")
assert np.allclose(v.grad, atan_surrogate_grad(v.data, 2.0))
