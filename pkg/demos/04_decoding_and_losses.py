"""Turning spike trains into class scores, and the losses on top of them.

A classifier emits a binary spike train per class over T timesteps. Three
decoders turn that into a score: the spike count, the firing rate
(count / T), and the final membrane potential of a non-firing readout
neuron. Count and rate always agree on the argmax, but their scales
differ, which matters once a loss is attached: MSE against a one-hot
target works best on rates, which live in [0, 1] like the target does.
"""

import numpy as np

from spikedet.autograd import Tensor
from spikedet.decode import decode_count, decode_membrane, decode_rate
from spikedet.losses import ce_loss, focal_loss, FocalParams, mse_loss, softmax_np

rng = np.random.default_rng(3)
T, classes = 5, 3
train = (rng.random((T, 1, classes)) > 0.55).astype(np.float64)
print("spike train [T, batch, classes]:\n", train[:, 0, :])

count = decode_count(train).data
rate = decode_rate(train).data
print(f"\ncount:    {count[0]}  (range [0, T])")
print(f"rate:     {rate[0]}  (range [0, 1], = count / T)")
print(f"membrane: {np.round(decode_membrane(train, tau=2.0).data[0], 3)}")
assert (rate.argmax() == count.argmax())

# --- losses on decoded rates -----------------------------------------------
decoded = np.array([[0.2, 0.8]])
target = np.array([[0.0, 1.0]])
print(f"\nMSE([0.2, 0.8], [0, 1]) = {float(mse_loss(Tensor(decoded.copy()), target).data):.3f}")
print(f"softmax([0.2, 0.8]) = {np.round(softmax_np(decoded[0]), 4)}")
print(f"CE loss = {float(ce_loss(Tensor(decoded.copy()), target).data):.4f}")

# focal loss: down-weights easy examples, used by the detection head
p = Tensor(np.array([0.9]))
fl = focal_loss(p, np.array([1.0]), FocalParams(alpha=0.25, gamma=2.0))
print(f"focal(p=0.9, y=1, alpha=0.25, gamma=2) = {float(fl.data):.4e}")
