"""Parametric leaky integrate-and-fire (PLIF) neuron dynamics.

The neuron keeps a membrane potential V. Each step it charges toward the
input with a learnable time constant tau = 1/sigmoid(w), fires a spike
when V crosses the threshold, and hard-resets after firing. Because tau
is expressed through a sigmoid it stays positive and can be trained by
gradient descent like any other parameter.
"""

import numpy as np

from spikedet.autograd import Tensor
from spikedet.snn import PLIFLayer

layer = PLIFLayer()  # w=0 -> sigmoid(0)=0.5 -> tau=2, threshold 1
print(f"tau = {layer.tau():.1f}, threshold = {layer.v_threshold}")

for drive in (2.0, 1.2, 0.8):
    layer.reset_state()
    print(f"\nconstant input X = {drive}:")
    for step in range(6):
        out = layer.step(Tensor(np.array([drive])))
        v = float(layer.v.data[0])
        fired = "spike!" if out.data[0] else ""
        print(f"  step {step}: V -> {v:.3f}  {fired}")

print("""
X=2.0 fires every step; X=1.2 needs three steps to charge past the
threshold; X=0.8 never fires because the leak makes V converge to X,
which stays below the threshold.""")
