"""Estimating inference energy from spike sparsity.

On neuromorphic hardware a binary spike triggers an accumulate (AC,
0.9 pJ) instead of a multiply-accumulate (MAC, 4.6 pJ), and silent
synapses cost nothing. Energy therefore scales with T x firing_rate x
AC-count for the spiking layers, plus a conventional MAC term for the
real-valued layers (the stem conv sees real event counts, the detection
head runs once on decoded rates).
"""

import numpy as np

from spikedet.autograd import Tensor
from spikedet.metrics import E_AC_PJ, E_MAC_PJ, OpCount, count_ops, energy, firing_rate
from spikedet.snn import Conv2d, ConvBNPLIF

print(f"constants: AC = {E_AC_PJ} pJ, MAC = {E_MAC_PJ} pJ")

# hand-countable fixture: a 3x3 conv producing a 4x4 map = 16 * 9 = 144 ACs
rng = np.random.default_rng(0)
conv = Conv2d(rng, 1, 1, 3, stride=1, padding=1, spiking_input=True)
conv.forward(Tensor((rng.random((1, 1, 4, 4)) > 0.5).astype(np.float64)))
counts = count_ops(conv, T=5)
print(f"\nsingle 3x3 conv on a 4x4 map: {counts.n_ac:.0f} ACs (16 cells x 9 taps)")

# closed-form check: T=5, firing rate 0.1, one million ACs -> 0.45 uJ
report = energy(5, 0.1, OpCount(n_ac=1e6, n_mac=0.0))
print(f"T=5, fr=0.1, 1e6 ACs -> {report.e_snn_joules * 1e6:.2f} uJ")

# a real spiking block: measure its firing rate, then price it
block = ConvBNPLIF(rng, 4, 8)
for _ in range(5):
    block.step(Tensor((rng.random((1, 4, 16, 16)) > 0.8).astype(np.float64)))
fr = firing_rate(block).overall_rate
counts = count_ops(block, T=5)
report = energy(5, fr, counts)
print(f"\nconv-bn-neuron block: firing rate {fr:.3f}, "
      f"{counts.n_ac:.0f} ACs + {counts.n_mac:.0f} MACs per timestep")
print(f"estimated energy: {report.total_joules * 1e9:.2f} nJ "
      f"(AC {report.e_snn_joules * 1e9:.2f} + MAC {report.e_mac_joules * 1e9:.2f})")
print("\nsparser spikes mean proportionally less energy - the AC term is "
      "linear in the firing rate.")
