"""Firing-rate accounting and the AC/MAC energy model.

Energy constants follow the 45 nm, 32-bit convention: one accumulate costs
0.9 pJ, one multiply-accumulate 4.6 pJ. Spike-driven synapses count as
accumulates scaled by the firing rate; batch-norm affine transforms,
spike-element-wise adds, and the real-valued detection head count as MACs.
The head runs once per sample, so its MACs are amortized over the T steps
before entering the per-timestep count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .snn import (
    Module,
    PLIFLayer,
    Conv2d,
    TransposedConv2d,
    BatchNorm2d,
    SEWResBlock,
)

__all__ = [
    "E_AC_PJ",
    "E_MAC_PJ",
    "FiringReport",
    "OpCount",
    "EnergyReport",
    "firing_rate",
    "count_ops",
    "energy",
]

E_AC_PJ = 0.9
E_MAC_PJ = 4.6


@dataclass
class FiringReport:
    per_layer: dict[str, dict]  # name -> {spikes, slots, rate}
    total_spikes: float
    total_slots: int

    @property
    def overall_rate(self) -> float:
        return self.total_spikes / self.total_slots if self.total_slots else 0.0


@dataclass
class OpCount:
    n_ac: float = 0.0
    n_mac: float = 0.0
    per_layer: dict[str, dict] = field(default_factory=dict)


@dataclass
class EnergyReport:
    e_snn_joules: float
    e_mac_joules: float
    T: int
    firing_rate: float

    @property
    def total_joules(self) -> float:
        return self.e_snn_joules + self.e_mac_joules


def firing_rate(network: Module) -> FiringReport:
    """Slot-weighted firing rates from the spike counters of a network.

    Requires at least one forward pass since the last reset.
    """
    per_layer = {}
    total_spikes = 0.0
    total_slots = 0
    for name, mod in network.named_modules():
        if isinstance(mod, PLIFLayer) and mod.neuron_slots:
            rate = mod.spikes_emitted / mod.neuron_slots
            per_layer[name] = {
                "spikes": mod.spikes_emitted,
                "slots": mod.neuron_slots,
                "rate": rate,
            }
            total_spikes += mod.spikes_emitted
            total_slots += mod.neuron_slots
    if total_slots == 0:
        raise ValueError("no spike activity recorded; run a forward pass first")
    return FiringReport(per_layer, total_spikes, total_slots)


def count_ops(network: Module, T: int) -> OpCount:
    """Shape-driven synaptic operation counts per timestep, per sample.

    Walks the recorded shapes of the latest forward pass (call the network
    on one sample first). Convs on spiking inputs contribute to N_AC; convs
    flagged non-spiking (decoded-input head), BN affine transforms, and SEW
    add sites contribute to N_MAC. Weight values never enter the count.
    """
    out = OpCount()
    for name, mod in network.named_modules():
        if isinstance(mod, (Conv2d, TransposedConv2d)):
            if mod.last_out_hw is None:
                continue
            h, w = mod.last_out_hw
            out_elems = mod.out_ch * h * w if isinstance(mod, Conv2d) else mod.out_ch * h * w
            ops = out_elems * mod.kernel * mod.kernel * mod.in_ch
            if mod.spiking_input:
                out.n_ac += ops
                out.per_layer[name] = {"kind": "conv/AC", "ops": ops}
            else:
                # non-spiking convs outside the timestep loop are amortized
                ops_t = ops if getattr(mod, "per_timestep", True) else ops / T
                out.n_mac += ops_t
                out.per_layer[name] = {"kind": "conv/MAC", "ops": ops_t}
        elif isinstance(mod, BatchNorm2d) and mod.last_elems:
            out.n_mac += mod.last_elems
            out.per_layer[name] = {"kind": "bn/MAC", "ops": mod.last_elems}
        elif isinstance(mod, SEWResBlock) and mod.last_output is not None:
            elems = int(mod.last_output.size / mod.last_output.shape[0])
            out.n_mac += elems
            out.per_layer[name] = {"kind": "sew-add/MAC", "ops": elems}
    return out


def energy(T: int, fr: float, counts: OpCount) -> EnergyReport:
    """E_snn = T * fr * E_AC * N_AC; E_mac = T * E_MAC * N_MAC (joules)."""
    if not 0.0 <= fr <= 1.0:
        raise ValueError("firing rate must lie in [0, 1]")
    e_snn = T * fr * E_AC_PJ * counts.n_ac * 1e-12
    e_mac = T * E_MAC_PJ * counts.n_mac * 1e-12
    return EnergyReport(e_snn, e_mac, T, fr)
