"""PLIF spiking layers, network building blocks, and the fusion module.

Networks process a voxel batch [N, T, C, H, W] one time step at a time;
PLIF layers carry membrane state across steps and must be reset between
samples. All blocks put BatchNorm before their convolution. Activations
are binary everywhere except at spike-element-wise residual adds, whose
outputs lie in {0, 1, 2}.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import SurrogateSpec, Tensor

__all__ = [
    "Module",
    "PLIFLayer",
    "Conv2d",
    "TransposedConv2d",
    "BatchNorm2d",
    "LinearLayer",
    "ConvBNPLIF",
    "TConvBNPLIF",
    "DenseBlock",
    "SEWResBlock",
    "ExtraBlock",
    "DeconvBlock",
    "SPES",
    "SpikingFusion",
    "FusionSpec",
    "SpikingClassifier",
    "SpikingDetectorBackbone",
    "save_checkpoint",
    "load_checkpoint",
]


class Module:
    """Composable layer with named parameters, buffers, and child modules."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, "Module"] = {}
        self.training = True

    def register_param(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def register_buffer(self, name: str, array: np.ndarray) -> np.ndarray:
        self._buffers[name] = array
        return array

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_modules(self, prefix: str = ""):
        yield prefix or "root", self
        for name, child in self._children.items():
            sub = f"{prefix}.{name}" if prefix else name
            yield from child.named_modules(sub)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for mod_name, mod in self.named_modules():
            for p_name, p in mod._params.items():
                out[f"{mod_name}.{p_name}"] = p
        return out

    def named_buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for mod_name, mod in self.named_modules():
            for b_name, b in mod._buffers.items():
                out[f"{mod_name}.{b_name}"] = b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self):
        for _, mod in self.named_modules():
            mod.training = True

    def eval(self):
        for _, mod in self.named_modules():
            mod.training = False

    def reset_state(self):
        """Clear membrane potentials and spike counters everywhere."""
        for _, mod in self.named_modules():
            mod._reset_local_state()

    def _reset_local_state(self):
        pass


class PLIFLayer(Module):
    """Leaky integrate-and-fire neuron with a learnable time constant.

    1/tau = sigmoid(w); charge H = V + (1/tau) * (X - (V - v_reset));
    spikes fire where H >= v_threshold, with hard reset to v_reset.
    w = 0 gives tau = 2, the standard initialization.
    """

    def __init__(self, w_init: float = 0.0, v_threshold: float = 1.0,
                 v_reset: float = 0.0, surrogate: SurrogateSpec | None = None):
        super().__init__()
        self.w = self.register_param("w", Tensor(np.float64(w_init)))
        self.v_threshold = float(v_threshold)
        self.v_reset = float(v_reset)
        self.surrogate = surrogate or SurrogateSpec()
        self.v: Tensor | None = None
        self.spikes_emitted = 0.0
        self.neuron_slots = 0
        self.last_output: np.ndarray | None = None

    def tau(self) -> float:
        return float(1.0 / (1.0 / (1.0 + np.exp(-self.w.data))))

    def _reset_local_state(self):
        self.v = None
        self.spikes_emitted = 0.0
        self.neuron_slots = 0
        self.last_output = None

    def step(self, x: Tensor) -> Tensor:
        if self.v is None:
            self.v = Tensor(np.full(x.shape, self.v_reset))
        elif self.v.shape != x.shape:
            raise ValueError("input shape changed mid-sequence; call reset_state first")
        inv_tau = ag.sigmoid(self.w)
        leak = ag.elementwise_add(self.v, Tensor(np.float64(-self.v_reset)))
        drive = ag.elementwise_add(x, ag.scalar_mul(leak, -1.0))
        h = ag.elementwise_add(self.v, ag.elementwise_mul(inv_tau, drive))
        s = ag.spike(ag.elementwise_add(h, Tensor(np.float64(-self.v_threshold))), self.surrogate)
        keep = ag.elementwise_add(Tensor(np.float64(1.0)), ag.scalar_mul(s, -1.0))
        self.v = ag.elementwise_add(
            ag.elementwise_mul(h, keep), ag.scalar_mul(s, self.v_reset)
        )
        self.spikes_emitted += float(s.data.sum())
        self.neuron_slots += int(s.data.size)
        self.last_output = s.data
        return s


def he_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Conv2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel, stride=1, padding=0,
                 bias: bool = False, spiking_input: bool = True):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.spiking_input = spiking_input  # energy accounting: AC vs MAC
        fan_in = in_ch * kernel * kernel
        self.weight = self.register_param(
            "weight", Tensor(he_init(rng, (out_ch, in_ch, kernel, kernel), fan_in))
        )
        self.bias = self.register_param("bias", Tensor(np.zeros(out_ch))) if bias else None
        self.last_out_hw: tuple | None = None
        self.per_timestep = True  # head convs run once per sample instead

    def forward(self, x: Tensor) -> Tensor:
        out = ag.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
        self.last_out_hw = out.shape[2:]
        return out


class TransposedConv2d(Module):
    def __init__(self, rng, in_ch, out_ch, kernel, stride, padding, output_padding,
                 spiking_input: bool = True):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride = kernel, stride
        self.padding, self.output_padding = padding, output_padding
        self.spiking_input = spiking_input
        fan_in = in_ch * kernel * kernel
        # conv-layout weight [in_ch, out_ch, kh, kw]: forward is the adjoint map
        self.weight = self.register_param(
            "weight", Tensor(he_init(rng, (in_ch, out_ch, kernel, kernel), fan_in))
        )
        self.last_out_hw: tuple | None = None

    def forward(self, x: Tensor) -> Tensor:
        out = ag.transposed_conv2d(
            x, self.weight, stride=self.stride, padding=self.padding,
            output_padding=self.output_padding,
        )
        self.last_out_hw = out.shape[2:]
        return out


class BatchNorm2d(Module):
    def __init__(self, channels, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.channels = channels
        self.momentum, self.eps = momentum, eps
        self.gamma = self.register_param("gamma", Tensor(np.ones(channels)))
        self.beta = self.register_param("beta", Tensor(np.zeros(channels)))
        self.running_mean = self.register_buffer("running_mean", np.zeros(channels))
        self.running_var = self.register_buffer("running_var", np.ones(channels))
        self.last_elems = 0  # per-sample element count, for MAC accounting

    def forward(self, x: Tensor) -> Tensor:
        self.last_elems = int(x.data.size // x.shape[0])
        return ag.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class LinearLayer(Module):
    def __init__(self, rng, in_dim, out_dim, bias: bool = True):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = self.register_param(
            "weight", Tensor(he_init(rng, (out_dim, in_dim), in_dim))
        )
        self.bias = self.register_param("bias", Tensor(np.zeros(out_dim))) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ag.linear(x, self.weight, self.bias)


class ConvBNPLIF(Module):
    """BN -> conv -> PLIF, applied once per time step."""

    def __init__(self, rng, in_ch, out_ch, kernel=3, stride=1, padding=1,
                 surrogate: SurrogateSpec | None = None, spiking_input: bool = True):
        super().__init__()
        self.bn = self.add_child("bn", BatchNorm2d(in_ch))
        self.conv = self.add_child(
            "conv", Conv2d(rng, in_ch, out_ch, kernel, stride, padding,
                           spiking_input=spiking_input)
        )
        self.plif = self.add_child("plif", PLIFLayer(surrogate=surrogate))

    def step(self, x: Tensor) -> Tensor:
        return self.plif.step(self.conv.forward(self.bn.forward(x)))


class TConvBNPLIF(Module):
    """BN -> transposed conv -> PLIF, geometry solved for an exact target."""

    def __init__(self, rng, in_ch, out_ch, in_hw, target_hw,
                 surrogate: SurrogateSpec | None = None):
        super().__init__()
        s, k, op, p = ag.solve_transposed_conv_geometry(in_hw, target_hw)
        self.bn = self.add_child("bn", BatchNorm2d(in_ch))
        self.tconv = self.add_child(
            "tconv", TransposedConv2d(rng, in_ch, out_ch, k, s, p, op)
        )
        self.plif = self.add_child("plif", PLIFLayer(surrogate=surrogate))
        self.target_hw = tuple(target_hw)

    def step(self, x: Tensor) -> Tensor:
        out = self.plif.step(self.tconv.forward(self.bn.forward(x)))
        if out.shape[2:] != self.target_hw:
            raise ValueError("transposed conv missed its target shape")
        return out


class DenseBlock(Module):
    """Each inner layer consumes the concat of the input and all previous outputs."""

    def __init__(self, rng, in_ch, layers, growth, surrogate=None):
        super().__init__()
        self.in_ch, self.layers, self.growth = in_ch, layers, growth
        self.out_ch = in_ch + layers * growth
        for i in range(layers):
            self.add_child(
                f"layer{i}",
                ConvBNPLIF(rng, in_ch + i * growth, growth, kernel=3, padding=1,
                           surrogate=surrogate),
            )

    def step(self, x: Tensor) -> Tensor:
        feats = [x]
        for i in range(self.layers):
            current = feats[0] if len(feats) == 1 else ag.concat(feats, axis=1)
            feats.append(self._children[f"layer{i}"].step(current))
        return ag.concat(feats, axis=1)


class SEWResBlock(Module):
    """Spike-element-wise residual block with ADD connect.

    Output values lie in {0, 1, 2}; the fraction of 2-valued entries is
    tracked as the non-binary activation rate.
    """

    def __init__(self, rng, channels, surrogate=None):
        super().__init__()
        self.channels = channels
        self.body1 = self.add_child("body1", ConvBNPLIF(rng, channels, channels, 3, 1, 1, surrogate))
        self.body2 = self.add_child("body2", ConvBNPLIF(rng, channels, channels, 3, 1, 1, surrogate))
        self.nonbinary_entries = 0.0
        self.total_entries = 0
        self.last_output: np.ndarray | None = None

    def _reset_local_state(self):
        self.nonbinary_entries = 0.0
        self.total_entries = 0
        self.last_output = None

    def step(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ValueError("SEW residual block requires matching channel count")
        out = ag.elementwise_add(self.body2.step(self.body1.step(x)), x)
        self.nonbinary_entries += float((out.data > 1.0).sum())
        self.total_entries += int(out.data.size)
        self.last_output = out.data
        return out

    def nonbinary_rate(self) -> float:
        return self.nonbinary_entries / self.total_entries if self.total_entries else 0.0


class ExtraBlock(Module):
    """1x1 channel squeeze then 3x3 stride-2 spatial halving (ceil mode)."""

    def __init__(self, rng, in_ch, mid_ch, out_ch, surrogate=None):
        super().__init__()
        self.squeeze = self.add_child("squeeze", ConvBNPLIF(rng, in_ch, mid_ch, 1, 1, 0, surrogate))
        self.down = self.add_child("down", ConvBNPLIF(rng, mid_ch, out_ch, 3, 2, 1, surrogate))
        self.out_ch = out_ch

    def step(self, x: Tensor) -> Tensor:
        return self.down.step(self.squeeze.step(x))


class DeconvBlock(Module):
    """Per-tap transform: 1x1 refinement then learned upsampling to a target."""

    def __init__(self, rng, in_ch, fused_ch, in_hw, target_hw, surrogate=None):
        super().__init__()
        if target_hw[0] < in_hw[0] or target_hw[1] < in_hw[1]:
            raise ValueError("deconv target must be at least the input size")
        self.refine = self.add_child("refine", ConvBNPLIF(rng, in_ch, fused_ch, 1, 1, 0, surrogate))
        self.up = self.add_child("up", TConvBNPLIF(rng, fused_ch, fused_ch, in_hw, target_hw, surrogate))
        self.out_ch = fused_ch

    def step(self, x: Tensor) -> Tensor:
        return self.up.step(self.refine.step(x))


@dataclass
class FusionSpec:
    fuse_layers: list[int] = field(default_factory=lambda: [0, 1, 2])
    fused_channels: int = 64
    spes_variant: str = "res"  # basic | res | dense
    pyramid_levels: int = 3

    def __post_init__(self):
        if not self.fuse_layers:
            raise ValueError("fuse_layers must be non-empty")
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.spes_variant not in ("basic", "res", "dense"):
            raise ValueError(f"unknown SPES variant {self.spes_variant!r}")


class SPES(Module):
    """Pyramid extraction chain regenerating multi-scale maps.

    Level i is emitted after its 1x1 refinement (optionally enhanced by a
    SEW residual or spiking dense block); the stride-2 3x3 then feeds the
    next level, so level 1 keeps the fused resolution. Channel widths decay
    geometrically from the fused width.
    """

    def __init__(self, rng, in_ch, levels, variant="basic", widths=None,
                 dense_layers=2, dense_growth=8, surrogate=None):
        super().__init__()
        self.levels = levels
        self.variant = variant
        if widths is None:
            widths = [max(in_ch // (2 ** i), 8) for i in range(levels)]
        if len(widths) != levels:
            raise ValueError("need one width per pyramid level")
        self.widths = list(widths)
        ch = in_ch
        for i, w in enumerate(widths):
            self.add_child(f"refine{i}", ConvBNPLIF(rng, ch, w, 1, 1, 0, surrogate))
            if variant == "res":
                self.add_child(f"enhance{i}", SEWResBlock(rng, w, surrogate))
            elif variant == "dense":
                self.add_child(f"enh_dense{i}", DenseBlock(rng, w, dense_layers, dense_growth, surrogate))
                self.add_child(
                    f"enh_squeeze{i}",
                    ConvBNPLIF(rng, w + dense_layers * dense_growth, w, 1, 1, 0, surrogate),
                )
            if i < levels - 1:
                self.add_child(f"down{i}", ConvBNPLIF(rng, w, w, 3, 2, 1, surrogate))
            ch = w

    def step(self, fused: Tensor) -> list[Tensor]:
        outs = []
        x = fused
        for i in range(self.levels):
            y = self._children[f"refine{i}"].step(x)
            if self.variant == "res":
                emit = self._children[f"enhance{i}"].step(y)
            elif self.variant == "dense":
                emit = self._children[f"enh_squeeze{i}"].step(
                    self._children[f"enh_dense{i}"].step(y)
                )
            else:
                emit = y
            outs.append(emit)
            if i < self.levels - 1:
                x = self._children[f"down{i}"].step(emit)
        return outs


class SpikingFusion(Module):
    """Deconv per tap, channel concat, then SPES pyramid regeneration."""

    def __init__(self, rng, spec: FusionSpec, tap_channels, tap_hws, surrogate=None,
                 pyramid_widths=None):
        super().__init__()
        if len(tap_channels) != len(spec.fuse_layers) or len(tap_hws) != len(spec.fuse_layers):
            raise ValueError("one tap shape required per fused layer")
        self.spec = spec
        self.target_hw = tuple(tap_hws[0])
        for i, (ch, hw) in enumerate(zip(tap_channels, tap_hws)):
            self.add_child(
                f"deconv{i}",
                DeconvBlock(rng, ch, spec.fused_channels, tuple(hw), self.target_hw, surrogate),
            )
        fused_ch = spec.fused_channels * len(spec.fuse_layers)
        self.spes = self.add_child(
            "spes",
            SPES(rng, fused_ch, spec.pyramid_levels, spec.spes_variant,
                 widths=pyramid_widths, surrogate=surrogate),
        )

    def transform_taps(self, taps: list[Tensor]) -> list[Tensor]:
        if len(taps) != len(self.spec.fuse_layers):
            raise ValueError("tap count does not match fusion spec")
        return [self._children[f"deconv{i}"].step(t) for i, t in enumerate(taps)]

    def fuse(self, transformed: list[Tensor]) -> Tensor:
        hws = {t.shape[2:] for t in transformed}
        if len(hws) != 1:
            raise ValueError("transformed taps disagree on spatial shape")
        return ag.concat(transformed, axis=1)

    def step(self, taps: list[Tensor]) -> list[Tensor]:
        return self.spes.step(self.fuse(self.transform_taps(taps)))


# --- assembled networks -------------------------------------------------------


class SpikingClassifier(Module):
    """Dense spiking backbone + global average pool + linear + output PLIF.

    forward() consumes a voxel batch [N, T, C, H, W] and returns the list
    of per-step class spike Tensors [N, classes].
    """

    def __init__(self, config: dict, rng: np.random.Generator):
        super().__init__()
        self.config = dict(config)
        in_ch = config["in_channels"]
        stem_ch = config.get("stem_channels", 16)
        stages = [tuple(s) for s in config.get("stages", [(2, 8)])]
        classes = config["classes"]
        surrogate = SurrogateSpec(alpha=config.get("surrogate_alpha", 2.0))
        self.stem = self.add_child(
            "stem", ConvBNPLIF(rng, in_ch, stem_ch, 3, 2, 1, surrogate, spiking_input=False)
        )
        ch = stem_ch
        self.n_stages = len(stages)
        for i, (layers, growth) in enumerate(stages):
            self.add_child(f"stage{i}", DenseBlock(rng, ch, layers, growth, surrogate))
            ch += layers * growth
            if i < len(stages) - 1:
                trans_ch = max(ch // 2, growth)
                self.add_child(f"trans{i}", ConvBNPLIF(rng, ch, trans_ch, 1, 1, 0, surrogate))
                ch = trans_ch
        self.head_linear = self.add_child("head_linear", LinearLayer(rng, ch, classes))
        self.head_plif = self.add_child("head_plif", PLIFLayer(surrogate=surrogate))
        self.feature_channels = ch

    def step(self, x: Tensor) -> Tensor:
        h = self.stem.step(x)
        for i in range(self.n_stages):
            h = self._children[f"stage{i}"].step(h)
            if i < self.n_stages - 1:
                h = self._children[f"trans{i}"].step(h)
                h = ag.avg_pool2d(h, 2)
        pooled = ag.spatial_mean(h)
        return self.head_plif.step(self.head_linear.forward(pooled))

    def forward(self, batch: np.ndarray) -> list[Tensor]:
        self.reset_state()
        steps = []
        for t in range(batch.shape[1]):
            steps.append(self.step(Tensor(batch[:, t])))
        return steps


class SpikingDetectorBackbone(Module):
    """Dense backbone exposing taps at the fusion scales plus extra blocks.

    Layout: stem conv (stride 2) -> avg pool 2 -> dense stages separated by
    1x1 transition + avg pool 2 -> extra blocks (ceil-mode halving). Taps are
    the outputs of the stages listed in ``tap_stages`` followed by every
    extra block, in depth order.
    """

    def __init__(self, config: dict, rng: np.random.Generator):
        super().__init__()
        self.config = dict(config)
        in_ch = config["in_channels"]
        stem_ch = config.get("stem_channels", 16)
        stages = [tuple(s) for s in config.get("stages", [(2, 8), (2, 8), (2, 8)])]
        tap_stages = list(config.get("tap_stages", range(len(stages))))
        n_extra = config.get("extra_blocks", 0)
        surrogate = SurrogateSpec(alpha=config.get("surrogate_alpha", 2.0))
        self.stem = self.add_child(
            "stem", ConvBNPLIF(rng, in_ch, stem_ch, 3, 2, 1, surrogate, spiking_input=False)
        )
        self.n_stages = len(stages)
        self.tap_stages = tap_stages
        self.n_extra = n_extra
        ch = stem_ch
        self.stage_channels = []
        for i, (layers, growth) in enumerate(stages):
            self.add_child(f"stage{i}", DenseBlock(rng, ch, layers, growth, surrogate))
            ch += layers * growth
            self.stage_channels.append(ch)
            if i < len(stages) - 1:
                trans_ch = max(ch // 2, growth)
                self.add_child(f"trans{i}", ConvBNPLIF(rng, ch, trans_ch, 1, 1, 0, surrogate))
                ch = trans_ch
        self.extra_channels = []
        for j in range(n_extra):
            out_ch = max(ch // 2, 8)
            self.add_child(f"extra{j}", ExtraBlock(rng, ch, max(ch // 2, 8), out_ch, surrogate))
            ch = out_ch
            self.extra_channels.append(out_ch)
        self.tap_channels = [self.stage_channels[i] for i in tap_stages] + self.extra_channels

    def step(self, x: Tensor) -> list[Tensor]:
        taps = []
        h = self.stem.step(x)
        h = ag.avg_pool2d(h, 2)
        for i in range(self.n_stages):
            h = self._children[f"stage{i}"].step(h)
            if i in self.tap_stages:
                taps.append(h)
            if i < self.n_stages - 1:
                h = self._children[f"trans{i}"].step(h)
                h = ag.avg_pool2d(h, 2)
        for j in range(self.n_extra):
            h = self._children[f"extra{j}"].step(h)
            taps.append(h)
        return taps

    def tap_shapes(self, input_hw) -> list[tuple[int, int, int]]:
        """(channels, H, W) per tap for the given input size, via dry run."""
        self.reset_state()
        dummy = Tensor(np.zeros((1, self.config["in_channels"], *input_hw)))
        taps = self.step(dummy)
        shapes = [(t.shape[1], t.shape[2], t.shape[3]) for t in taps]
        self.reset_state()
        return shapes


# --- checkpoint archive -------------------------------------------------------


def save_checkpoint(path, arch: dict, network: Module) -> None:
    """Single zip archive: manifest (architecture + shapes) + raw f64 arrays."""
    params = network.named_parameters()
    buffers = network.named_buffers()
    manifest = {
        "format": "spikedet-checkpoint-v1",
        "arch": arch,
        "params": {k: list(np.shape(v.data)) for k, v in params.items()},
        "buffers": {k: list(np.shape(v)) for k, v in buffers.items()},
    }
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        for k, v in params.items():
            zf.writestr(f"params/{k}.f64", np.ascontiguousarray(v.data, dtype="<f8").tobytes())
        for k, v in buffers.items():
            zf.writestr(f"buffers/{k}.f64", np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path, network: Module) -> dict:
    """Load parameters into an already-built network; returns the manifest.

    Raises ValueError when a stored shape disagrees with the network.
    """
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        params = network.named_parameters()
        if set(manifest["params"]) != set(params):
            raise ValueError("checkpoint/architecture parameter mismatch")
        for k, p in params.items():
            shape = tuple(manifest["params"][k])
            if shape != np.shape(p.data):
                raise ValueError(f"shape mismatch for parameter {k}")
            raw = np.frombuffer(zf.read(f"params/{k}.f64"), dtype="<f8")
            p.data = raw.reshape(shape).astype(np.float64).copy()
        buffers = network.named_buffers()
        for k, b in buffers.items():
            shape = tuple(manifest["buffers"][k])
            if shape != np.shape(b):
                raise ValueError(f"shape mismatch for buffer {k}")
            raw = np.frombuffer(zf.read(f"buffers/{k}.f64"), dtype="<f8")
            b[...] = raw.reshape(shape)
    return manifest


def read_checkpoint_manifest(path) -> dict:
    with zipfile.ZipFile(path) as zf:
        return json.loads(zf.read("manifest.json"))


def build_classifier(config: dict, seed: int = 0) -> SpikingClassifier:
    return SpikingClassifier(config, np.random.default_rng(seed))


def build_detector_backbone(config: dict, seed: int = 0) -> SpikingDetectorBackbone:
    return SpikingDetectorBackbone(config, np.random.default_rng(seed))
