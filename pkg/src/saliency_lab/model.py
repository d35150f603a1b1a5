"""Generator (encoder-decoder) and discriminator networks as layer stacks.

Shapes follow the (channels, height, width) convention; an image that is
256 pixels wide and 192 tall has ``input_shape == (3, 192, 256)``.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node, Parameter

KINDS = ("conv", "pool", "upsample", "dense", "output")
INITS = ("he", "glorot")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    depth: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    pad: int = 0
    activation: str = "none"
    scalable: bool = True

    @property
    def block(self) -> int | None:
        m = re.match(r"conv(\d+)_", self.name)
        return int(m.group(1)) if m else None


def _conv(name, depth, k=3, pad=1, act="relu", scalable=True):
    return LayerSpec(name, "conv", depth, (k, k), 1, pad, act, scalable)


def _pool(name):
    return LayerSpec(name, "pool", 0, (2, 2), 2, 0, "none")


def _up(name):
    return LayerSpec(name, "upsample", 0, (2, 2), 2, 0, "none")


def _fc(name, depth, act):
    return LayerSpec(name, "dense", depth, (0, 0), 1, 0, act, scalable=False)


# conv1_1 uses a 3x3 kernel like the rest of the VGG-16 encoder
GENERATOR_LAYERS: tuple[LayerSpec, ...] = (
    _conv("conv1_1", 64), _conv("conv1_2", 64), _pool("pool1"),
    _conv("conv2_1", 128), _conv("conv2_2", 128), _pool("pool2"),
    _conv("conv3_1", 256), _conv("conv3_2", 256), _conv("conv3_3", 256), _pool("pool3"),
    _conv("conv4_1", 512), _conv("conv4_2", 512), _conv("conv4_3", 512), _pool("pool4"),
    _conv("conv5_1", 512), _conv("conv5_2", 512), _conv("conv5_3", 512),
    _conv("conv6_1", 512), _conv("conv6_2", 512), _conv("conv6_3", 512), _up("upsample6"),
    _conv("conv7_1", 512), _conv("conv7_2", 512), _conv("conv7_3", 512), _up("upsample7"),
    _conv("conv8_1", 256), _conv("conv8_2", 256), _conv("conv8_3", 256), _up("upsample8"),
    _conv("conv9_1", 128), _conv("conv9_2", 128), _up("upsample9"),
    _conv("conv10_1", 64), _conv("conv10_2", 64),
    LayerSpec("output", "output", 1, (1, 1), 1, 0, "sigmoid", scalable=False),
)

# conv1_1 mixes the RGBS channels down to 3; padded 0 so spatial size is kept
DISCRIMINATOR_LAYERS: tuple[LayerSpec, ...] = (
    _conv("conv1_1", 3, k=1, pad=0, scalable=False), _conv("conv1_2", 32), _pool("pool1"),
    _conv("conv2_1", 64), _conv("conv2_2", 64), _pool("pool2"),
    _conv("conv3_1", 64), _conv("conv3_2", 64), _pool("pool3"),
    _fc("fc4", 100, "tanh"), _fc("fc5", 2, "tanh"), _fc("fc6", 1, "sigmoid"),
)


@dataclass
class NetConfig:
    kind: str
    specs: tuple[LayerSpec, ...]
    scale_divisor: int = 1
    input_shape: tuple[int, int, int] = (3, 192, 256)
    frozen_prefix: int = 0
    init: str = "he"

    def __post_init__(self):
        self.specs = tuple(s if isinstance(s, LayerSpec) else LayerSpec(**s) for s in self.specs)
        self.specs = tuple(replace(s, kernel=tuple(s.kernel)) for s in self.specs)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.validate()

    @property
    def spatial_multiple(self) -> int:
        return 2 ** sum(s.kind == "pool" for s in self.specs)

    def depth(self, spec: LayerSpec) -> int:
        return spec.depth // self.scale_divisor if spec.scalable else spec.depth

    def validate(self) -> None:
        d = self.scale_divisor
        if d < 1:
            raise ValueError("scale divisor must be a positive integer")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        for s in self.specs:
            if s.kind not in KINDS:
                raise ValueError(f"layer {s.name}: unknown kind {s.kind!r}")
            if s.kind == "conv" and s.scalable and (s.depth % d or s.depth // d < 1):
                raise ValueError(f"layer {s.name}: depth {s.depth} not divisible by scale divisor {d}")
        _, h, w = self.input_shape
        m = self.spatial_multiple
        if h % m or w % m:
            raise ValueError(f"{self.kind} input {w}x{h} (WxH) must be divisible by {m}")

    def to_dict(self) -> dict:
        # JSON-shaped (lists, not tuples) so it survives a checkpoint round trip unchanged
        d = asdict(self)
        d["specs"] = [{**asdict(s), "kernel": list(s.kernel)} for s in self.specs]
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["specs"] = tuple(LayerSpec(**{**s, "kernel": tuple(s["kernel"])}) for s in d["specs"])
        return cls(**d)


def generator_config(width: int = 256, height: int = 192, scale_divisor: int = 1, frozen_prefix: int = 3,
                     init: str = "he") -> NetConfig:
    return NetConfig("generator", GENERATOR_LAYERS, scale_divisor, (3, height, width), frozen_prefix, init)


def discriminator_config(width: int = 256, height: int = 192, scale_divisor: int = 1, init: str = "he") -> NetConfig:
    return NetConfig("discriminator", DISCRIMINATOR_LAYERS, scale_divisor, (4, height, width), 0, init)


@dataclass
class Network:
    config: NetConfig
    params: dict[str, Parameter] = field(default_factory=dict)

    def parameters(self, trainable_only: bool = False) -> list[Parameter]:
        return [p for p in self.params.values() if p.trainable or not trainable_only]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in self.params.items():
            v = np.asarray(state[name], dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"{name}: shape {v.shape} != {p.shape}")
            p.value = np.array(v, copy=True)
            p.zero_grad()

    def layer_shapes(self, input_shape=None) -> list[tuple[str, tuple[int, ...]]]:
        """Per-layer output shapes (batch dimension omitted) by shape propagation alone."""
        return _propagate(self.config, input_shape or self.config.input_shape)

    def forward(self, x, graph: Graph, trainable: bool | None = None) -> Node:
        """Run the network, recording every step on ``graph``.

        ``trainable=False`` reads all weights as constants (e.g. the
        discriminator while the generator is being updated).
        """
        if not isinstance(x, Node):
            x = graph.constant(x, op="input")
        self._check_input(x.shape)
        leaf = {}

        def p(name):
            if name not in leaf:
                flag = False if trainable is False else None
                leaf[name] = graph.parameter(self.params[name], trainable=flag)
            return leaf[name]

        h = x
        for spec in self.config.specs:
            if spec.kind in ("conv", "output"):
                h = ad.conv2d(h, p(spec.name + ".weight"), p(spec.name + ".bias"), spec.stride, spec.pad)
                h = ad.activate(h, spec.activation)
            elif spec.kind == "pool":
                h = ad.maxpool2(h)
            elif spec.kind == "upsample":
                h = ad.upsample2(h)
            elif spec.kind == "dense":
                if len(h.shape) != 2:
                    h = ad.flatten(h)
                h = ad.dense(h, p(spec.name + ".weight"), p(spec.name + ".bias"))
                h = ad.activate(h, spec.activation)
        return h

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        out = self.forward(x[None] if single else x, Graph(), trainable=False).value
        return out[0] if single else out

    def _check_input(self, shape) -> None:
        c, h, w = self.config.input_shape
        if len(shape) != 4 or shape[1] != c:
            raise ValueError(f"{self.config.kind} expects (B, {c}, H, W) input, got {shape}")
        if self.config.kind == "discriminator":
            if shape[2:] != (h, w):
                raise ValueError(f"discriminator expects spatial size {(h, w)}, got {shape[2:]}")
        else:
            m = self.config.spatial_multiple
            if shape[2] % m or shape[3] % m:
                raise ValueError(f"generator input {shape[3]}x{shape[2]} (WxH) not divisible by {m}")


def _propagate(config: NetConfig, input_shape) -> list[tuple[str, tuple[int, ...]]]:
    c, h, w = input_shape
    flat = None
    shapes = []
    for spec in config.specs:
        if spec.kind in ("conv", "output"):
            kh, kw = spec.kernel
            c = config.depth(spec)
            h = (h + 2 * spec.pad - kh) // spec.stride + 1
            w = (w + 2 * spec.pad - kw) // spec.stride + 1
            shapes.append((spec.name, (c, h, w)))
        elif spec.kind == "pool":
            h, w = h // 2, w // 2
            shapes.append((spec.name, (c, h, w)))
        elif spec.kind == "upsample":
            h, w = h * 2, w * 2
            shapes.append((spec.name, (c, h, w)))
        else:
            flat = config.depth(spec)
            shapes.append((spec.name, (flat,)))
    return shapes


def _init_weight(rng: np.random.Generator, shape, fan_in: int, fan_out: int, scheme: str, activation: str) -> np.ndarray:
    # "he" only changes ReLU layers; sigmoid/tanh layers keep the Glorot range
    if scheme == "he" and activation == "relu":
        limit = np.sqrt(6.0 / fan_in)
    else:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_network(config: NetConfig, seed: int) -> Network:
    """Allocate and initialise every weight of ``config`` from ``seed``."""
    config.validate()
    rng = np.random.default_rng(seed)
    net = Network(config)
    c, h, w = config.input_shape
    in_features = None
    for spec, (_, out_shape) in zip(config.specs, _propagate(config, config.input_shape)):
        if spec.kind in ("conv", "output"):
            out_c = config.depth(spec)
            kh, kw = spec.kernel
            frozen = spec.block is not None and spec.block <= config.frozen_prefix
            wv = _init_weight(rng, (out_c, c, kh, kw), c * kh * kw, out_c * kh * kw, config.init, spec.activation)
            net.params[spec.name + ".weight"] = Parameter(spec.name + ".weight", wv, trainable=not frozen)
            net.params[spec.name + ".bias"] = Parameter(spec.name + ".bias", np.zeros(out_c), trainable=not frozen)
            c = out_c
            h, w = out_shape[1:]
        elif spec.kind in ("pool", "upsample"):
            h, w = out_shape[1:]
        elif spec.kind == "dense":
            if in_features is None:
                in_features = c * h * w
            out_f = config.depth(spec)
            wv = _init_weight(rng, (out_f, in_features), in_features, out_f, config.init, spec.activation)
            net.params[spec.name + ".weight"] = Parameter(spec.name + ".weight", wv)
            net.params[spec.name + ".bias"] = Parameter(spec.name + ".bias", np.zeros(out_f))
            in_features = out_f
    return net


def build_generator(config: NetConfig, seed: int) -> Network:
    if config.input_shape[0] != 3:
        raise ValueError("generator input must have 3 channels")
    return build_network(config, seed)


def build_discriminator(config: NetConfig, seed: int) -> Network:
    if config.input_shape[0] != 4:
        raise ValueError("discriminator input must have 4 (RGB + saliency) channels")
    return build_network(config, seed)


def forward(net: Network, x, graph: Graph) -> Node:
    return net.forward(x, graph)
