"""Toy EdgeNet: input branch (x1/4), residual U-shaped encoder-decoder, 12-way head.

Fusion schemes differ only in where the surface and edge streams meet:

* EARLY  - both F-TSDF volumes enter one input branch as two channels.
* MIDDLE - one half-width input branch per modality, concatenated before the encoder.
* LATE   - half-width input and encoder branches per modality, concatenated
  before the decoder (bottleneck and skip features alike).

Every scheme carries the same total number of channels at each level.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ShapeMismatchError
from .layers import Conv3d, Module, ReLU, ResBlock, Sequential, Upsample

NUM_CLASSES = 12


class FusionScheme(str, enum.Enum):
    EARLY = "EARLY"
    MIDDLE = "MIDDLE"
    LATE = "LATE"

    @classmethod
    def parse(cls, value) -> "FusionScheme":
        if isinstance(value, cls):
            return value
        aliases = {"ef": cls.EARLY, "mf": cls.MIDDLE, "lf": cls.LATE}
        v = str(value).strip()
        return aliases.get(v.lower()) or cls(v.upper())


@dataclass
class NetworkConfig:
    base_channels: int = 16
    levels: int = 2
    dilations: tuple = (1, 2)  # residual blocks at the lowest resolution
    fusion: FusionScheme = FusionScheme.EARLY
    input_dims: tuple = (60, 36, 60)
    class_count: int = NUM_CLASSES
    seed: int = 0

    def __post_init__(self):
        self.fusion = FusionScheme.parse(self.fusion)
        self.input_dims = tuple(int(d) for d in self.input_dims)
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.class_count != NUM_CLASSES:
            raise ValueError("class_count is fixed at 12 (11 classes + empty)")
        if any(d % 4 for d in self.input_dims):
            raise ValueError(f"input dims {self.input_dims} must be divisible by 4")
        if self.levels < 1 or self.base_channels < 4:
            raise ValueError("need levels >= 1 and base_channels >= 4")

    @property
    def output_dims(self):
        return tuple(d // 4 for d in self.input_dims)

    def to_dict(self):
        d = asdict(self)
        d["fusion"] = self.fusion.value
        d["input_dims"] = list(self.input_dims)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "dilations": tuple(d["dilations"]), "input_dims": tuple(d["input_dims"])})


def _ceil_half(n):
    return (n + 1) // 2


class _Branch(Module):
    """Input stem (down to 1/4 resolution), optionally followed by an encoder."""

    def __init__(self, in_channels, widths, stem_widths, with_encoder, dilations, rng, dtype):
        s0, s1, s2 = stem_widths
        self.stem = Sequential(
            Conv3d(in_channels, s0, 3, 1, rng=rng, dtype=dtype),
            ReLU(),
            Conv3d(s0, s1, 3, 2, rng=rng, dtype=dtype),
            ReLU(),
            Conv3d(s1, s2, 3, 2, rng=rng, dtype=dtype),
            ReLU(),
            ResBlock(s2, 1, rng=rng, dtype=dtype),
        )
        self.encoder = _Encoder(s2, widths, dilations, rng, dtype) if with_encoder else None

    def named_children(self):
        out = [("stem", self.stem)]
        if self.encoder is not None:
            out.append(("encoder", self.encoder))
        return out


class _Encoder(Module):
    def __init__(self, c_in, widths, dilations, rng, dtype):
        self.levels = []
        last = len(widths) - 1
        for i, w in enumerate(widths):
            dil = dilations if i == last else (1,)
            layers = []
            if i > 0:
                layers += [Conv3d(widths[i - 1], w, 3, 2, rng=rng, dtype=dtype), ReLU()]
            elif c_in != w:
                layers += [Conv3d(c_in, w, 3, 1, rng=rng, dtype=dtype), ReLU()]
            layers += [ResBlock(w, d, rng=rng, dtype=dtype) for d in dil]
            self.levels.append(Sequential(*layers))

    def named_children(self):
        return [(f"level{i}", m) for i, m in enumerate(self.levels)]

    def forward(self, x):
        feats = []
        for lvl in self.levels:
            x = lvl.forward(x)
            feats.append(x)
        return feats

    def backward(self, grads):
        g = None
        for lvl, gf in zip(reversed(self.levels), reversed(grads)):
            g = gf if g is None else g + gf
            g = lvl.backward(g)
        return g


class _Decoder(Module):
    def __init__(self, widths, n_classes, rng, dtype):
        self.ups = []
        self.reduce = []
        self.fuse = []
        for i in range(len(widths) - 1, 0, -1):
            hi, lo = widths[i], widths[i - 1]
            self.ups.append(Upsample())
            self.reduce.append(Sequential(Conv3d(hi, lo, 3, 1, rng=rng, dtype=dtype), ReLU()))
            self.fuse.append(
                Sequential(Conv3d(2 * lo, lo, 3, 1, rng=rng, dtype=dtype), ReLU(), ResBlock(lo, 1, rng=rng, dtype=dtype))
            )
        self.head = Conv3d(widths[0], n_classes, 1, 1, padding=0, rng=rng, dtype=dtype)

    def named_children(self):
        out = []
        for i, (r, f) in enumerate(zip(self.reduce, self.fuse)):
            out += [(f"up{i}.reduce", r), (f"up{i}.fuse", f)]
        return out + [("head", self.head)]

    def forward(self, feats):
        x = feats[-1]
        self._splits = []
        for j, (up, red, fuse) in enumerate(zip(self.ups, self.reduce, self.fuse)):
            skip = feats[-2 - j]
            x = red.forward(up.forward(x, skip.shape[2:]))
            self._splits.append(x.shape[1])
            x = fuse.forward(np.concatenate([x, skip], axis=1))
        return self.head.forward(x)

    def backward(self, g):
        g = self.head.backward(g)
        skip_grads = []
        for up, red, fuse, k in zip(reversed(self.ups), reversed(self.reduce), reversed(self.fuse), reversed(self._splits)):
            g = fuse.backward(g)
            skip_grads.append(g[:, k:])
            g = up.backward(red.backward(g[:, :k]))
        # the loop visits skips shallow to deep, so this lines up with feats
        return skip_grads + [g]


class EdgeNet(Module):
    def __init__(self, cfg: NetworkConfig, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        rng = np.random.default_rng(cfg.seed)
        c = cfg.base_channels
        widths = [c * 2**i for i in range(cfg.levels)]
        stem = (_ceil_half(c), c, c)
        half = lambda ws: [max(1, w // 2) for w in ws]  # noqa: E731
        if cfg.fusion == FusionScheme.EARLY:
            self.branches = [_Branch(2, widths, stem, False, cfg.dilations, rng, dtype)]
            self.encoder = _Encoder(c, widths, cfg.dilations, rng, dtype)
        elif cfg.fusion == FusionScheme.MIDDLE:
            hs = tuple(half(stem))
            self.branches = [_Branch(1, widths, hs, False, cfg.dilations, rng, dtype) for _ in range(2)]
            self.encoder = _Encoder(2 * hs[2], widths, cfg.dilations, rng, dtype)
        else:
            hs = tuple(half(stem))
            self.branches = [_Branch(1, half(widths), hs, True, cfg.dilations, rng, dtype) for _ in range(2)]
            self.encoder = None
        self.decoder = _Decoder(widths, cfg.class_count, rng, dtype)

    def named_children(self):
        out = [(f"branch{i}", b) for i, b in enumerate(self.branches)]
        if self.encoder is not None:
            out.append(("encoder", self.encoder))
        return out + [("decoder", self.decoder)]

    def channel_budget(self):
        """Total channels per stage summed over parallel branches."""
        budget = {}

        def add(key, n):
            budget[key] = budget.get(key, 0) + n

        for b in self.branches:
            for i, conv in enumerate(m for m in b.stem.layers if isinstance(m, Conv3d)):
                add(f"stem{i}", conv.p.weights.shape[0])
            if b.encoder is not None:
                for i, lvl in enumerate(b.encoder.levels):
                    add(f"level{i}", lvl.layers[-1].conv2.p.weights.shape[0])
        if self.encoder is not None:
            for i, lvl in enumerate(self.encoder.levels):
                add(f"level{i}", lvl.layers[-1].conv2.p.weights.shape[0])
        return budget

    def parameter_count(self):
        return sum(v.size for _, v, _ in self.named_params())

    def forward(self, x):
        cfg = self.cfg
        if x.ndim != 5 or x.shape[1] != 2 or tuple(x.shape[2:]) != cfg.input_dims:
            raise ShapeMismatchError(f"expected input (n, 2, {cfg.input_dims}), got {x.shape}")
        x = x.astype(self.dtype, copy=False)
        if cfg.fusion == FusionScheme.EARLY:
            feats = self.encoder.forward(self.branches[0].stem.forward(x))
        elif cfg.fusion == FusionScheme.MIDDLE:
            parts = [b.stem.forward(x[:, i : i + 1]) for i, b in enumerate(self.branches)]
            self._split = parts[0].shape[1]
            feats = self.encoder.forward(np.concatenate(parts, axis=1))
        else:
            per = [b.encoder.forward(b.stem.forward(x[:, i : i + 1])) for i, b in enumerate(self.branches)]
            self._splits = [f.shape[1] for f in per[0]]
            feats = [np.concatenate([a, b], axis=1) for a, b in zip(*per)]
        return self.decoder.forward(feats)

    def backward(self, g):
        """Backpropagate dL/dlogits; returns dL/dinput."""
        grads = self.decoder.backward(g)
        cfg = self.cfg
        if cfg.fusion == FusionScheme.EARLY:
            return self.branches[0].stem.backward(self.encoder.backward(grads))
        if cfg.fusion == FusionScheme.MIDDLE:
            gin = self.encoder.backward(grads)
            k = self._split
            outs = [self.branches[0].stem.backward(gin[:, :k]), self.branches[1].stem.backward(gin[:, k:])]
            return np.concatenate(outs, axis=1)
        outs = []
        for i, b in enumerate(self.branches):
            sl = [gr[:, :k] if i == 0 else gr[:, k:] for gr, k in zip(grads, self._splits)]
            outs.append(b.stem.backward(b.encoder.backward(sl)))
        return np.concatenate(outs, axis=1)


def build_edgenet(cfg: NetworkConfig, dtype=np.float32) -> EdgeNet:
    return EdgeNet(cfg, dtype)
