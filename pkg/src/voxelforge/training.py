"""Training loop and inference for EdgeNet on prepared samples."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericError, ShapeMismatchError
from .labels import LabelVolume
from .network.layers import one_hot, weighted_cce_logits
from .network.model import EdgeNet, FusionScheme, NetworkConfig
from .network.optim import CYCLE_EPOCHS, OptimState, one_cycle_lr, sgd_momentum_step
from .occupancy import balance_weights

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    fusion: FusionScheme = FusionScheme.EARLY
    epochs: int = 30
    batch: int = 3
    seed: int = 0
    one_cycle: bool = True  # False keeps the starting rate throughout
    base_lr: float = 0.01
    base_channels: int = 16
    levels: int = 2
    dilations: tuple = (1, 2)
    zero_edges: bool = False
    clip_norm: float | None = 1.0  # global gradient norm cap; None disables
    max_steps: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fusion = FusionScheme.parse(self.fusion)
        self.dilations = tuple(self.dilations)
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be >= 1")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def network_config(self, input_dims) -> NetworkConfig:
        return NetworkConfig(self.base_channels, self.levels, self.dilations, self.fusion, tuple(input_dims), seed=self.seed)

    def to_dict(self):
        d = asdict(self)
        d["fusion"] = self.fusion.value
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def learning_rate(run: RunConfig, epoch: float) -> float:
    """The one-cycle schedule stretched over ``run.epochs`` (exact when epochs = 30)."""
    if not run.one_cycle:
        return run.base_lr
    return one_cycle_lr(CYCLE_EPOCHS * epoch / run.epochs)


@dataclass
class LogLine:
    step: int
    epoch: float
    lr: float
    loss: float

    def __str__(self):
        return f"step={self.step} epoch={self.epoch:.6f} lr={self.lr:.9g} loss={self.loss:.9g}"


def batch_arrays(samples, zero_edges=False):
    x = np.stack([s.inputs(zero_edges) for s in samples])
    y = one_hot(np.stack([s.gt.values for s in samples]))  # IGNORE maps to all zeros
    occ = np.stack([s.grid.values for s in samples])
    return x, y, occ


def clip_gradients(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the norm before."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
    if max_norm is not None and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


def train_step(net: EdgeNet, state: OptimState, x, y, occ, seed, lr, clip_norm=None):
    """One weighted SGD step; returns the loss normalized by the kept-voxel count."""
    w = balance_weights(occ, seed)
    norm = max(float(w.sum()), 1.0)
    net.zero_grad()
    logits = net.forward(x)
    loss, g = weighted_cce_logits(logits, y, w)
    loss /= norm
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    net.backward((g / norm).astype(logits.dtype, copy=False))
    params = [v for _, v, _ in net.named_params()]
    grads = [gr for _, _, gr in net.named_params()]
    if not np.isfinite(clip_gradients(grads, clip_norm)):
        raise NumericError("non-finite gradient")
    sgd_momentum_step(params, grads, state, lr)
    return loss


def train(samples, run: RunConfig, net: EdgeNet | None = None, on_step=None):
    """Train on a list of PreparedSample; returns (net, list of LogLine).

    Batches are drawn from a per-epoch shuffle; loss weights are resampled
    every step from a seed derived from (run.seed, step).
    """
    if not samples:
        raise ValueError("need at least one sample")
    dims = samples[0].surface.values.shape
    if net is None:
        net = EdgeNet(run.network_config(dims))
    elif tuple(net.cfg.input_dims) != tuple(dims):
        raise ShapeMismatchError(f"network expects {net.cfg.input_dims}, samples are {dims}")
    if tuple(samples[0].gt.values.shape) != net.cfg.output_dims:
        raise ShapeMismatchError("label grid does not match the network output grid")

    rng = np.random.default_rng(run.seed)
    per_epoch = -(-len(samples) // run.batch)
    total = run.epochs * per_epoch if run.max_steps is None else run.max_steps
    state = OptimState.for_params([v for _, v, _ in net.named_params()])
    history = []
    step = 0
    while step < total:
        order = rng.permutation(len(samples))
        for start in range(0, len(order), run.batch):
            if step >= total:
                break
            epoch = run.epochs * step / total  # schedule spans the whole run
            lr = learning_rate(run, epoch)
            x, y, occ = batch_arrays([samples[i] for i in order[start : start + run.batch]], run.zero_edges)
            loss = train_step(net, state, x, y, occ, [run.seed, step], lr, run.clip_norm)
            line = LogLine(step, epoch, lr, loss)
            history.append(line)
            log.debug("%s", line)
            if on_step is not None:
                on_step(line)
            step += 1
    return net, history


def predict(net: EdgeNet, sample, zero_edges=False) -> LabelVolume:
    """Argmax over the class channel, on the output grid."""
    logits = net.forward(sample.inputs(zero_edges)[None])
    return LabelVolume(np.argmax(logits[0], axis=0).astype(np.uint8), sample.gt.spec)
