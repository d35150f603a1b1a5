"""Content and adversarial losses.

Every function accepts either graph nodes (during training, so gradients flow)
or plain arrays/floats (evaluated on a throwaway graph). The result is always
a scalar :class:`~saliency_lab.autodiff.Node`; ``float(result)`` gives the value
in nats.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import tensor as T
from .autodiff import BCE_EPS, Graph, Node

DOWNSAMPLE_FACTORS = (1, 2, 4, 8)


def _nodes(*xs):
    graph = next((x.graph for x in xs if isinstance(x, Node)), None) or Graph()
    return graph, [x if isinstance(x, Node) else graph.constant(x) for x in xs]


def mse(pred, target) -> Node:
    """Mean squared error over every pixel of every map in the batch."""
    _, (p, t) = _nodes(pred, target)
    return ad.squared_error(p, t)


def bce(pred, target, eps: float = BCE_EPS) -> Node:
    """Pixel-averaged binary cross entropy with predictions clamped to [eps, 1-eps]."""
    _, (p, t) = _nodes(pred, target)
    return ad.cross_entropy(p, t, eps)


def downsample_map(saliency, factor: int):
    """Average-pool a map by ``factor`` in both spatial directions.

    Works on arrays (returns an array) and on graph nodes (returns a node).
    """
    if factor not in DOWNSAMPLE_FACTORS:
        raise ValueError(f"downsample factor must be one of {DOWNSAMPLE_FACTORS}, got {factor}")
    if isinstance(saliency, Node):
        return saliency if factor == 1 else ad.avgpool(saliency, factor)
    return T.avgpool(saliency, factor)


def content_loss(pred, target, kind: str = "bce") -> Node:
    if kind == "bce":
        return bce(pred, target)
    if kind == "mse":
        return mse(pred, target)
    raise ValueError(f"unknown content loss {kind!r}")


def generator_adv_loss(disc_out, content_bce, alpha: float) -> Node:
    """``alpha * content_bce + BCE(disc_out, 1)``: the generator's adversarial objective.

    Only the generator's parameters should be trainable in the graph holding
    ``disc_out``; the discriminator's weights are read as constants.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    graph, (d, c) = _nodes(disc_out, content_bce)
    fool = ad.cross_entropy(d, graph.constant(np.ones_like(d.value)))
    return ad.add(ad.scale(c, alpha), fool)


def discriminator_loss(d_real, d_fake) -> Node:
    """``BCE(d_real, 1) + BCE(d_fake, 0)``."""
    graph, (r, f) = _nodes(d_real, d_fake)
    real = ad.cross_entropy(r, graph.constant(np.ones_like(r.value)))
    fake = ad.cross_entropy(f, graph.constant(np.zeros_like(f.value)))
    return ad.add(real, fake)
