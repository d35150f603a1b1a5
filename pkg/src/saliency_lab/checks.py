"""Finite-difference checks of every differentiable primitive and loss.

Each case wraps its inputs as :class:`Parameter` objects and reduces the
primitive's output to a scalar through a fixed random projection, so every
input coordinate gets a distinct, nonzero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import loss as L
from .autodiff import GradcheckReport, Graph, Parameter, gradcheck


@dataclass
class Case:
    name: str
    params: list[Parameter]
    builder: Callable[[Graph], ad.Node]
    skip: Callable | None = None


def _project(node: ad.Node, weights: np.ndarray) -> ad.Node:
    return ad.total(ad.mul(node, node.graph.constant(weights)))


def _leaves(graph: Graph, params):
    return [graph.parameter(p) for p in params]


def cases(seed: int = 0) -> list[Case]:
    rng = np.random.default_rng(seed)
    out = []

    def P(name, shape, lo=-1.0, hi=1.0):
        return Parameter(name, rng.uniform(lo, hi, shape))

    # conv2d: stride 1 pad 1, and stride 2 pad 0
    for stride, pad in ((1, 1), (2, 0)):
        x, w, b = P("x", (2, 3, 6, 5)), P("w", (4, 3, 3, 3)), P("b", (4,))
        ho, wo = (6 + 2 * pad - 3) // stride + 1, (5 + 2 * pad - 3) // stride + 1
        r = rng.normal(size=(2, 4, ho, wo))
        out.append(Case(
            f"conv2d[s{stride},p{pad}]", [x, w, b],
            lambda g, x=x, w=w, b=b, r=r, s=stride, p=pad: _project(ad.conv2d(*_leaves(g, (x, w, b)), s, p), r),
        ))

    x = P("x", (2, 3, 4, 6))
    r = rng.normal(size=(2, 3, 2, 3))
    out.append(Case("maxpool2", [x], lambda g, x=x, r=r: _project(ad.maxpool2(g.parameter(x)), r)))

    x = P("x", (2, 2, 3, 2))
    r = rng.normal(size=(2, 2, 6, 4))
    out.append(Case("upsample2", [x], lambda g, x=x, r=r: _project(ad.upsample2(g.parameter(x)), r)))

    x, w, b = P("x", (3, 5)), P("w", (4, 5)), P("b", (4,))
    r = rng.normal(size=(3, 4))
    out.append(Case("dense", [x, w, b], lambda g, x=x, w=w, b=b, r=r: _project(ad.dense(*_leaves(g, (x, w, b))), r)))

    for kind in ("relu", "sigmoid", "tanh"):
        x = P("x", (2, 3, 4), -3.0, 3.0)
        r = rng.normal(size=(2, 3, 4))
        # relu has no derivative at 0 and finite differences straddle the kink nearby
        skip = (lambda p, ix: abs(p.value[ix]) < 1e-3) if kind == "relu" else None
        out.append(Case(kind, [x], lambda g, x=x, r=r, k=kind: _project(ad.activate(g.parameter(x), k), r), skip))

    x = P("x", (1, 1, 8, 4), 0.0, 1.0)
    r = rng.normal(size=(1, 1, 2, 1))
    out.append(Case("downsample_map[4]", [x], lambda g, x=x, r=r: _project(L.downsample_map(g.parameter(x), 4), r)))

    pred, target = P("pred", (2, 1, 4, 4), 0.05, 0.95), P("target", (2, 1, 4, 4), 0.0, 1.0)
    out.append(Case("mse", [pred, target], lambda g, p=pred, t=target: L.mse(*_leaves(g, (p, t)))))
    out.append(Case("bce", [pred, target], lambda g, p=pred, t=target: L.bce(*_leaves(g, (p, t)))))

    d_out = P("disc_out", (3, 1), 0.1, 0.9)
    pred2 = P("pred", (3, 1, 4, 4), 0.05, 0.95)
    tgt2 = rng.uniform(0, 1, (3, 1, 4, 4))

    def gen_adv(g, d=d_out, p=pred2, t=tgt2):
        content = L.bce(g.parameter(p), g.constant(t))
        return L.generator_adv_loss(g.parameter(d), content, 0.005)

    out.append(Case("generator_adv_loss", [d_out, pred2], gen_adv))

    d_real, d_fake = P("d_real", (3, 1), 0.1, 0.9), P("d_fake", (3, 1), 0.1, 0.9)
    out.append(Case("discriminator_loss", [d_real, d_fake],
                    lambda g, a=d_real, b=d_fake: L.discriminator_loss(*_leaves(g, (a, b)))))

    # small conv -> relu -> pool -> dense -> sigmoid -> bce composite
    w1, b1 = P("conv.w", (3, 2, 3, 3)), P("conv.b", (3,), -0.1, 0.1)
    w2, b2 = P("fc.w", (1, 12), -0.5, 0.5), P("fc.b", (1,), -0.1, 0.1)
    xin = rng.uniform(0, 1, (2, 2, 4, 4))

    def composite(g, w1=w1, b1=b1, w2=w2, b2=b2, xin=xin):
        h = ad.relu(ad.conv2d(g.constant(xin), g.parameter(w1), g.parameter(b1), 1, 1))
        h = ad.flatten(ad.maxpool2(h))
        y = ad.sigmoid(ad.dense(h, g.parameter(w2), g.parameter(b2)))
        return L.discriminator_loss(y, y)

    out.append(Case("composite[conv-relu-pool-dense]", [w1, b1, w2, b2], composite))
    return out


def run_all(seed: int = 0, h: float = 1e-5, tol: float = 1e-4, max_coords: int = 24) -> list[tuple[str, GradcheckReport]]:
    return [
        (c.name, gradcheck(c.builder, c.params, seed=seed, h=h, tol=tol, max_coords=max_coords, skip=c.skip))
        for c in cases(seed)
    ]
