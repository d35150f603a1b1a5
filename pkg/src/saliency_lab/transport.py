"""Exact discrete optimal transport by successive shortest augmenting paths.

The transport problem between supplies ``a`` and demands ``b`` with cost
matrix ``C`` is a min-cost flow on the complete bipartite graph. Each round
runs a dense Dijkstra over the residual graph (reduced costs kept
nonnegative by node potentials) from every supply node that still has mass,
then pushes as much flow as the path allows.
"""

from __future__ import annotations

import numpy as np

_MASS_TOL = 1e-15


def transport_cost(a, b, cost) -> tuple[float, np.ndarray]:
    """Minimum of ``sum(F * cost)`` over plans ``F >= 0`` with row sums ``a`` and column sums ``b``.

    ``a`` and ``b`` must be nonnegative with (numerically) equal totals.
    Returns the optimal cost and plan.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    cost = np.asarray(cost, dtype=np.float64)
    if cost.shape != (a.size, b.size):
        raise ValueError(f"cost shape {cost.shape} != {(a.size, b.size)}")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("masses must be nonnegative")
    if not np.isclose(a.sum(), b.sum(), rtol=1e-9, atol=1e-12):
        raise ValueError(f"unbalanced masses: {a.sum()} vs {b.sum()}")
    if (cost < 0).any():
        raise ValueError("costs must be nonnegative")

    n, m = a.size, b.size
    flow = np.zeros((n, m))
    supply = a.copy()
    demand = b.copy()
    pot_s = np.zeros(n)
    pot_t = np.zeros(m)
    inf = np.inf

    while supply.max(initial=0.0) > _MASS_TOL and demand.max(initial=0.0) > _MASS_TOL:
        dist_s = np.where(supply > _MASS_TOL, 0.0, inf)
        dist_t = np.full(m, inf)
        pred_s = np.full(n, -1)  # demand node we reached this supply node from
        pred_t = np.full(m, -1)  # supply node we reached this demand node from
        done_s = np.zeros(n, bool)
        done_t = np.zeros(m, bool)
        while True:
            cand_s = np.where(done_s, inf, dist_s)
            cand_t = np.where(done_t, inf, dist_t)
            i = int(cand_s.argmin())
            j = int(cand_t.argmin())
            if cand_s[i] == inf and cand_t[j] == inf:
                break
            if cand_s[i] <= cand_t[j]:
                done_s[i] = True
                reduced = cost[i] + pot_s[i] - pot_t
                alt = dist_s[i] + np.maximum(reduced, 0.0)
                better = (alt < dist_t) & ~done_t
                dist_t[better] = alt[better]
                pred_t[better] = i
            else:
                done_t[j] = True
                back = flow[:, j] > 0
                reduced = -cost[:, j] + pot_t[j] - pot_s
                alt = dist_t[j] + np.maximum(reduced, 0.0)
                better = back & (alt < dist_s) & ~done_s
                dist_s[better] = alt[better]
                pred_s[better] = j

        open_t = demand > _MASS_TOL
        sink = int(np.where(open_t, dist_t, inf).argmin())
        limit = dist_t[sink]
        pot_s += np.minimum(dist_s, limit)
        pot_t += np.minimum(dist_t, limit)

        # walk back from the sink to a source, collecting bottleneck capacity
        path = []
        j = sink
        amount = demand[sink]
        while True:
            i = pred_t[j]
            path.append((i, j))
            if pred_s[i] < 0:
                break
            j_prev = pred_s[i]
            amount = min(amount, flow[i, j_prev])
            path.append((i, -1 - j_prev))  # backward edge i <- j_prev
            j = j_prev
        source = path[-1][0]
        amount = min(amount, supply[source])
        for i, j in path:
            if j >= 0:
                flow[i, j] += amount
            else:
                flow[i, -1 - j] -= amount
        supply[source] -= amount
        demand[sink] -= amount

    np.maximum(flow, 0.0, out=flow)
    return float((flow * cost).sum()), flow


def grid_distances(height: int, width: int) -> np.ndarray:
    """Euclidean distances between all pairs of cell centres of a ``height`` x ``width`` grid."""
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))
