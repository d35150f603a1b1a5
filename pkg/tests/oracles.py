"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np
from scipy.optimize import linprog

# Rows transcribed from the generator and discriminator tables:
# (name, out depth, kernel, pad) for convs, "pool"/"up" markers, ("fc", out) for dense.
# Generator conv1_1 is 3x3 as in VGG-16 (the printed row says 1x1); see the decisions ledger.
GEN_ROWS = [
    ("conv1_1", 64, 3, 1), ("conv1_2", 64, 3, 1), "pool",
    ("conv2_1", 128, 3, 1), ("conv2_2", 128, 3, 1), "pool",
    ("conv3_1", 256, 3, 1), ("conv3_2", 256, 3, 1), ("conv3_3", 256, 3, 1), "pool",
    ("conv4_1", 512, 3, 1), ("conv4_2", 512, 3, 1), ("conv4_3", 512, 3, 1), "pool",
    ("conv5_1", 512, 3, 1), ("conv5_2", 512, 3, 1), ("conv5_3", 512, 3, 1),
    ("conv6_1", 512, 3, 1), ("conv6_2", 512, 3, 1), ("conv6_3", 512, 3, 1), "up",
    ("conv7_1", 512, 3, 1), ("conv7_2", 512, 3, 1), ("conv7_3", 512, 3, 1), "up",
    ("conv8_1", 256, 3, 1), ("conv8_2", 256, 3, 1), ("conv8_3", 256, 3, 1), "up",
    ("conv9_1", 128, 3, 1), ("conv9_2", 128, 3, 1), "up",
    ("conv10_1", 64, 3, 1), ("conv10_2", 64, 3, 1),
    ("output", 1, 1, 0),
]
DISC_ROWS = [
    ("conv1_1", 3, 1, 0), ("conv1_2", 32, 3, 1), "pool",
    ("conv2_1", 64, 3, 1), ("conv2_2", 64, 3, 1), "pool",
    ("conv3_1", 64, 3, 1), ("conv3_2", 64, 3, 1), "pool",
    ("fc", 100), ("fc", 2), ("fc", 1),
]


def shape_oracle(rows, c, h, w):
    """Independent shape propagation: returns (final shape, per-layer param counts)."""
    counts = {}
    feat = None
    for row in rows:
        if row == "pool":
            h, w = h // 2, w // 2
        elif row == "up":
            h, w = h * 2, w * 2
        elif row[0] == "fc":
            feat = feat if feat is not None else c * h * w
            counts[f"fc{len(counts)}"] = feat * row[1] + row[1]
            feat = row[1]
        else:
            name, out, k, pad = row
            counts[name] = out * c * k * k + out
            c, h, w = out, h + 2 * pad - k + 1, w + 2 * pad - k + 1
    return ((feat,) if feat is not None else (c, h, w)), counts


def mann_whitney(pos, neg):
    # exhaustive pairwise oracle, ties counted half
    return np.mean([(p > n) + 0.5 * (p == n) for p in pos for n in neg])


def lp_emd(a, b):
    # independent exact transport oracle: dense LP over the full plan
    n = a.size
    h, w = a.shape
    ys, xs = np.divmod(np.arange(n), w)
    cost = np.hypot(xs[:, None] - xs[None], ys[:, None] - ys[None]).ravel()
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1
        rows[n + i, i::n] = 1
    res = linprog(cost, A_eq=rows, b_eq=np.concatenate([a.ravel() / a.sum(), b.ravel() / b.sum()]),
                  bounds=(0, None), method="highs-ds")
    assert res.status == 0
    return res.fun
