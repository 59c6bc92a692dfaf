"""Random data builders and independent oracles shared by the test modules.

The oracle functions here evaluate the basic dissimilarities straight from
their definitions, one member at a time, without touching the package's
aggregate machinery.
"""

import math

import numpy as np

from symclust import Schema, SymbolicObject

KINDS = ("d1", "d2", "d3", "d4", "d5", "d6")
SCHEMES = ("per-variable-n", "ones", "custom")


def random_unit(rng, uid, arities, scheme="per-variable-n", sparsity=0.3, max_count=9):
    """Integer frequencies with some empty categories; at least one count per variable."""
    fs = []
    for k in arities:
        f = rng.integers(0, max_count + 1, size=k).astype(float)
        f[rng.random(k) < sparsity] = 0.0
        if f.sum() == 0:
            f[rng.integers(k)] = 1.0 + rng.integers(max_count)
        fs.append(f)
    if scheme == "per-variable-n":
        w = None
    elif scheme == "ones":
        w = 1.0
    elif scheme == "custom":
        w = [rng.uniform(0.2, 3.0, size=k) for k in arities]
    else:
        raise ValueError(scheme)
    return SymbolicObject.from_frequencies(uid, fs, w=w)


def random_cluster(rng, size, arities, scheme=None, prefix="x", sparsity=0.3):
    scheme = SCHEMES[rng.integers(len(SCHEMES))] if scheme is None else scheme
    return [random_unit(rng, f"{prefix}{i}", arities, scheme, sparsity) for i in range(size)]


def random_arities(rng, max_vars=3, max_k=5):
    return [int(rng.integers(1, max_k + 1)) for _ in range(int(rng.integers(1, max_vars + 1)))]


def random_schema(rng, arities):
    return Schema.simple(arities, alpha=rng.uniform(0.1, 2.0, size=len(arities)).tolist())


def ref_delta(kind, p, t):
    """Basic dissimilarity of one member value ``p`` against leader value ``t``.

    Members with ``p = 0`` contribute 0 under d4-d6; under d2, d3 and d6 a
    positive ``p`` against ``t = 0`` is infinite.
    """
    if kind == "d1":
        return (p - t) ** 2
    if kind in ("d4", "d5", "d6") and p == 0:
        return 0.0
    if kind in ("d2", "d3", "d6") and t == 0:
        return 0.0 if p == 0 else math.inf
    if kind == "d2":
        return ((p - t) / t) ** 2
    if kind == "d3":
        return (p - t) ** 2 / t
    if kind == "d4":
        return ((p - t) / p) ** 2
    if kind == "d5":
        return (p - t) ** 2 / p
    if kind == "d6":
        return (p - t) ** 2 / (p * t)
    raise ValueError(kind)


def ref_object_dissim(x, T, alpha, kind):
    total = 0.0
    for i, a in enumerate(alpha):
        if a == 0:
            continue
        for p, w, t in zip(x.p[i], x.w[i], T.t[i]):
            if w > 0:
                total += a * w * ref_delta(kind, float(p), float(t))
    return total


def component_objective(kind, p, w, t):
    """``g_j(t) = Σ_x w_xj δ(p_xj, t)`` for members x components arrays ``p``, ``w``.

    ``t`` has shape ``(k, m)``: ``m`` candidate values for each component.
    Returns the ``(k, m)`` objective values.
    """
    p = np.asarray(p, dtype=float)[:, :, None]
    w = np.asarray(w, dtype=float)[:, :, None]
    t = np.asarray(t, dtype=float)[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "d1":
            d = (p - t) ** 2
        elif kind == "d2":
            d = np.where(t > 0, ((p - t) / t) ** 2, np.where(p > 0, np.inf, 0.0))
        elif kind == "d3":
            d = np.where(t > 0, (p - t) ** 2 / t, np.where(p > 0, np.inf, 0.0))
        elif kind == "d4":
            d = np.where(p > 0, ((p - t) / p) ** 2, 0.0)
        elif kind == "d5":
            d = np.where(p > 0, (p - t) ** 2 / p, 0.0)
        else:
            d = np.where(p > 0, np.where(t > 0, (p - t) ** 2 / (p * t), np.inf), 0.0)
        return np.where(w > 0, w * d, 0.0).sum(axis=0)


INV_PHI = (math.sqrt(5) - 1) / 2


def numeric_minimizer(kind, p, w, margin=0.05, grid=1001, xtol=1e-12):
    """Per-component minimiser of ``g_j``: grid search, then golden-section refinement.

    ``p`` and ``w`` are members x components.  The search interval of
    component ``j`` is ``[0, max_x p_xj (1 + margin)]``.
    """
    p = np.asarray(p, dtype=float)
    w = np.asarray(w, dtype=float)
    k = p.shape[1]
    hi = np.max(p, axis=0) * (1 + margin)
    ts = np.linspace(0.0, 1.0, grid)[None, :] * hi[:, None]
    g = component_objective(kind, p, w, ts)
    idx = np.argmin(g, axis=1)
    rows = np.arange(k)
    a = ts[rows, np.maximum(idx - 1, 0)]
    b = ts[rows, np.minimum(idx + 1, grid - 1)]
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    while np.max(b - a) > xtol:
        gc, gd = component_objective(kind, p, w, np.stack([c, d], axis=1)).T
        left = gc <= gd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - INV_PHI * (b - a)
        d = a + INV_PHI * (b - a)
    mid = (a + b) / 2
    # the grid point itself may be best when the minimum sits on the boundary
    candidates = np.stack([mid, ts[rows, idx]], axis=1)
    values = component_objective(kind, p, w, candidates)
    return candidates[rows, np.argmin(values, axis=1)]


def relative_gap(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale
