"""Slow reference implementations used as independent test oracles.

Each follows the textbook definition cell by cell and shares no code with
the library beyond the data containers.
"""

import math

import numpy as np

from sobodec.maximal import ball_volume


def forward_gradient(vals, h):
    """Forward differences of the zero extension, per axis, on the box."""
    vals = np.asarray(vals, float)
    out = []
    for a in range(vals.ndim):
        nxt = np.zeros_like(vals)
        idx = [slice(None)] * vals.ndim
        src = list(idx)
        src[a] = slice(1, None)
        idx[a] = slice(None, -1)
        nxt[tuple(idx)] = vals[tuple(src)]
        out.append((nxt - vals) / h)
    return np.stack(out)


def radius_schedule(dom):
    """Same rule as the library default: h/2, then (m + 1/2) h with m ~ x1.5."""
    h = dom.h
    radii = [h / 2]
    m = 1
    while True:
        r = (m + 0.5) * h
        radii.append(r)
        if r >= dom.box_diameter:
            return radii
        m = max(m + 1, int(round(m * 1.5)))


def maximal(dom, a, radii=None):
    radii = radius_schedule(dom) if radii is None else radii
    x = dom.centers().reshape(dom.N, -1).T
    flat = np.asarray(a, float).ravel()
    out = np.zeros(flat.size)
    for i in range(flat.size):
        d = np.sqrt(np.sum((x - x[i]) ** 2, axis=1))
        for r in radii:
            s = flat[d <= r].sum() * dom.cell_volume
            out[i] = max(out[i], s / ball_volume(dom.N, r))
    return out.reshape(dom.shape)


def distance(dom):
    # integer offsets times h: center differences would add rounding
    idx = np.indices(dom.shape).reshape(dom.N, -1).T
    ext = idx[~dom.mask.ravel()]
    out = np.zeros(idx.shape[0])
    for i in np.flatnonzero(dom.mask.ravel()):
        out[i] = np.sqrt(np.sum((ext - idx[i]) ** 2, axis=1)).min() * dom.h
    return out.reshape(dom.shape)


def truncate_scalar(u, lam, cbar=2.0, c_omega=1.0):
    """Brute-force boundary-preserving Lipschitz truncation of a scalar u.

    Returns ``(u_hat, good_hat)``. Steps: good set of the maximal function
    of ``|u| + |grad u|``, inf/sup-convolution over good cells, clamp by the
    distance cap.
    """
    dom = u.domain
    h = dom.h
    vals = u.values[0]
    g = forward_gradient(vals, h)
    v = np.abs(vals) + np.sqrt(np.sum(g * g, axis=0))
    good = maximal(dom, v) <= lam if v.any() else np.ones(dom.shape, bool)
    K = cbar * lam
    x = dom.centers().reshape(dom.N, -1).T
    gi = np.flatnonzero(good.ravel())
    flat = vals.ravel()
    ubar = np.zeros(flat.size)
    for i in range(flat.size):
        if good.ravel()[i]:
            ubar[i] = flat[i]
        elif gi.size:
            lo, hi = math.inf, -math.inf
            for j in gi:
                d = math.sqrt(float(np.sum((x[i] - x[j]) ** 2)))
                lo = min(lo, flat[j] + K * d)
                hi = max(hi, flat[j] - K * d)
            ubar[i] = 0.5 * (lo + hi)
    ubar = ubar.reshape(dom.shape)
    cap = cbar * lam * c_omega * distance(dom)
    uhat = np.minimum(np.maximum(ubar, -cap), cap)
    good_hat = good & (np.abs(ubar) <= cap) & dom.mask
    return uhat, good_hat


def concentration_exhaustive(a, cell, delta):
    """Max over every cell subset S with |S| <= delta of sum_S a, plus the
    leftover measure filled by a fraction of the best cell outside S."""
    a = np.ravel(np.asarray(a, float))
    n = a.size
    budget = delta / cell
    order = np.argsort(-a, kind="stable")
    best = -math.inf
    masks = np.arange(1 << n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    count = bits.sum(axis=1)
    ok = count <= budget
    bits, count = bits[ok], count[ok]
    sums = bits.astype(float) @ a
    out_best = np.zeros(len(bits))
    found = np.zeros(len(bits), bool)
    for j in order:
        take = ~found & ~bits[:, j]
        out_best[take] = a[j]
        found |= take
    frac = np.clip(budget - count, 0.0, 1.0)
    best = float(np.max(sums + frac * out_best))
    return best
