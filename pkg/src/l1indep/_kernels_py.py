"""Pure-NumPy fallback for the compiled pairwise kernel sums."""

import numpy as np

_CHUNK = 2048


def kernel_values(kind, u):
    """Univariate kernel ``kind`` (0 uniform, 1 Epanechnikov, 2 triangular) at ``u``."""
    u = np.asarray(u, dtype=np.float64)
    a = np.abs(u)
    inside = a <= 0.5
    if kind == 0:
        out = inside.astype(np.float64)
    elif kind == 1:
        out = np.where(inside, 1.5 * (1.0 - 4.0 * u * u), 0.0)
    elif kind == 2:
        out = np.where(inside, 2.0 * (1.0 - 2.0 * a), 0.0)
    else:
        raise ValueError(f"unknown kernel code {kind}")
    return out


def _block_weights(points, data, h, block, kinds, p):
    m, n = points.shape[0], data.shape[0]
    w = np.ones((p, m, n))
    for k in range(data.shape[1]):
        u = (points[:, k][:, None] - data[:, k][None, :]) / h[k]
        w[block[k]] *= kernel_values(kinds[k], u)
    return w


def kernel_sums(points, data, h, block, kinds, p, exclude_self):
    m = points.shape[0]
    joint = np.zeros(m)
    s1 = np.zeros((p, m))
    s2 = np.zeros((p, m))
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        w = _block_weights(points[start:stop], data, h, block, kinds, p)
        if exclude_self:
            rows = np.arange(stop - start)
            w[:, rows, rows + start] = 0.0
        joint[start:stop] = np.prod(w, axis=0).sum(axis=1)
        s1[:, start:stop] = w.sum(axis=2)
        s2[:, start:stop] = (w * w).sum(axis=2)
    return joint, s1, s2


def loo_criterion_terms(data, h, block, kinds, p, hblock, htotal):
    n = data.shape[0]
    nm1 = n - 1.0
    joint, s1, s2 = kernel_sums(data, data, h, block, kinds, p, True)
    hb = np.asarray(hblock)[:, None]
    fj = joint / (nm1 * htotal)
    marg = s1 / (nm1 * hb)
    v = s2 / (nm1 * hb * hb)
    g = (s1 * s1 - s2) / (nm1 * (nm1 - 1.0) * hb * hb)
    prod_f = np.prod(marg, axis=0)
    cross = np.zeros(n)
    for l in range(p):
        part = v[l].copy()
        for q in range(p):
            if q != l:
                part *= g[q]
        cross += part
    lhat = np.maximum(np.prod(v, axis=0) - cross + (p - 1.0) * np.prod(g, axis=0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (np.sqrt(n) * np.abs(fj - prod_f) - np.sqrt(2.0 / np.pi) * np.sqrt(lhat)) / prod_f
    terms[prod_f <= 0.0] = np.nan
    return terms
