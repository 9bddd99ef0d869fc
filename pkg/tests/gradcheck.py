"""Central finite differences for the layer gradient checks."""

import numpy as np

EPS = 1e-5


def numeric_grad(f, x, eps=EPS):
    """d f / d x for scalar ``f`` by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        hi = f()
        x[i] = old - eps
        lo = f()
        x[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def rel_error(a, b):
    """||a - b|| / max(||a||, ||b||), zero when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def naive_conv3d(x, w, b, stride=1, dilation=1, padding=0):
    n, ci, d, h, wd = x.shape
    co, _, kd, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0)) + ((padding, padding),) * 3)
    od = (d + 2 * padding - dilation * (kd - 1) - 1) // stride + 1
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (wd + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((n, co, od, oh, ow))
    for bn in range(n):
        for o in range(co):
            for i in range(od):
                for j in range(oh):
                    for k in range(ow):
                        acc = b[o]
                        for c in range(ci):
                            for a in range(kd):
                                for e in range(kh):
                                    for f in range(kw):
                                        acc += w[o, c, a, e, f] * xp[
                                            bn, c, i * stride + a * dilation, j * stride + e * dilation, k * stride + f * dilation
                                        ]
                        out[bn, o, i, j, k] = acc
    return out
