"""Pure numpy versions of the compiled kernels."""
import numpy as np


def pointwise_matvec(C, g):
    """out[a, b, r, p] = sum_c C[a, r, c, p] * g[a, b, c, p]."""
    Ba, Bg, R, P = g.shape
    out = np.zeros((Ba, Bg, R, P))
    for r in range(R):
        for c in range(R):
            out[:, :, r] += C[:, None, r, c] * g[:, :, c]
    return out


def direct_convolve(f, offsets, weights, periodic):
    M0, M1 = f.shape
    out = np.zeros((M0, M1))
    if periodic:
        for (d0, d1), w in zip(offsets, weights):
            out += w * np.roll(f, (int(d0), int(d1)), axis=(0, 1))
        return out
    for (d0, d1), w in zip(offsets, weights):
        d0, d1 = int(d0), int(d1)
        # destination rows i with 0 <= i - d0 < M0
        i0, i1 = max(0, d0), min(M0, M0 + d0)
        j0, j1 = max(0, d1), min(M1, M1 + d1)
        if i0 >= i1 or j0 >= j1:
            continue
        out[i0:i1, j0:j1] += w * f[i0 - d0:i1 - d0, j0 - d1:j1 - d1]
    return out
