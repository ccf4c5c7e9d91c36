"""Independent reference implementations used only by the tests.

Nothing here imports the package's solver code; the routes are dense
matrices built from scratch.
"""
import numpy as np
import scipy.linalg as sla


def cot_diff_matrix(N):
    """Periodic spectral differentiation on N equispaced nodes of [0, 1)."""
    j = np.arange(N)
    d = j[:, None] - j[None, :]
    D = np.zeros((N, N))
    off = d != 0
    D[off] = np.pi * (-1.0) ** d[off] / np.tan(np.pi * d[off] / N)
    return D


def truncation_matrix(N):
    """Removes the Nyquist mode, built from the explicit DFT matrix."""
    j = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(j, j) / N)
    keep = np.ones(N)
    keep[N // 2] = 0.0
    T = (F.conj().T @ np.diag(keep) @ F) / N
    return T.real


def dense_stokes(a, N, flux=None, force=None):
    """Solve the truncated collocation Stokes system densely (n = 2).

    a: array (2, 2, 2, 2, N, N) or constant (2, 2, 2, 2).
    flux: G[alpha, i, N, N]; force: f[alpha, N, N].
    Returns u[alpha, N, N], p[N, N].
    """
    n = 2
    P = N * N
    I1 = np.eye(N)
    D1 = cot_diff_matrix(N)
    D = [np.kron(D1, I1), np.kron(I1, D1)]
    T1 = truncation_matrix(N)
    T = np.kron(T1, T1)
    a = np.asarray(a, float)
    if a.ndim == 4:
        a = a[..., None, None] * np.ones((N, N))
    af = a.reshape(n, n, n, n, P)
    # operator blocks L[alpha][beta]
    L = [[np.zeros((P, P)) for _ in range(n)] for _ in range(n)]
    for al in range(n):
        for be in range(n):
            for i in range(n):
                for j in range(n):
                    L[al][be] -= D[i] @ (af[i, j, al, be][:, None] * D[j])
    F = np.zeros((n, P))
    if force is not None:
        F += np.asarray(force).reshape(n, P)
    if flux is not None:
        G = np.asarray(flux).reshape(n, n, P)
        for al in range(n):
            for i in range(n):
                F[al] -= D[i] @ G[al, i]
    rows, rhs = [], []
    Z = np.zeros((P, P))
    for al in range(n):
        blk = [T @ L[al][be] for be in range(n)] + [T @ D[al]]
        rows.append(np.hstack(blk))
        rhs.append(T @ F[al])
    rows.append(np.hstack([D[0], D[1], Z]))
    rhs.append(np.zeros(P))
    E = np.eye(P) - T
    for c in range(n + 1):
        blk = [Z] * (n + 1)
        blk[c] = E
        rows.append(np.hstack(blk))
        rhs.append(np.zeros(P))
        m = np.zeros((1, (n + 1) * P))
        m[0, c * P:(c + 1) * P] = 1.0 / P
        rows.append(m)
        rhs.append(np.zeros(1))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    x = sla.lstsq(A, b, lapack_driver="gelsd")[0]
    return x[:n * P].reshape(n, N, N), x[n * P:].reshape(N, N)


def moulinec_suquet_effective(a, N, tol=1e-13, maxiter=20000):
    """Single-scale homogenized tensor by the basic fixed-point FFT scheme.

    a: (2, 2, 2, 2, N, N). For each unit load E = e_k (x) e_beta the
    compatible, incompressible strain e solves e = E - Gamma0 (a - c0) e;
    the effective tensor is the mean of a e.
    """
    n = 2
    k1 = np.fft.fftfreq(N, 1.0 / N)
    kk = np.stack(np.meshgrid(k1, k1, indexing="ij"))
    keep = (np.abs(kk[0]) != N // 2) & (np.abs(kk[1]) != N // 2)
    k2 = (kk ** 2).sum(0)
    nz = keep & (k2 > 0)
    M = np.moveaxis(a, (0, 1, 2, 3), (1, 3, 0, 2)).reshape(n * n, n * n, N, N)
    S = 0.5 * (M + np.swapaxes(M, 0, 1))
    ev = np.linalg.eigvalsh(np.moveaxis(S, (0, 1), (-2, -1)))
    c0 = 0.5 * (ev.min() + ev.max())
    out = np.zeros((n,) * 4)
    for kidx in range(n):
        for be in range(n):
            E = np.zeros((n, n))  # E[alpha, j]: displacement-gradient load
            E[be, kidx] = 1.0
            e = np.broadcast_to(E[:, :, None, None], (n, n, N, N)).copy()
            for it in range(maxiter):
                s = np.einsum("ijabxy,bjxy->aixy", a, e) - c0 * e  # tau[alpha, i]
                sh = np.fft.fft2(s)
                # Gamma0 for incompressible field, isotropic reference c0
                ks = np.where(nz, k2, 1.0)
                # div tau -> polarization force, projected on div-free fields
                f = np.einsum("ixy,aixy->axy", kk, sh)
                kf = np.einsum("axy,axy->xy", kk, f) / ks
                pf = f - kk * kf
                uh = pf / (c0 * ks)
                eh = np.einsum("axy,jxy->ajxy", uh, kk) * nz
                e_new = E[:, :, None, None] - np.real(np.fft.ifft2(eh))
                if np.abs(e_new - e).max() < tol:
                    e = e_new
                    break
                e = e_new
            sig = np.einsum("ijabxy,bjxy->aixy", a, e).mean(axis=(-2, -1))
            for i in range(n):
                for al in range(n):
                    out[i, kidx, al, be] = sig[al, i]
    return out
