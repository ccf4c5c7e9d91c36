"""Fourier collocation on the unit torus.

Derivatives are spectral, 2 pi i k, with every mode having some |k_d| = N/2
removed (the truncation T). Normalized spectra satisfy c_0 = mean.
"""
import numpy as np
import scipy.fft as sfft

from .fields import PeriodicGrid


class Spectral:
    """Real-FFT helpers for fields whose trailing axes are the grid axes."""

    def __init__(self, grid: PeriodicGrid, workers=None):
        self.grid = grid
        n, N = grid.dim, grid.points
        self.n, self.N = n, N
        self.axes = tuple(range(-n, 0))
        self.workers = workers
        ks = []
        for d in range(n):
            kd = np.fft.fftfreq(N, 1.0 / N) if d < n - 1 else np.arange(N // 2 + 1, dtype=float)
            sh = [1] * n
            sh[d] = -1
            ks.append(kd.reshape(sh))
        self.k = ks
        hshape = (N,) * (n - 1) + (N // 2 + 1,)
        nyq = np.zeros(hshape, dtype=bool)
        for kd in ks:
            nyq |= np.broadcast_to(np.abs(kd) == N // 2, hshape)
        self.keep = ~nyq
        k2 = sum(np.broadcast_to(kd, hshape) ** 2 for kd in ks)
        self.k2 = k2
        inv = np.zeros(hshape)
        ok = self.keep & (k2 > 0)
        inv[ok] = 1.0 / k2[ok]
        self.inv_k2 = inv
        self.hshape = hshape

    # transforms -----------------------------------------------------------
    def fwd(self, x):
        return sfft.rfftn(x, axes=self.axes, workers=self.workers)

    def inv(self, X):
        return sfft.irfftn(X, s=(self.N,) * self.n, axes=self.axes, workers=self.workers)

    def kvec(self):
        """Wavevector components stacked on a new leading axis (n, *hshape)."""
        return np.stack([np.broadcast_to(kd, self.hshape) for kd in self.k])

    # operators ------------------------------------------------------------
    def truncate(self, x):
        return self.inv(self.fwd(x) * self.keep)

    def grad_hat(self, X):
        """(..., *h) -> (..., n, *h): derivative index appended."""
        return np.stack([2j * np.pi * kd * self.keep * X for kd in self.k], axis=-self.n - 1)

    def grad(self, u):
        """Spectral gradient; output[..., j, *sp] = d_j u[..., *sp]."""
        return self.inv(self.grad_hat(self.fwd(u)))

    def div_hat(self, S):
        """(..., n, *h) -> (..., *h), sums over the derivative index."""
        out = 0
        for d, kd in enumerate(self.k):
            out = out + 2j * np.pi * kd * S[(Ellipsis, d) + (slice(None),) * self.n]
        return out * self.keep

    def div(self, s):
        return self.inv(self.div_hat(self.fwd(s)))

    def leray_hat(self, U):
        """Divergence-free projection of (..., n, *h) per mode."""
        kU = 0
        for d, kd in enumerate(self.k):
            kU = kU + kd * U[(Ellipsis, d) + (slice(None),) * self.n]
        kU = kU * self.inv_k2
        out = np.empty_like(U)
        for d, kd in enumerate(self.k):
            out[(Ellipsis, d) + (slice(None),) * self.n] = (
                U[(Ellipsis, d) + (slice(None),) * self.n] - kd * kU) * self.keep
        return out

    def inv_laplacian_hat(self, X):
        """Solve Delta u = x for mean-zero u: u_hat = -x_hat / (4 pi^2 |k|^2)."""
        return -X * self.inv_k2 / (4 * np.pi ** 2)

    def mean(self, x):
        return x.mean(axis=self.axes)

    def inner(self, a, b):
        """Grid average of a*b over spatial axes, summed over component axes."""
        return float(np.sum(a * b)) / self.grid.size


def to_spectrum(values, grid):
    """Normalized complex coefficients c_k with f = sum_k c_k exp(2 pi i k.x)."""
    axes = tuple(range(-grid.dim, 0))
    return np.fft.fftn(values, axes=axes) / grid.size


def from_spectrum(coeffs, grid):
    axes = tuple(range(-grid.dim, 0))
    return np.real(np.fft.ifftn(coeffs * grid.size, axes=axes))


def wavenumbers(grid):
    """Integer wavevectors matching ``to_spectrum`` ordering, shape (n, *shape)."""
    k1 = np.fft.fftfreq(grid.points, 1.0 / grid.points)
    return np.stack(np.meshgrid(*([k1] * grid.dim), indexing="ij"))
