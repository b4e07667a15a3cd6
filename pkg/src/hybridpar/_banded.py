"""Block-banded matrices for coupled species on a 1D node chain.

``data[k + K, j, i, l]`` holds ``A[(j, i), (j + k, l)]``: the coupling of
species ``i`` at node ``j`` with species ``l`` at node ``j + k``.  Vectors are
``(n_nodes, n_species)`` arrays; unknowns are interleaved node-major, which
keeps the LAPACK bandwidth at ``K*m + m - 1``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit
from scipy.linalg import solve_banded


@njit(cache=True)
def _block_band_solve(data, rhs):
    """Banded Gaussian elimination without pivoting on the block layout.

    Returns the solution and the smallest relative pivot; callers fall back to
    a pivoting solver when it is tiny.
    """
    nb, n, m, _ = data.shape
    K = (nb - 1) // 2
    bw = K * m + m - 1
    N = n * m
    r_cols = rhs.shape[1]
    ab = np.zeros((N, 2 * bw + 1))
    for kk in range(nb):
        k = kk - K
        for j in range(n):
            jj = j + k
            if jj < 0 or jj >= n:
                continue
            for i in range(m):
                row = j * m + i
                for l in range(m):
                    ab[row, jj * m + l - row + bw] = data[kk, j, i, l]
    b = rhs.copy()
    scale = 0.0
    for r in range(N):
        scale = max(scale, abs(ab[r, bw]))
    min_piv = np.inf
    for p in range(N):
        piv = ab[p, bw]
        rel = abs(piv) / scale if scale > 0 else 0.0
        if rel < min_piv:
            min_piv = rel
        if piv == 0.0:
            return b, 0.0
        last = min(p + bw, N - 1)
        for r in range(p + 1, last + 1):
            f = ab[r, p - r + bw] / piv
            if f != 0.0:
                for c in range(p + 1, last + 1):
                    ab[r, c - r + bw] -= f * ab[p, c - p + bw]
                for q in range(r_cols):
                    b[r, q] -= f * b[p, q]
    for p in range(N - 1, -1, -1):
        last = min(p + bw, N - 1)
        for q in range(r_cols):
            acc = b[p, q]
            for c in range(p + 1, last + 1):
                acc -= ab[p, c - p + bw] * b[c, q]
            b[p, q] = acc / ab[p, bw]
    return b, min_piv


@lru_cache(maxsize=32)
def _lapack_index(K, n, m):
    """Flat positions in the LAPACK band array, plus the valid-entry mask."""
    bw = K * m + m - 1
    k, j, i, l = np.meshgrid(np.arange(-K, K + 1), np.arange(n), np.arange(m),
                             np.arange(m), indexing="ij")
    valid = (j + k >= 0) & (j + k < n)
    row = bw - k * m + i - l
    col = (j + k) * m + l
    flat = (row * (n * m) + col)[valid]
    return bw, valid.ravel(), flat


class BlockBand:
    __slots__ = ("data",)

    def __init__(self, data):
        self.data = data

    @property
    def K(self):
        return (self.data.shape[0] - 1) // 2

    @property
    def n(self):
        return self.data.shape[1]

    @property
    def m(self):
        return self.data.shape[2]

    @classmethod
    def zeros(cls, K, n, m):
        return cls(np.zeros((2 * K + 1, n, m, m)))

    @classmethod
    def from_blocks(cls, blocks):
        """Node-diagonal matrix from ``blocks[i, l, node]``."""
        return cls(np.moveaxis(blocks, 2, 0)[None].copy())

    @classmethod
    def from_species_tridiag(cls, sub, diag, sup):
        """Species-decoupled tridiagonal matrix; each argument is ``(m, n)``.

        ``sub[i, j]`` couples node ``j`` with ``j - 1``.
        """
        m, n = diag.shape
        out = cls.zeros(1, n, m)
        ii = np.arange(m)
        out.data[0][:, ii, ii] = sub.T
        out.data[1][:, ii, ii] = diag.T
        out.data[2][:, ii, ii] = sup.T
        out.data[0, 0] = 0.0
        out.data[2, -1] = 0.0
        return out

    @classmethod
    def kron_tri(cls, op, m, scale=None):
        """``op`` (a scalar tridiagonal) acting on every species, scaled per species."""
        s = np.ones(m) if scale is None else np.asarray(scale, dtype=float)
        return cls.from_species_tridiag(np.outer(s, op.sub), np.outer(s, op.diag),
                                        np.outer(s, op.sup))

    def padded(self, K):
        if K == self.K:
            return self
        d = np.zeros((2 * K + 1,) + self.data.shape[1:])
        d[K - self.K:K + self.K + 1] = self.data
        return BlockBand(d)

    def __add__(self, other):
        K = max(self.K, other.K)
        return BlockBand(self.padded(K).data + other.padded(K).data)

    def __sub__(self, other):
        K = max(self.K, other.K)
        return BlockBand(self.padded(K).data - other.padded(K).data)

    def __mul__(self, c):
        return BlockBand(self.data * c)

    __rmul__ = __mul__

    def __neg__(self):
        return BlockBand(-self.data)

    def left_tri(self, op):
        """Product ``(op x I_species) @ self`` for a scalar tridiagonal ``op``."""
        K, n = self.K, self.n
        out = np.zeros((2 * K + 3,) + self.data.shape[1:])
        coef = {-1: op.sub, 0: op.diag, 1: op.sup}
        for d, c in coef.items():
            c = c[:, None, None]
            lo, hi = max(0, -d), min(n, n - d)
            for k in range(-K, K + 1):
                # row j couples through node j + d, then offset k relative to it
                out[k + d + K + 1, lo:hi] += c[lo:hi] * self.data[k + K, lo + d:hi + d]
        return BlockBand(out)

    def transpose(self):
        K, n = self.K, self.n
        out = np.zeros_like(self.data)
        for k in range(-K, K + 1):
            lo, hi = max(0, -k), min(n, n - k)
            out[k + K, lo:hi] = np.swapaxes(self.data[K - k, lo + k:hi + k], 1, 2)
        return BlockBand(out)

    @property
    def T(self):
        return self.transpose()

    def matvec(self, x):
        K, n = self.K, self.n
        y = np.zeros(x.shape)
        for k in range(-K, K + 1):
            lo, hi = max(0, -k), min(n, n - k)
            y[lo:hi] += np.einsum("jil,jl->ji", self.data[k + K, lo:hi], x[lo + k:hi + k])
        return y

    def to_lapack(self):
        K, n, m = self.K, self.n, self.m
        bw, valid, flat = _lapack_index(K, n, m)
        ab = np.zeros((2 * bw + 1, n * m))
        ab.flat[flat] = self.data.reshape(-1)[valid]
        return bw, ab

    def solve(self, rhs):
        """Solve ``A x = rhs`` for ``rhs`` of shape ``(n, m)`` or ``(n, m, r)``."""
        b = np.ascontiguousarray(rhs, dtype=float).reshape(self.n * self.m, -1)
        x, min_piv = _block_band_solve(np.ascontiguousarray(self.data), b)
        if not min_piv > 1e-10:
            bw, ab = self.to_lapack()
            x = solve_banded((bw, bw), ab, b, check_finite=False)
        return x.reshape(rhs.shape)

    def to_dense(self):
        K, n, m = self.K, self.n, self.m
        A = np.zeros((n * m, n * m))
        for k in range(-K, K + 1):
            for j in range(max(0, -k), min(n, n - k)):
                A[j * m:(j + 1) * m, (j + k) * m:(j + k + 1) * m] = self.data[k + K, j]
        return A
