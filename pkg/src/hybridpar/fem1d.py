"""P1 finite elements on an interval.

Meshes, the mass and stiffness operators, exact subdomain integration weights
and a Thomas solver for tridiagonal systems.  Operators are stored as three
diagonals of full length ``n``: ``sub[i] = A[i, i-1]`` (``sub[0] = 0``) and
``sup[i] = A[i, i+1]`` (``sup[-1] = 0``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInterval, InvalidMesh, SingularOperator

__all__ = [
    "SpatialMesh",
    "OperatorKind",
    "TriDiagOperator",
    "build_uniform_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "tridiag_solve",
    "subdomain_weight_vector",
]


@dataclass(frozen=True, eq=False)
class SpatialMesh:
    nodes: np.ndarray
    dirichlet_mask: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise InvalidMesh("a mesh needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidMesh("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        mask = np.asarray(self.dirichlet_mask, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "dirichlet_mask", mask)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def x_lo(self) -> float:
        return float(self.nodes[0])

    @property
    def x_hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def interior(self) -> np.ndarray:
        """Boolean mask of the unconstrained nodes."""
        return ~self.dirichlet_mask

    def indicator(self, interval) -> np.ndarray:
        """Nodal values of the indicator of the open interval ``(a, b)``."""
        a, b = interval
        return ((self.nodes > a) & (self.nodes < b)).astype(float)


def build_uniform_mesh(n_nodes: int, x_lo: float = 0.0, x_hi: float = 1.0) -> SpatialMesh:
    if n_nodes < 3:
        raise InvalidMesh(f"n_nodes must be >= 3, got {n_nodes}")
    if not x_lo < x_hi:
        raise InvalidMesh(f"empty domain ({x_lo}, {x_hi})")
    nodes = np.linspace(x_lo, x_hi, n_nodes)
    mask = np.zeros(n_nodes, dtype=bool)
    mask[[0, -1]] = True
    return SpatialMesh(nodes, mask)


class OperatorKind(Enum):
    MASS = "mass"
    STIFFNESS = "stiffness"
    COMPOSITE = "composite"


@dataclass(frozen=True, eq=False)
class TriDiagOperator:
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    kind: OperatorKind = OperatorKind.COMPOSITE

    def __post_init__(self):
        for name in ("sub", "diag", "sup"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.sub.shape == self.diag.shape == self.sup.shape):
            raise ValueError("diagonals must have equal length")

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply to ``v`` along its first axis (extra axes are batched)."""
        v = np.asarray(v, dtype=float)
        shape = (-1,) + (1,) * (v.ndim - 1)
        out = self.diag.reshape(shape) * v
        out[1:] += self.sub[1:].reshape(shape) * v[:-1]
        out[:-1] += self.sup[:-1].reshape(shape) * v[1:]
        return out

    __matmul__ = matvec

    def transpose(self) -> "TriDiagOperator":
        sub = np.zeros(self.n)
        sup = np.zeros(self.n)
        sub[1:] = self.sup[:-1]
        sup[:-1] = self.sub[1:]
        return TriDiagOperator(sub, self.diag, sup, self.kind)

    def scaled(self, c: float) -> "TriDiagOperator":
        return TriDiagOperator(c * self.sub, c * self.diag, c * self.sup, self.kind)

    def __add__(self, other: "TriDiagOperator") -> "TriDiagOperator":
        return TriDiagOperator(self.sub + other.sub, self.diag + other.diag,
                               self.sup + other.sup, OperatorKind.COMPOSITE)

    def restrict(self, keep: np.ndarray) -> "TriDiagOperator":
        """Submatrix on a contiguous block of kept nodes."""
        idx = np.flatnonzero(keep)
        if idx.size and np.any(np.diff(idx) != 1):
            raise ValueError("kept nodes must be contiguous")
        sub = self.sub[idx].copy()
        sup = self.sup[idx].copy()
        sub[0] = 0.0
        sup[-1] = 0.0
        return TriDiagOperator(sub, self.diag[idx], sup, self.kind)

    def with_dirichlet(self, mask: np.ndarray) -> "TriDiagOperator":
        """Identity rows and columns on masked nodes."""
        mask = np.asarray(mask, dtype=bool)
        sub, diag, sup = self.sub.copy(), self.diag.copy(), self.sup.copy()
        diag[mask] = 1.0
        sub[mask] = 0.0
        sup[mask] = 0.0
        # columns of masked nodes
        sup[:-1][mask[1:]] = 0.0
        sub[1:][mask[:-1]] = 0.0
        return TriDiagOperator(sub, diag, sup, self.kind)

    def to_dense(self) -> np.ndarray:
        return (np.diag(self.diag) + np.diag(self.sub[1:], -1)
                + np.diag(self.sup[:-1], 1))


def _assemble(mesh: SpatialMesh, local, kind) -> TriDiagOperator:
    h = mesh.widths
    a, b = local(h)  # element diagonal and off-diagonal entries
    n = mesh.n_nodes
    diag = np.zeros(n)
    diag[:-1] += a
    diag[1:] += a
    sub = np.zeros(n)
    sup = np.zeros(n)
    sub[1:] = b
    sup[:-1] = b
    return TriDiagOperator(sub, diag, sup, kind)


def assemble_mass(mesh: SpatialMesh) -> TriDiagOperator:
    """Consistent P1 mass matrix (no boundary elimination)."""
    return _assemble(mesh, lambda h: (h / 3.0, h / 6.0), OperatorKind.MASS)


def assemble_stiffness(mesh: SpatialMesh) -> TriDiagOperator:
    """P1 stiffness matrix of ``-d^2/dx^2`` (no boundary elimination)."""
    return _assemble(mesh, lambda h: (1.0 / h, -1.0 / h), OperatorKind.STIFFNESS)


def tridiag_solve(op: TriDiagOperator, rhs: np.ndarray) -> np.ndarray:
    """Thomas algorithm; ``rhs`` may carry extra trailing axes."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != op.n:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, operator has {op.n}")
    a, b, c = op.sub, op.diag, op.sup
    tiny = 1e-14 * max(np.max(np.abs(b)), np.finfo(float).tiny)
    n = op.n
    cp = np.empty(n)
    dp = np.empty(rhs.shape)
    piv = b[0]
    if abs(piv) < tiny:
        raise SingularOperator("zero pivot at row 0")
    cp[0] = c[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i] * cp[i - 1]
        if abs(piv) < tiny:
            raise SingularOperator(f"zero pivot at row {i}")
        cp[i] = c[i] / piv
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / piv
    x = dp
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def subdomain_weight_vector(mesh: SpatialMesh, interval) -> np.ndarray:
    """Weights ``w`` with ``w @ y == integral of the P1 interpolant of y over (a, b)``."""
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise InvalidInterval(f"empty interval ({a}, {b})")
    eps = 1e-12 * (mesh.x_hi - mesh.x_lo)
    if a < mesh.x_lo - eps or b > mesh.x_hi + eps:
        raise InvalidInterval(f"({a}, {b}) is not inside the domain")
    xl, xr = mesh.nodes[:-1], mesh.nodes[1:]
    h = xr - xl
    c = np.clip(a, xl, xr)
    d = np.clip(b, xl, xr)
    # integrals of the two hat functions over [c, d] within each element
    left = ((xr - c) ** 2 - (xr - d) ** 2) / (2 * h)
    right = ((d - xl) ** 2 - (c - xl) ** 2) / (2 * h)
    w = np.zeros(mesh.n_nodes)
    w[:-1] += left
    w[1:] += right
    return w
