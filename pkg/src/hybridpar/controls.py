"""Controls: nodal in space, piecewise constant on pseudo-time intervals."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .fem1d import SpatialMesh, assemble_mass
from .timemap import PseudoTimeGrid

__all__ = ["ControlField", "control_bounds", "control_weights", "write_control_csv",
           "read_control_csv"]

CONTROL_COLUMNS = ("interval", "s", "t", "component", "x", "value")


@dataclass(frozen=True, eq=False)
class ControlField:
    """``values[interval, component, node]`` on a pseudo-time grid."""

    grid: PseudoTimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != self.grid.n_steps:
            raise DimensionMismatch(
                f"control values must be (n_steps={self.grid.n_steps}, n_controls, n_nodes), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid, n_controls, n_nodes):
        return cls(grid, np.zeros((grid.n_steps, n_controls, n_nodes)))

    @classmethod
    def constant(cls, grid, n_controls, n_nodes, value):
        return cls(grid, np.full((grid.n_steps, n_controls, n_nodes), float(value)))

    @classmethod
    def from_function(cls, grid, mesh, n_controls, func):
        """Sample ``func(s, x) -> (n_controls, n_nodes)`` at interval midpoints."""
        vals = np.array([func(s, mesh.nodes) for s in grid.midpoints], dtype=float)
        return cls(grid, vals.reshape(grid.n_steps, n_controls, mesh.n_nodes))

    @property
    def n_controls(self):
        return self.values.shape[1]

    @property
    def n_nodes(self):
        return self.values.shape[2]

    def with_values(self, values):
        return ControlField(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def phase_values(self, phase):
        return self.values[self.grid.phases == phase]


def _vals(x):
    return x.values if isinstance(x, ControlField) else x


def control_weights(mesh: SpatialMesh, grid: PseudoTimeGrid) -> np.ndarray:
    """Weights of the discrete L2 inner product on controls.

    Nodal quadrature in space (row sums of the mass matrix) times the
    interval length; shape ``(1, 1, n_nodes)`` scaled by ``ds``.
    """
    w = assemble_mass(mesh).matvec(np.ones(mesh.n_nodes))
    return grid.ds * w[None, None, :]


def control_bounds(problem, mesh: SpatialMesh, grid: PseudoTimeGrid):
    """Lower and upper bounds broadcast to the control layout."""
    x = mesh.nodes
    lo = np.empty((grid.n_steps, problem.n_controls, mesh.n_nodes))
    hi = np.empty_like(lo)
    for phase in (1, 2):
        sel = grid.phases == phase
        l, h = problem.bounds(phase, x)
        lo[sel] = l
        hi[sel] = h
    return lo, hi


def write_control_csv(path, control: ControlField, mesh: SpatialMesh, tau: float, T: float,
                      header_lines=()):
    """One row per (interval, component, node); ``s`` and ``t`` are interval midpoints."""
    from .timemap import TimeMap

    tm = TimeMap(tau, T).pi(control.grid.midpoints)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(CONTROL_COLUMNS)
        for n, (s, t) in enumerate(zip(control.grid.midpoints, tm)):
            for c in range(control.n_controls):
                for x, v in zip(mesh.nodes, control.values[n, c]):
                    w.writerow([n, repr(float(s)), repr(float(t)), c + 1, repr(float(x)),
                                repr(float(v))])


def read_control_csv(path, grid: PseudoTimeGrid, n_controls: int, mesh: SpatialMesh) -> ControlField:
    """Inverse of :func:`write_control_csv`; raises ``ValueError`` on malformed files."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or tuple(rows[0]) != CONTROL_COLUMNS:
        raise ValueError(f"{path}: expected columns {','.join(CONTROL_COLUMNS)}")
    shape = (grid.n_steps, n_controls, mesh.n_nodes)
    body = rows[1:]
    if len(body) != int(np.prod(shape)):
        raise DimensionMismatch(f"{path}: {len(body)} rows, expected {int(np.prod(shape))}")
    vals = np.empty(shape)
    seen = np.zeros(shape, dtype=bool)
    for r in body:
        if len(r) != len(CONTROL_COLUMNS):
            raise ValueError(f"{path}: malformed row {r!r}")
        n, c = int(r[0]), int(r[3]) - 1
        j = int(np.argmin(np.abs(mesh.nodes - float(r[4]))))
        if not (0 <= n < shape[0] and 0 <= c < shape[1]) or abs(mesh.nodes[j] - float(r[4])) > 1e-9:
            raise DimensionMismatch(f"{path}: row {r!r} does not fit the grid")
        vals[n, c, j] = float(r[5])
        seen[n, c, j] = True
    if not seen.all() or not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: missing or non-finite entries")
    return ControlField(grid, vals)
