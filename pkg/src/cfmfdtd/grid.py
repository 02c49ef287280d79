"""Staggered (Yee) storage for TM_z fields and discrete norms.

E_z lives at ``(x_min + i dx, y_min + j dy)`` and integer time levels,
H_x at ``(x_i, y_{j+1/2})`` and H_y at ``(x_{i+1/2}, y_j)``, both at
half-integer time levels.  On a periodic grid every field has ``nx * ny``
nodes and indices wrap; otherwise the E_z array includes both boundary
lines.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIELDS = ("Hx", "Hy", "Ez")
_OFFSETS = {"Ez": (0.0, 0.0), "Hx": (0.0, 0.5), "Hy": (0.5, 0.0)}


@dataclass(frozen=True)
class StaggeredGrid2D:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    dt: float = None
    periodic: bool = False

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("cell counts must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", 0.5 * min(self.dx, self.dy))

    @classmethod
    def square(cls, lo, hi, n, dt=None, periodic=False):
        return cls(lo, hi, lo, hi, n, n, dt, periodic)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self):
        return (self.y_max - self.y_min) / self.ny

    @property
    def h(self):
        return max(self.dx, self.dy)

    def shape(self, fname):
        if self.periodic:
            return (self.nx, self.ny)
        ox, oy = _OFFSETS[fname]
        return (self.nx + (0 if ox else 1), self.ny + (0 if oy else 1))

    def node_position(self, fname, i, j):
        ni, nj = self.shape(fname)
        if not (0 <= i < ni and 0 <= j < nj):
            raise IndexError(f"{fname} node ({i}, {j}) outside 0..{ni - 1} x 0..{nj - 1}")
        return self.position(fname, i, j)

    def position(self, fname, i, j):
        """Coordinates of (possibly out-of-range, unwrapped) indices."""
        ox, oy = _OFFSETS[fname]
        return (self.x_min + (np.asarray(i) + ox) * self.dx,
                self.y_min + (np.asarray(j) + oy) * self.dy)

    def coords(self, fname):
        ni, nj = self.shape(fname)
        return self.position(fname, *np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij"))

    def wrap(self, fname, i, j):
        """Index tuple into the field array; wraps on periodic grids."""
        if self.periodic:
            return np.mod(i, self.nx), np.mod(j, self.ny)
        ni, nj = self.shape(fname)
        i = np.asarray(i)
        j = np.asarray(j)
        if np.any((i < 0) | (i >= ni) | (j < 0) | (j >= nj)):
            raise IndexError(f"{fname} index outside the non-periodic grid")
        return i, j

    def flat_index(self, fname, i, j):
        return np.ravel_multi_index(self.wrap(fname, i, j), self.shape(fname))

    def local_nodes(self, fname, center, half, tol=1e-9):
        """Nodes of ``fname`` in the closed box of half-width ``half``.

        Returns unwrapped index grids ``ii, jj`` and positions ``X, Y``
        (arrays indexed ``[along x, along y]``).
        """
        ox, oy = _OFFSETS[fname]
        i0 = int(np.ceil((center[0] - half - self.x_min) / self.dx - ox - tol))
        i1 = int(np.floor((center[0] + half - self.x_min) / self.dx - ox + tol))
        j0 = int(np.ceil((center[1] - half - self.y_min) / self.dy - oy - tol))
        j1 = int(np.floor((center[1] + half - self.y_min) / self.dy - oy + tol))
        if not self.periodic:
            ni, nj = self.shape(fname)
            i0, j0 = max(i0, 0), max(j0, 0)
            i1, j1 = min(i1, ni - 1), min(j1, nj - 1)
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        X, Y = self.position(fname, ii, jj)
        return ii, jj, X, Y

    def zeros(self):
        return {f: np.zeros(self.shape(f)) for f in FIELDS}


@dataclass
class FieldState:
    """Current fields: E at ``n * dt`` and H at ``(n - 1/2) * dt``."""

    grid: StaggeredGrid2D
    hx: np.ndarray
    hy: np.ndarray
    ez: np.ndarray
    n: int = 0
    history: dict = field(default_factory=dict)

    @property
    def t_e(self):
        return self.n * self.grid.dt

    @property
    def t_h(self):
        return (self.n - 0.5) * self.grid.dt

    def field(self, fname):
        return {"Hx": self.hx, "Hy": self.hy, "Ez": self.ez}[fname]

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in (self.hx, self.hy, self.ez))


def sample_reference(grid, reference, t, sides, which=FIELDS):
    """Exact fields at the staggered nodes, evaluated on each node's side.

    ``sides[f]`` holds the side label (+1/-1) for each node of field ``f``;
    E is taken at ``t`` and H at ``t`` too (callers shift as needed).
    """
    out = {}
    for k, f in enumerate(FIELDS):
        if f not in which:
            continue
        X, Y = grid.coords(f)
        out[f] = reference.sampler(sides[f], X, Y)(t)[k]
    return out


def l2_error(state, reference, t, sides, mask=None):
    """Per-field and combined discrete L2 errors.

    E_z is compared at ``t`` and H at ``t - dt/2``.  ``mask[f]`` (optional)
    selects the nodes that enter the sums.
    """
    grid = state.grid
    cell = grid.dx * grid.dy
    errors = {}
    for k, f in enumerate(FIELDS):
        X, Y = grid.coords(f)
        tf = t if f == "Ez" else t - 0.5 * grid.dt
        exact = reference.sampler(sides[f], X, Y)(tf)[k]
        diff = state.field(f) - exact
        if mask is not None:
            diff = np.where(mask[f], diff, 0.0)
        errors[f] = float(np.sqrt(np.sum(diff * diff) * cell))
    errors["total"] = float(np.sqrt(sum(errors[f] ** 2 for f in FIELDS)))
    return errors


def write_snapshot(state, directory, run, fields=FIELDS):
    """Write ``<run>_<field>_<step>.csv`` files with columns x, y, value."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in fields:
        X, Y = state.grid.coords(f)
        path = directory / f"{run}_{f}_{state.n}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for x, y, v in zip(X.ravel(), Y.ravel(), state.field(f).ravel()):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
        paths.append(path)
    return paths
