"""Level-set interfaces, interface quadrature and local CFM patches.

Interfaces are closed parametric curves (plus a half-plane used for
testing).  ``phi < 0`` is the inner region (side ``MINUS``), ``phi > 0`` the
outer one (``PLUS``); ``phi == 0`` counts as ``MINUS``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

PLUS = 1
MINUS = -1

_GAUSS3 = np.polynomial.legendre.leggauss(3)


class DegenerateGradientError(ValueError):
    pass


class NoInterfaceInPatchError(ValueError):
    pass


class Interface:
    """Base class: subclasses give ``phi``, ``grad_phi`` and a parametrization."""

    #: parameter interval of the curve and whether it wraps around
    periodic = True

    def phi(self, x, y):
        raise NotImplementedError

    def grad_phi(self, x, y):
        raise NotImplementedError

    def point(self, s):
        raise NotImplementedError

    def dpoint(self, s):
        raise NotImplementedError

    @property
    def param_range(self):
        raise NotImplementedError

    @property
    def breakpoints(self):
        return np.array([])

    def classify(self, x, y):
        """``MINUS`` where ``phi <= 0`` and ``PLUS`` elsewhere."""
        p = self.phi(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.where(p <= 0.0, MINUS, PLUS)

    def normal(self, x, y):
        gx, gy = self.grad_phi(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        g = np.hypot(gx, gy)
        if np.any(g < 1e-12):
            raise DegenerateGradientError("|grad phi| vanishes; normal undefined")
        return gx / g, gy / g

    def distance(self, x, y):
        """Distance to the curve (first-order |phi|/|grad phi| unless exact)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx, gy = self.grad_phi(x, y)
        return np.abs(self.phi(x, y)) / np.maximum(np.hypot(gx, gy), 1e-300)

    @cached_property
    def _dense(self):
        s0, s1 = self.param_range
        s = np.linspace(s0, s1, 16385)
        if self.periodic:
            s = s[:-1]
        px, py = self.point(s)
        return s, px, py


@dataclass(frozen=True, eq=False)
class Circle(Interface):
    center: tuple = (0.0, 0.0)
    radius: float = 0.6

    def phi(self, x, y):
        return np.hypot(x - self.center[0], y - self.center[1]) - self.radius

    def grad_phi(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        r = np.hypot(dx, dy)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(r > 0, dx / r, 0.0), np.where(r > 0, dy / r, 0.0)

    def distance(self, x, y):
        return np.abs(self.phi(np.asarray(x, float), np.asarray(y, float)))

    @property
    def param_range(self):
        return 0.0, 2.0 * np.pi

    def point(self, s):
        return (self.center[0] + self.radius * np.cos(s),
                self.center[1] + self.radius * np.sin(s))

    def dpoint(self, s):
        return -self.radius * np.sin(s), self.radius * np.cos(s)


@dataclass(frozen=True, eq=False)
class Star(Interface):
    """``r(theta) = base_radius * (1 + amplitude * cos(lobes * theta + phase))``."""

    center: tuple = (0.5, 0.5)
    base_radius: float = 0.25
    amplitude: float = 0.05
    lobes: int = 5
    phase: float = 0.0

    def radius(self, theta):
        return self.base_radius * (1.0 + self.amplitude * np.cos(self.lobes * theta + self.phase))

    def dradius(self, theta):
        return -self.base_radius * self.amplitude * self.lobes * np.sin(self.lobes * theta + self.phase)

    def phi(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        return np.hypot(dx, dy) - self.radius(np.arctan2(dy, dx))

    def grad_phi(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        rho = np.hypot(dx, dy)
        th = np.arctan2(dy, dx)
        dr = self.dradius(th)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(rho > 0, dx / rho, 0.0)
            uy = np.where(rho > 0, dy / rho, 0.0)
            inv = np.where(rho > 0, 1.0 / rho, 0.0)
        # grad(rho) = e_rho, grad(theta) = e_theta / rho
        return ux + dr * uy * inv, uy - dr * ux * inv

    @property
    def param_range(self):
        return 0.0, 2.0 * np.pi

    def point(self, s):
        r = self.radius(s)
        return self.center[0] + r * np.cos(s), self.center[1] + r * np.sin(s)

    def dpoint(self, s):
        r = self.radius(s)
        dr = self.dradius(s)
        return dr * np.cos(s) - r * np.sin(s), dr * np.sin(s) + r * np.cos(s)


@dataclass(frozen=True, eq=False)
class HalfPlane(Interface):
    """Straight interface through ``origin``; ``normal`` points into PLUS."""

    origin: tuple = (0.5, 0.5)
    direction: tuple = (1.0, 0.0)
    extent: float = 10.0

    periodic = False

    @property
    def _n(self):
        n = np.asarray(self.direction, dtype=float)
        return n / np.linalg.norm(n)

    def phi(self, x, y):
        n = self._n
        return n[0] * (x - self.origin[0]) + n[1] * (y - self.origin[1])

    def grad_phi(self, x, y):
        n = self._n
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.full(shape, n[0]), np.full(shape, n[1])

    def distance(self, x, y):
        return np.abs(self.phi(np.asarray(x, float), np.asarray(y, float)))

    @property
    def param_range(self):
        return -self.extent, self.extent

    def point(self, s):
        n = self._n
        return self.origin[0] - n[1] * s, self.origin[1] + n[0] * s

    def dpoint(self, s):
        n = self._n
        s = np.asarray(s, dtype=float)
        return np.full(s.shape, -n[1]), np.full(s.shape, n[0])


@dataclass(frozen=True, eq=False)
class Square(Interface):
    """Boundary of an axis-aligned square; the inside is ``MINUS``."""

    center: tuple = (0.0, 0.0)
    half_width: float = 0.9

    def phi(self, x, y):
        return np.maximum(np.abs(x - self.center[0]), np.abs(y - self.center[1])) - self.half_width

    def grad_phi(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        xdom = np.abs(dx) >= np.abs(dy)
        return np.where(xdom, np.sign(dx), 0.0), np.where(xdom, 0.0, np.sign(dy))

    def distance(self, x, y):
        dx = np.abs(np.asarray(x, float) - self.center[0]) - self.half_width
        dy = np.abs(np.asarray(y, float) - self.center[1]) - self.half_width
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        inside = -np.maximum(dx, dy)
        return np.where((dx > 0) | (dy > 0), outside, inside)

    @property
    def param_range(self):
        return 0.0, 8.0 * self.half_width

    @property
    def breakpoints(self):
        a = self.half_width
        return np.array([a, 3 * a, 5 * a, 7 * a])

    def point(self, s):
        a = self.half_width
        s = np.mod(np.asarray(s, dtype=float), 8 * a)
        cx, cy = self.center
        # counterclockwise from (cx + a, cy)
        x = np.select([s < a, s < 3 * a, s < 5 * a, s < 7 * a],
                      [a, a - (s - a), -a, -a + (s - 5 * a)], a)
        y = np.select([s < a, s < 3 * a, s < 5 * a, s < 7 * a],
                      [s, a, a - (s - 3 * a), -a], -a + (s - 7 * a))
        return cx + x, cy + y

    def dpoint(self, s):
        a = self.half_width
        s = np.mod(np.asarray(s, dtype=float), 8 * a)
        dx = np.select([s < a, s < 3 * a, s < 5 * a, s < 7 * a], [0.0, -1.0, 0.0, 1.0], 0.0)
        dy = np.select([s < a, s < 3 * a, s < 5 * a, s < 7 * a], [1.0, 0.0, -1.0, 0.0], 1.0)
        return dx, dy


def classify(interface, p):
    """Side of a single point."""
    return int(interface.classify(p[0], p[1]))


def normal(interface, p, tol=1e-8):
    if abs(float(interface.phi(p[0], p[1]))) > tol:
        raise ValueError("point is not on the interface")
    nx, ny = interface.normal(p[0], p[1])
    return np.array([float(nx), float(ny)])


@dataclass
class InterfaceSamples:
    """Quadrature nodes on a piece of interface: ``sum(w f) ~ integral of f ds``."""

    x: np.ndarray
    y: np.ndarray
    nx: np.ndarray
    ny: np.ndarray
    weights: np.ndarray
    params: np.ndarray

    @property
    def size(self):
        return self.x.size

    @property
    def length(self):
        return float(np.sum(self.weights))


def _box_gap(interface, s, center, half):
    px, py = interface.point(s)
    return np.maximum(np.abs(px - center[0]), np.abs(py - center[1])) - half


def box_intervals(interface, center, half, tol=1e-12):
    """Parameter intervals on which the curve lies inside the square box."""
    s, px, py = interface._dense
    g = np.maximum(np.abs(px - center[0]), np.abs(py - center[1])) - half
    inside = g < 0
    if not np.any(inside):
        return []
    s0, s1 = interface.param_range
    period = s1 - s0

    def root(a, b):
        fa = _box_gap(interface, a, center, half)
        fb = _box_gap(interface, b, center, half)
        if fa == 0.0:
            return a
        if fb == 0.0 or fa * fb > 0:
            return b
        return brentq(lambda q: float(_box_gap(interface, q, center, half)), a, b, xtol=tol, rtol=1e-15)

    n = s.size
    if np.all(inside):
        return [(s0, s1)]
    intervals = []
    if interface.periodic:
        # start scanning at an outside sample so every run is closed
        k0 = int(np.argmin(inside))
        order = (np.arange(n) + k0) % n
        ss = s[order] + np.where(order < k0, period, 0.0)
        ins = inside[order]
        ss = np.append(ss, ss[0] + period)
        ins = np.append(ins, ins[0])
    else:
        ss, ins = s, inside
    k = 0
    while k < ss.size:
        if ins[k]:
            a_idx = k
            while k < ss.size and ins[k]:
                k += 1
            lo = root(ss[a_idx - 1], ss[a_idx]) if a_idx > 0 else ss[0]
            hi = root(ss[k - 1], ss[k]) if k < ss.size else ss[-1]
            intervals.append((lo, hi))
        else:
            k += 1
    return intervals


def sample_interface(interface, center, half, max_arc, npts=3):
    """Gauss samples on ``interface`` inside the box, arcs no longer than ``max_arc``."""
    xg, wg = (_GAUSS3 if npts == 3 else np.polynomial.legendre.leggauss(npts))
    pieces = []
    period = interface.param_range[1] - interface.param_range[0]
    bps = interface.breakpoints
    for lo, hi in box_intervals(interface, center, half):
        cuts = [lo]
        if bps.size:
            for k in range(-1, 3):
                for b in bps + k * period:
                    if lo < b < hi:
                        cuts.append(b)
        cuts.append(hi)
        cuts = np.unique(cuts)
        for a, b in zip(cuts[:-1], cuts[1:]):
            # rough length decides the subdivision count
            ss = np.linspace(a, b, 65)
            px, py = interface.point(ss)
            length = np.sum(np.hypot(np.diff(px), np.diff(py)))
            m = max(1, int(np.ceil(length / max_arc)))
            edges = np.linspace(a, b, m + 1)
            for e0, e1 in zip(edges[:-1], edges[1:]):
                pieces.append((e0, e1))
    if not pieces:
        empty = np.zeros(0)
        return InterfaceSamples(empty, empty, empty, empty, empty, empty)
    e0 = np.array([p[0] for p in pieces])
    e1 = np.array([p[1] for p in pieces])
    mid = 0.5 * (e0 + e1)[:, None]
    rad = 0.5 * (e1 - e0)[:, None]
    s = (mid + rad * xg[None, :]).ravel()
    ws = (rad * wg[None, :]).ravel()
    px, py = interface.point(s)
    dx, dy = interface.dpoint(s)
    speed = np.hypot(dx, dy)
    # counterclockwise parametrization: outward normal is the tangent turned -90 degrees
    nx, ny = dy / speed, -dx / speed
    return InterfaceSamples(np.asarray(px, float), np.asarray(py, float), nx, ny, ws * speed, s)


FIELDS = ("Hx", "Hy", "Ez")


@dataclass(frozen=True)
class FictitiousSegment:
    """Grid-aligned run of same-side nodes of one field.

    ``kind`` follows the fictitious condition types: 1 tangential E,
    2 tangential H, 4 normal H (type 3, normal E, vanishes in TM_z).
    """

    side: int
    field: str
    kind: int
    normal: tuple
    orientation: str  # "h" (along x) or "v" (along y)
    nodes: tuple  # wrapped flat indices into the field array
    coords: np.ndarray  # (n, 2) physical positions (unwrapped)

    @property
    def endpoints(self):
        return self.coords[0], self.coords[-1]

    @property
    def length(self):
        return float(np.linalg.norm(self.coords[-1] - self.coords[0]))


@dataclass
class Patch:
    """Square space-time box around an interface node."""

    center: np.ndarray
    half_width: float
    window: tuple  # time offsets relative to the correction time
    samples: InterfaceSamples
    segments: list = field(default_factory=list)
    node: tuple = None
    id: int = -1

    @property
    def side_length(self):
        return 2.0 * self.half_width

    def contains(self, x, y, tol=1e-12):
        return (np.abs(np.asarray(x) - self.center[0]) <= self.half_width * (1 + tol) + tol) & (
            np.abs(np.asarray(y) - self.center[1]) <= self.half_width * (1 + tol) + tol)


def _segment_kind(fname, orientation):
    if fname == "Ez":
        return 1, ((0.0, 1.0) if orientation == "h" else (1.0, 0.0))
    if fname == "Hx":
        return (2, (0.0, 1.0)) if orientation == "h" else (4, (1.0, 0.0))
    return (2, (1.0, 0.0)) if orientation == "v" else (4, (0.0, 1.0))


def _runs(mask):
    """Maximal runs of True as (start, stop) pairs."""
    m = np.concatenate([[False], mask, [False]]).astype(int)
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def find_segments(grid, labels, interface, side, center, half, min_nodes=3, max_nodes=5,
                  min_distance=1.0, fields=FIELDS):
    """Pick up to two fictitious segments (one per orientation) per field.

    ``labels[f]`` gives the side label of every node of field ``f`` (0 marks
    nodes that may not be used).  Candidate runs hold ``min_nodes`` or more
    consecutive nodes of ``side`` that are at least ``min_distance`` cells
    from the interface; the run closest to the interface wins.
    """
    h = max(grid.dx, grid.dy)
    segments = []
    for fname in fields:
        ii, jj, X, Y = grid.local_nodes(fname, center, half)
        if X.size == 0:
            continue
        lab = labels[fname][grid.wrap(fname, ii, jj)]
        dist = interface.distance(X, Y)
        ok = (lab == side) & (dist >= min_distance * h - 1e-12 * h)
        for orientation in ("h", "v"):
            best = None
            lines = range(X.shape[1]) if orientation == "h" else range(X.shape[0])
            for line in lines:
                if orientation == "h":
                    okl, dl = ok[:, line], dist[:, line]
                    xs, ys = X[:, line], Y[:, line]
                    il, jl = ii[:, line], jj[:, line]
                else:
                    okl, dl = ok[line, :], dist[line, :]
                    xs, ys = X[line, :], Y[line, :]
                    il, jl = ii[line, :], jj[line, :]
                for a, b in _runs(okl):
                    if b - a < min_nodes:
                        continue
                    if b - a > max_nodes:
                        # keep the window nearest the patch centre
                        cpos = center[0] if orientation == "h" else center[1]
                        pos = xs if orientation == "h" else ys
                        starts = np.arange(a, b - max_nodes + 1)
                        mids = np.array([pos[s0:s0 + max_nodes].mean() for s0 in starts])
                        a = int(starts[np.argmin(np.abs(mids - cpos))])
                        b = a + max_nodes
                    score = (float(dl[a:b].min()), -(b - a),
                             float(np.hypot(xs[a:b].mean() - center[0], ys[a:b].mean() - center[1])))
                    if best is None or score < best[0]:
                        best = (score, il[a:b], jl[a:b], xs[a:b], ys[a:b])
            if best is None:
                continue
            _, il, jl, xs, ys = best
            kind, nrm = _segment_kind(fname, orientation)
            flat = tuple(int(k) for k in grid.flat_index(fname, il, jl))
            segments.append(FictitiousSegment(side, fname, kind, nrm, orientation, flat,
                                              np.column_stack([xs, ys])))
    return segments


def build_patch(interface, grid, node, beta, window, labels=None, sides=(PLUS, MINUS),
                min_nodes=3, max_nodes=5, max_arc=None, node_id=-1):
    """Patch of side ``beta * max(dx, dy)`` centred on Ez node ``node = (i, j)``.

    ``labels`` maps field names to per-node side labels; without it the
    interface classification is used.  Segments are searched for each side
    in ``sides``; when a side lacks data the rules are relaxed step by step
    (closer to the interface, then a wider search box).
    """
    h = max(grid.dx, grid.dy)
    half = 0.5 * beta * h
    center = np.asarray(grid.node_position("Ez", *node), dtype=float)
    samples = sample_interface(interface, center, half, max_arc or 0.5 * grid.dx)
    if samples.size == 0:
        raise NoInterfaceInPatchError(f"patch at {tuple(center)} does not meet the interface")
    if labels is None:
        labels = {f: interface.classify(*grid.coords(f)) for f in FIELDS}
    segments = []
    for side in sides:
        found = []
        for scale, dmin in ((1.0, 1.0), (1.0, 0.5), (1.0, 0.0), (1.5, 0.5), (2.0, 0.0)):
            found = find_segments(grid, labels, interface, side, center, scale * half,
                                  min_nodes=min_nodes, max_nodes=max_nodes, min_distance=dmin)
            got = {s.field for s in found}
            if {"Ez", "Hx", "Hy"} <= got:
                break
        segments.extend(found)
    return Patch(center, half, tuple(window), samples, segments, tuple(node), node_id)
