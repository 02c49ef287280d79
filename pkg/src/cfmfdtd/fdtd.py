"""Yee and fourth-order staggered FDTD updates for TM_z with CFM-corrected
stencils.

Spatial derivatives are sparse matrices built once per grid.  A stencil
read that crosses an interface is corrected as ``value(q) + s * D(q)``
where ``D = F+ - F-`` is the jump of the read field at the read node and
``s = +1`` when the updated node lies on the ``+`` side of that interface
(``-1`` otherwise).  The jumps come from :mod:`cfmfdtd.cfm.operator`; the
stepper only needs them as vectors over the plan's query lists.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .geometry import MINUS, PLUS, Interface
from .grid import FIELDS, FieldState


class MissingCorrectionError(ValueError):
    pass


class CflError(ValueError):
    pass


class PlanError(ValueError):
    pass


def derive_staggered4_time_coefficients(free=Fraction(-1, 48)):
    """Coefficients ``b_j`` of ``u^{n+1} = u^n + dt * sum_j b_j f^{n+1/2-j}``.

    The five-step staggered family fixed by the fourth-order conditions
    ``sum_j b_j tau_j^q = 1/(q+1)`` (q = 0..3, tau_j = 1/2 - j) has one free
    parameter, ``b_4``.  The default ``-1/48`` maximises the imaginary-axis
    stability interval (|omega dt| < 1.71), which the fourth-order spatial
    stencil needs at dt = h/2; see the decision ledger.  Exact rationals are
    returned.
    """
    taus = [Fraction(1, 2) - j for j in range(5)]
    # solve for b_0..b_3 given b_4 = free
    A = [[t ** q for t in taus[:4]] for q in range(4)]
    rhs = [Fraction(1, q + 1) - free * taus[4] ** q for q in range(4)]
    b = _solve_fraction(A, rhs)
    return tuple(b) + (Fraction(free),)


def minimal_truncation_member():
    """Free parameter that zeroes the fifth-order error constant.

    This is the "minimal truncation error" member.  It is unstable for
    the 4th-order spatial stencil at dt = h/2, so it is not the default.
    """
    taus = [Fraction(1, 2) - j for j in range(5)]
    c0 = _error_constant(derive_staggered4_time_coefficients(Fraction(0)), taus)
    c1 = _error_constant(derive_staggered4_time_coefficients(Fraction(1)), taus)
    return -c0 / (c1 - c0)


def _error_constant(b, taus):
    return sum(bj * t ** 4 for bj, t in zip(b, taus)) - Fraction(1, 5)


def _solve_fraction(A, rhs):
    n = len(rhs)
    M = [list(row) + [r] for row, r in zip(A, rhs)]
    for c in range(n):
        p = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[p] = M[p], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c] / M[c][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return [M[r][n] / M[r][r] for r in range(n)]


def amplification_roots(b, z):
    """Half-step amplification factors ``zeta`` of the staggered multistep method.

    They solve ``zeta^2 - 1 = z * sum_j b_j zeta^(1-2j)`` with ``z = lambda dt``
    for the test equation ``u' = lambda u``; the method is stable when all
    roots satisfy ``|zeta| <= 1``.
    """
    m = len(b)
    # multiply by zeta^{2m-1}: zeta^{2m+1} - zeta^{2m-1} - z sum b_j zeta^{2m-2j} = 0
    deg = 2 * m + 1
    coef = np.zeros(deg + 1, dtype=complex)
    coef[0] = 1.0
    coef[2] -= 1.0
    for j, bj in enumerate(b):
        coef[deg - (2 * m - 2 * j)] -= z * float(bj)
    return np.roots(coef)


class SchemeKind(Enum):
    YEE2 = "cfm-yee"
    STAGGERED4 = "cfm-4th"

    @property
    def offsets(self):
        if self is SchemeKind.YEE2:
            return (-0.5, 0.5)
        return (-1.5, -0.5, 0.5, 1.5)

    @property
    def weights(self):
        if self is SchemeKind.YEE2:
            return (-1.0, 1.0)
        return (1.0 / 24.0, -27.0 / 24.0, 27.0 / 24.0, -1.0 / 24.0)

    @property
    def time_coefficients(self):
        if self is SchemeKind.YEE2:
            return (1.0,)
        return tuple(float(c) for c in derive_staggered4_time_coefficients())

    @property
    def order(self):
        return 2 if self is SchemeKind.YEE2 else 4

    @property
    def stability_limit(self):
        """Largest |omega dt| on the imaginary axis kept stable by the integrator."""
        return 2.0 if self is SchemeKind.YEE2 else 1.7


# ------------------------------------------------------------------ layout
@dataclass
class InterfaceSpec:
    """One material interface between two regions.

    ``minus``/``plus`` are region ids on the ``phi < 0`` and ``phi > 0``
    sides; ``sides`` lists the extensions solved for (a one-sided
    embedded boundary solves only for ``MINUS``); ``problem`` supplies
    coefficients, sources and interface data for the patch functional.
    """

    interface: Interface
    problem: object
    minus: int
    plus: int
    sides: tuple = (PLUS, MINUS)
    beta: float = 7.0

    def side_of(self, region):
        if region == self.plus:
            return PLUS
        if region == self.minus:
            return MINUS
        return 0


@dataclass
class Layout:
    """Region map, media and interfaces of a run.

    ``regions(x, y)`` returns integer region ids; ``media[r]`` is
    ``(problem, side)`` used to evaluate coefficients, sources and exact
    fields in region ``r``.  Regions without media are inactive and held
    at zero (the exterior of an embedded boundary).
    """

    regions: object
    interfaces: list
    media: dict

    @classmethod
    def two_sided(cls, interface, problem, beta=7.0):
        def regions(x, y):
            return np.where(interface.classify(x, y) == MINUS, 0, 1)

        return cls(regions, [InterfaceSpec(interface, problem, 0, 1, (PLUS, MINUS), beta)],
                   {0: (problem, MINUS), 1: (problem, PLUS)})

    def labels(self, grid):
        return {f: np.asarray(self.regions(*grid.coords(f)), dtype=int) for f in FIELDS}

    def interface_between(self, ra, rb):
        for k, spec in enumerate(self.interfaces):
            if {ra, rb} == {spec.minus, spec.plus}:
                return k
        return -1

    def coefficients(self, grid, labels=None):
        labels = labels or self.labels(grid)
        mu, eps = {}, {}
        for f in FIELDS:
            X, Y = grid.coords(f)
            m = np.ones(X.shape)
            e = np.ones(X.shape)
            for r, (prob, side) in self.media.items():
                sel = labels[f] == r
                if np.any(sel):
                    mv, ev = prob.material(side, X[sel], Y[sel])
                    m[sel] = mv
                    e[sel] = ev
            mu[f], eps[f] = m, e
        return mu, eps


# ---------------------------------------------------------------- stencils
_OFF = {"Ez": (0.0, 0.0), "Hx": (0.0, 0.5), "Hy": (0.5, 0.0)}

#: (name, target, source, axis, sign in the curl)
OPERATORS = (
    ("dEz_dy@Hx", "Hx", "Ez", 1, -1.0),
    ("dEz_dx@Hy", "Hy", "Ez", 0, +1.0),
    ("dHy_dx@Ez", "Ez", "Hy", 0, +1.0),
    ("dHx_dy@Ez", "Ez", "Hx", 1, -1.0),
)


@dataclass
class Stencil:
    name: str
    target: str
    source: str
    sign: float
    rows: np.ndarray  # flat target indices
    cols: np.ndarray  # flat source indices
    vals: np.ndarray  # weights including 1/h
    complete: np.ndarray  # per target node: every read in range
    shape: tuple

    def matrix(self, keep=None):
        m = np.ones(self.rows.size, dtype=bool) if keep is None else keep
        return sp.csr_matrix((self.vals[m], (self.rows[m], self.cols[m])), shape=self.shape)


def build_stencil(grid, scheme, name, target, source, axis, sign):
    ti, tj = grid.shape(target)
    I, J = np.meshgrid(np.arange(ti), np.arange(tj), indexing="ij")
    I, J = I.ravel(), J.ravel()
    h = grid.dx if axis == 0 else grid.dy
    rows, cols, vals, ok_all = [], [], [], np.ones(I.size, dtype=bool)
    si, sj = grid.shape(source)
    for off, w in zip(scheme.offsets, scheme.weights):
        d = _OFF[target][axis] + off - _OFF[source][axis]
        di = int(round(d))
        qi = I + di if axis == 0 else I.copy()
        qj = J + di if axis == 1 else J.copy()
        if grid.periodic:
            qi, qj = np.mod(qi, grid.nx), np.mod(qj, grid.ny)
            ok = np.ones(I.size, dtype=bool)
        else:
            ok = (qi >= 0) & (qi < si) & (qj >= 0) & (qj < sj)
        ok_all &= ok
        rows.append(I * tj + J)
        cols.append(np.where(ok, np.clip(qi, 0, si - 1) * sj + np.clip(qj, 0, sj - 1), -1))
        vals.append(np.full(I.size, w / h))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = cols >= 0
    return Stencil(name, target, source, sign, rows[keep], cols[keep], vals[keep], ok_all,
                   (ti * tj, si * sj))


@dataclass
class Query:
    """Jump requested from interface ``iface`` for ``field`` at a node."""

    iface: int
    field: str
    node: int


@dataclass
class StencilPlan:
    grid: object
    scheme: SchemeKind
    layout: Layout
    labels: dict
    stencils: dict
    updated: dict  # field -> bool mask (flat) of nodes advanced by the scheme
    boundary: dict  # field -> active nodes not advanced (filled externally)
    corrected: dict  # field -> bool mask (flat)
    cross: dict  # stencil name -> dict(entry index, iface, sign, query index)
    queries: dict  # event ("E" or "H") -> list of Query
    patch_nodes: dict  # event -> list of (i, j) Ez patch centres, per query

    def n_corrected(self, fname=None):
        fields = FIELDS if fname is None else (fname,)
        return int(sum(self.corrected[f].sum() for f in fields))

    def correction_matrices(self):
        """Sparse K per stencil: corrected derivative = S u + K D."""
        out = {}
        for name, st in self.stencils.items():
            c = self.cross[name]
            event = "E" if st.source == "Ez" else "H"
            nq = len(self.queries[event])
            out[name] = sp.csr_matrix((st.vals[c["entry"]] * c["sign"], (st.rows[c["entry"]], c["query"])),
                                      shape=(st.shape[0], nq))
        return out


def classify_stencils(grid, interface, scheme, problem=None, beta=7.0):
    """Flag updated nodes whose stencil reads across an interface.

    ``interface`` is a :class:`Layout` or a bare :class:`Interface` (two
    regions; ``problem`` is then only needed for coefficients).
    """
    layout = interface if isinstance(interface, Layout) else Layout.two_sided(interface, problem, beta)
    labels = layout.labels(grid)
    active = {f: np.isin(labels[f], list(layout.media)) if layout.media else np.ones_like(labels[f], bool)
              for f in FIELDS}
    stencils = {}
    for name, target, source, axis, sign in OPERATORS:
        stencils[name] = build_stencil(grid, scheme, name, target, source, axis, sign)
    updated = {}
    for f in FIELDS:
        ok = active[f].ravel().copy()
        for st in stencils.values():
            if st.target == f:
                ok &= st.complete
        updated[f] = ok
    boundary = {f: active[f].ravel() & ~updated[f] for f in FIELDS}
    corrected = {f: np.zeros(labels[f].size, dtype=bool) for f in FIELDS}
    cross = {}
    qindex = {"E": {}, "H": {}}
    queries = {"E": [], "H": []}
    for name, st in stencils.items():
        lt = labels[st.target].ravel()[st.rows]
        ls = labels[st.source].ravel()[st.cols]
        sel = np.flatnonzero((lt != ls) & updated[st.target][st.rows])
        event = "E" if st.source == "Ez" else "H"
        ifaces = np.empty(sel.size, dtype=int)
        signs = np.empty(sel.size)
        qidx = np.empty(sel.size, dtype=int)
        for n, e in enumerate(sel):
            a, b = int(lt[e]), int(ls[e])
            k = layout.interface_between(a, b)
            if k < 0:
                raise PlanError(f"no interface separates regions {a} and {b}")
            spec = layout.interfaces[k]
            ifaces[n] = k
            signs[n] = 1.0 if a == spec.plus else -1.0
            key = (k, st.source, int(st.cols[e]))
            if key not in qindex[event]:
                qindex[event][key] = len(queries[event])
                queries[event].append(Query(k, st.source, int(st.cols[e])))
            qidx[n] = qindex[event][key]
        corrected[st.target][st.rows[sel]] = True
        cross[name] = dict(entry=sel, iface=ifaces, sign=signs, query=qidx)
    patch_nodes = {}
    for event, qs in queries.items():
        nodes = []
        for q in qs:
            i, j = np.unravel_index(q.node, grid.shape(q.field))
            x, y = grid.position(q.field, i, j)
            nodes.append(nearest_ez_node(grid, x, y))
        patch_nodes[event] = nodes
    return StencilPlan(grid, scheme, layout, labels, stencils, updated, boundary, corrected, cross,
                       queries, patch_nodes)


def nearest_ez_node(grid, x, y):
    i = int(np.floor((x - grid.x_min) / grid.dx + 0.5))
    j = int(np.floor((y - grid.y_min) / grid.dy + 0.5))
    if grid.periodic:
        return i, j
    ni, nj = grid.shape("Ez")
    return min(max(i, 0), ni - 1), min(max(j, 0), nj - 1)


def check_cfl(grid, scheme, mu, eps):
    """Refuse time steps beyond the scheme's stability bound."""
    cmax = max(float(np.max(1.0 / np.sqrt(mu[f] * eps[f]))) for f in FIELDS)
    h = min(grid.dx, grid.dy)
    if scheme is SchemeKind.YEE2:
        limit = h / (np.sqrt(2.0) * cmax)
    else:
        # the 2-D symbol of the fourth-order stencil peaks at sqrt(2) * (7/3) / h
        limit = scheme.stability_limit * h / (cmax * np.sqrt(2.0) * 7.0 / 3.0)
    if grid.dt > limit * (1 + 1e-12):
        raise CflError(f"dt = {grid.dt:.4g} exceeds the stability limit {limit:.4g}")
    return limit


# ----------------------------------------------------------------- stepping
@dataclass
class Stepper:
    """Advances a :class:`FieldState` one full step (H then E).

    ``corrections(event, state, t)`` returns the jump vector for the
    plan's query list of that event ("E" before the H update at ``t_n``,
    "H" after it at ``t_{n+1/2}``).  ``sources(field, t)`` returns flat
    source arrays (or None), and ``boundary_values(field, t)`` fills
    nodes that are not advanced.
    """

    plan: StencilPlan
    mu: dict
    eps: dict
    corrections: object = None
    sources: object = None
    boundary_values: object = None
    rhs_history: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.plan
        self.S = {name: st.matrix() for name, st in p.stencils.items()}
        self.K = p.correction_matrices()
        self.b = p.scheme.time_coefficients
        self.inv_mu = {f: (1.0 / self.mu[f]).ravel() for f in ("Hx", "Hy")}
        self.inv_eps = (1.0 / self.eps["Ez"]).ravel()
        for f in FIELDS:
            self.rhs_history.setdefault(f, deque(maxlen=len(self.b)))

    def _jumps(self, event, state, t):
        nq = len(self.plan.queries[event])
        if nq == 0:
            return np.zeros(0)
        if self.corrections is None:
            raise MissingCorrectionError(f"{nq} stencil corrections needed but no correction source given")
        d = self.corrections(event, state, t)
        if d is None or np.shape(d) != (nq,):
            raise MissingCorrectionError(f"expected {nq} jump values for event {event}")
        return np.asarray(d)

    def rhs_h(self, ez, t, d_e):
        """Time derivatives of (Hx, Hy) from E at time ``t``."""
        e = ez.ravel()
        out = {}
        for name, f, src in (("dEz_dy@Hx", "Hx", 0), ("dEz_dx@Hy", "Hy", 1)):
            curl = self.S[name] @ e
            if d_e.size:
                curl = curl + self.K[name] @ d_e
            curl *= self.plan.stencils[name].sign
            if self.sources is not None:
                s = self.sources(f, t)
                if s is not None:
                    curl = curl + s
            out[f] = curl * self.inv_mu[f]
        return out

    def rhs_e(self, hx, hy, t, d_h):
        curl = self.S["dHy_dx@Ez"] @ hy.ravel() - self.S["dHx_dy@Ez"] @ hx.ravel()
        if d_h.size:
            curl = curl + self.K["dHy_dx@Ez"] @ d_h - self.K["dHx_dy@Ez"] @ d_h
        if self.sources is not None:
            s = self.sources("Ez", t)
            if s is not None:
                curl = curl + s
        return curl * self.inv_eps

    def push_rhs(self, fname, value):
        self.rhs_history[fname].appendleft(value)

    def _combine(self, fname):
        hist = self.rhs_history[fname]
        if len(hist) < len(self.b):
            raise ValueError(f"history for {fname} holds {len(hist)} of {len(self.b)} levels")
        out = self.b[0] * hist[0]
        for bj, v in zip(self.b[1:], list(hist)[1:]):
            out = out + bj * v
        return out

    def step(self, state):
        g = state.grid
        dt = g.dt
        t_n = state.n * dt
        upd = self.plan.updated
        d_e = self._jumps("E", state, t_n)
        r = self.rhs_h(state.ez, t_n, d_e)
        for f in ("Hx", "Hy"):
            self.push_rhs(f, r[f])
        for f, arr in (("Hx", state.hx), ("Hy", state.hy)):
            flat = arr.reshape(-1)
            flat[upd[f]] += dt * self._combine(f)[upd[f]]
            self._fill_boundary(f, flat, t_n + 0.5 * dt)
        state.history.setdefault("H", deque(maxlen=8)).appendleft((state.hx.copy(), state.hy.copy()))
        d_h = self._jumps("H", state, t_n + 0.5 * dt)
        self.push_rhs("Ez", self.rhs_e(state.hx, state.hy, t_n + 0.5 * dt, d_h))
        flat = state.ez.reshape(-1)
        flat[upd["Ez"]] += dt * self._combine("Ez")[upd["Ez"]]
        self._fill_boundary("Ez", flat, t_n + dt)
        state.n += 1
        state.history.setdefault("E", deque(maxlen=8)).appendleft(state.ez.copy())
        return state

    def _fill_boundary(self, fname, flat, t):
        m = self.plan.boundary[fname]
        if np.any(m):
            if self.boundary_values is None:
                raise ValueError(f"{fname} has boundary nodes but no boundary values were given")
            flat[m] = self.boundary_values(fname, t)[m]


def step(state, stepper):
    """Advance ``state`` by one time step (see :class:`Stepper`)."""
    return stepper.step(state)
