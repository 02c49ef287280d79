"""Quadratic functional of the CFM on one patch, its minimizer and the
resulting correction functions.

Unknowns are the coefficients of (H, E_z) for every side being solved
for, stacked side by side as ``[cH, cE]``.  A side that is not an unknown
(the exterior of an embedded boundary) is taken to be identically zero.

The functional is ``J(c) = sum_blocks w/2 * integral (A c - g)^2`` with
weights ``ell_h`` (PDE residuals), ``c_p`` (interface conditions) and
``c_f / N`` (fictitious interfaces).  Hence ``M = sum w A^T A`` and
``b = sum w A^T g``.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..geometry import MINUS, PLUS
from .basis import build_basis

_SIGN = {PLUS: 1.0, MINUS: -1.0}


class SingularPatchError(ValueError):
    pass


class SolverBreakdownError(RuntimeError):
    pass


class OutOfPatchError(ValueError):
    pass


class ConditioningWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CfmConfig:
    k: int = 2
    c_p: float = 1.0
    c_f: float = 0.01
    beta: float = 7.0
    volume_points: int = None  # per dimension, default k + 2
    interface_points: int = 3  # per arc
    segment_points: int = None  # default k + 2
    time_points: int = None  # default k + 1
    fd_space_degree: int = 2
    fd_time_degree: int = 2
    tikhonov: float = 1e-12

    def __post_init__(self):
        if not (self.c_p > self.c_f > 0):
            raise ValueError(f"penalties must satisfy c_p > c_f > 0 (got c_p={self.c_p}, c_f={self.c_f})")
        if self.k not in (1, 2, 3, 4):
            raise ValueError("k must be in 1..4")
        if self.fd_space_degree < 2:
            raise ValueError("the FD interpolant needs spatial degree >= 2")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def nv(self):
        return self.volume_points or self.k + 2

    @property
    def ns(self):
        return self.segment_points or self.k + 2

    @property
    def nt(self):
        return self.time_points or self.k + 1


def gauss(n, a=-1.0, b=1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w


def lagrange_matrix(nodes, x):
    """L[q, j] = j-th Lagrange basis polynomial through ``nodes`` at ``x[q]``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    L = np.ones((x.size, nodes.size))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                L[:, j] *= (x - xm) / (xj - xm)
    return L


@dataclass
class FdInterpolant:
    """Tensor Lagrange interpolant in (position along a segment, time)."""

    positions: np.ndarray
    times: np.ndarray
    values: np.ndarray = None  # (n_positions, n_times)

    def weights(self, s, t):
        """Matrix mapping flattened ``values`` to interpolated values at (s, t)."""
        Ls = lagrange_matrix(self.positions, s)
        Lt = lagrange_matrix(self.times, t)
        return (Ls[:, :, None] * Lt[:, None, :]).reshape(Ls.shape[0], -1)

    def __call__(self, s, t):
        return self.weights(s, t) @ np.asarray(self.values).ravel()


@dataclass
class _Block:
    kind: str  # "volume", "interface" or "fictitious"
    A: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)


class PatchFunctional:
    """Row blocks, Gram matrix and data maps of J on one patch.

    ``problem`` supplies ``material``, ``material_gradient``, ``sources``
    and ``interface_data`` (see :mod:`cfmfdtd.analytic`); ``sides`` lists
    the sides whose extensions are unknown.  Times are relative to the
    correction time ``t_ref``: the window ``patch.window`` is an interval
    of offsets.
    """

    def __init__(self, patch, config, problem, sides=(PLUS, MINUS), use_fictitious=True):
        self.patch = patch
        self.config = config
        self.problem = problem
        self.sides = tuple(sides)
        self.basis = build_basis(config.k)
        self.L = patch.half_width
        w0, w1 = patch.window
        self.tm = 0.5 * (w0 + w1)
        self.Lt = 0.5 * (w1 - w0)
        nb = self.basis.size
        self.n = nb * len(self.sides)
        self.offset = {s: i * nb for i, s in enumerate(self.sides)}
        self.blocks = []
        self._volume_blocks()
        self._interface_blocks()
        if use_fictitious:
            self._fictitious_blocks()
            self._check_constraints()
        self.M = np.zeros((self.n, self.n))
        for blk in self.blocks:
            self.M += blk.A.T @ (blk.w[:, None] * blk.A)
        self.M = 0.5 * (self.M + self.M.T)

    # ----------------------------------------------------------- helpers
    def to_local(self, x, y, t):
        return ((np.asarray(x) - self.patch.center[0]) / self.L,
                (np.asarray(y) - self.patch.center[1]) / self.L,
                (np.asarray(t) - self.tm) / self.Lt)

    def basis_rows(self, side, xi, eta, tau, d=(0, 0, 0)):
        """(Hx, Hy, Ez) rows over the full unknown vector, physical derivatives."""
        scale = self.L ** -(d[0] + d[1]) * self.Lt ** -d[2]
        bx, by, be = self.basis.evaluate(xi, eta, tau, d)
        npt = bx.shape[0]
        nh = self.basis.n_h
        o = self.offset[side]
        rows = [np.zeros((npt, self.n)) for _ in range(3)]
        rows[0][:, o:o + nh] = scale * bx
        rows[1][:, o:o + nh] = scale * by
        rows[2][:, o + nh:o + self.basis.size] = scale * be
        return rows

    # ------------------------------------------------------------ blocks
    def _volume_blocks(self):
        cfg = self.config
        g, gw = gauss(cfg.nv)
        xi, eta, tau = (a.ravel() for a in np.meshgrid(g, g, g, indexing="ij"))
        w = (gw[:, None, None] * gw[None, :, None] * gw[None, None, :]).ravel()
        w = w * self.L ** 2 * self.Lt * (2.0 * self.L)  # ell_h = 2 L
        x = self.patch.center[0] + self.L * xi
        y = self.patch.center[1] + self.L * eta
        for s in self.sides:
            mu, eps = self.problem.material(s, x, y)
            mux, muy, _, _ = self.problem.material_gradient(s, x, y)
            _, _, ez_t = self.basis_rows(s, xi, eta, tau, (0, 0, 1))
            hx_t, hy_t, _ = self.basis_rows(s, xi, eta, tau, (0, 0, 1))
            hx_x, hy_x, ez_x = self.basis_rows(s, xi, eta, tau, (1, 0, 0))
            hx_y, hy_y, ez_y = self.basis_rows(s, xi, eta, tau, (0, 1, 0))
            meta = dict(side=s, x=x, y=y, tau=tau)
            self.blocks.append(_Block("volume", mu[:, None] * hx_t + ez_y, w, dict(meta, comp=0)))
            self.blocks.append(_Block("volume", mu[:, None] * hy_t - ez_x, w, dict(meta, comp=1)))
            self.blocks.append(_Block("volume", eps[:, None] * ez_t - hy_x + hx_y, w, dict(meta, comp=2)))
            if np.any(mux != 0) or np.any(muy != 0):
                hx0, hy0, _ = self.basis_rows(s, xi, eta, tau)
                self.blocks.append(_Block("volume", mux[:, None] * hx0 + muy[:, None] * hy0, w,
                                          dict(meta, comp=3)))

    def _interface_blocks(self):
        cfg = self.config
        smp = self.patch.samples
        gt, gtw = gauss(cfg.nt)
        npt = smp.size
        x = np.repeat(smp.x, gt.size)
        y = np.repeat(smp.y, gt.size)
        nx = np.repeat(smp.nx, gt.size)
        ny = np.repeat(smp.ny, gt.size)
        tau = np.tile(gt, npt)
        w = cfg.c_p * np.repeat(smp.weights, gt.size) * np.tile(gtw, npt) * self.Lt
        xi, eta, _ = self.to_local(x, y, 0.0)
        rows = {c: np.zeros((x.size, self.n)) for c in ("a", "b", "d")}
        for s in self.sides:
            hx, hy, ez = self.basis_rows(s, xi, eta, tau)
            mu, _ = self.problem.material(s, x, y)
            sg = _SIGN[s]
            rows["a"] += sg * ez
            rows["b"] += sg * (nx[:, None] * hy - ny[:, None] * hx)
            rows["d"] += sg * mu[:, None] * (nx[:, None] * hx + ny[:, None] * hy)
        meta = dict(x=x, y=y, nx=nx, ny=ny, tau=tau)
        for comp, c in zip(("a", "b", "d"), (0, 1, 3)):
            self.blocks.append(_Block("interface", rows[comp], w, dict(meta, comp=c)))

    def _fictitious_blocks(self):
        cfg = self.config
        gs, gsw = gauss(cfg.ns, 0.0, 1.0)
        gt, gtw = gauss(cfg.nt)
        segs = [sg for sg in self.patch.segments if sg.side in self.sides]
        counts = {}
        for sg in segs:
            cls = "E" if sg.field == "Ez" else "H"
            counts[(sg.side, cls)] = counts.get((sg.side, cls), 0) + 1
        comp = {"Hx": 0, "Hy": 1, "Ez": 2}
        for idx, sg in enumerate(segs):
            p0, p1 = sg.endpoints
            length = np.linalg.norm(p1 - p0)
            x = np.repeat(p0[0] + gs * (p1[0] - p0[0]), gt.size)
            y = np.repeat(p0[1] + gs * (p1[1] - p0[1]), gt.size)
            tau = np.tile(gt, gs.size)
            cls = "E" if sg.field == "Ez" else "H"
            w = (cfg.c_f / counts[(sg.side, cls)]) * np.repeat(gsw * length, gt.size) * np.tile(gtw, gs.size) * self.Lt
            xi, eta, _ = self.to_local(x, y, 0.0)
            A = self.basis_rows(sg.side, xi, eta, tau)[comp[sg.field]]
            along = 0 if sg.orientation == "h" else 1
            self.blocks.append(_Block("fictitious", A, w, dict(
                segment=idx, seg=sg, s=np.array([x, y])[along], t=self.tm + self.Lt * tau,
                positions=sg.coords[:, along])))

    def _check_constraints(self):
        have = {(b.meta["seg"].side, b.meta["seg"].field == "Ez") for b in self.blocks if b.kind == "fictitious"}
        for s in self.sides:
            for is_e in (True, False):
                if (s, is_e) not in have:
                    raise SingularPatchError(
                        f"patch {self.patch.id}: no fictitious {'E' if is_e else 'H'} constraint on side {s:+d}")

    # --------------------------------------------------------- data maps
    @property
    def fictitious_blocks(self):
        return [b for b in self.blocks if b.kind == "fictitious"]

    @property
    def source_blocks(self):
        return [b for b in self.blocks if b.kind in ("volume", "interface")]

    def interpolant(self, block, times):
        return FdInterpolant(block.meta["positions"], np.asarray(times, dtype=float))

    def fictitious_map(self, level_times):
        """``b_f = B @ samples`` for the fictitious terms.

        ``level_times[field]`` lists the (relative) times of the FD levels
        used for that field.  Returns ``B`` and the sample layout: one entry
        ``(field, lag, node)`` per column.
        """
        cols = []
        mats = []
        for blk in self.fictitious_blocks:
            sg = blk.meta["seg"]
            times = level_times[sg.field]
            Phi = self.interpolant(blk, times).weights(blk.meta["s"], blk.meta["t"])
            mats.append(blk.A.T @ (blk.w[:, None] * Phi))
            cols.extend((sg.field, lag, node) for node in sg.nodes for lag in range(len(times)))
        if not mats:
            return np.zeros((self.n, 0)), cols
        return np.hstack(mats), cols

    def source_values(self, t_ref):
        """Data ``g`` of the volume and interface rows at correction time ``t_ref``."""
        out = []
        for blk in self.source_blocks:
            m = blk.meta
            t = t_ref + self.tm + self.Lt * m["tau"]
            if blk.kind == "volume":
                if m["comp"] == 3 or not getattr(self.problem, "has_sources", False):
                    out.append(np.zeros(m["x"].size))
                else:
                    out.append(self.problem.sources(m["side"], m["x"], m["y"], t)[m["comp"]])
            else:
                if not getattr(self.problem, "has_interface_data", False):
                    out.append(np.zeros(m["x"].size))
                else:
                    out.append(self.problem.interface_data(m["x"], m["y"], m["nx"], m["ny"], t)[m["comp"]])
        return np.concatenate(out) if out else np.zeros(0)

    def source_map(self):
        """``b_src = B @ g`` with ``g`` from :meth:`source_values`."""
        return np.hstack([blk.A.T * blk.w[None, :] for blk in self.source_blocks])

    def rhs(self, t_ref, samples=None, level_times=None):
        b = self.source_map() @ self.source_values(t_ref)
        if samples is not None and self.fictitious_blocks:
            B, _ = self.fictitious_map(level_times)
            b = b + B @ samples
        return b

    def value(self, c, t_ref, samples=None, level_times=None):
        """J(c) by direct quadrature of every term."""
        g_src = self.source_values(t_ref)
        total = 0.0
        pos = 0
        for blk in self.source_blocks:
            n = blk.A.shape[0]
            r = blk.A @ c - g_src[pos:pos + n]
            pos += n
            total += 0.5 * np.sum(blk.w * r * r)
        if samples is not None:
            col = 0
            for blk in self.fictitious_blocks:
                times = level_times[blk.meta["seg"].field]
                interp = self.interpolant(blk, times)
                k = len(blk.meta["positions"]) * len(times)
                interp.values = samples[col:col + k]
                col += k
                r = blk.A @ c - interp(blk.meta["s"], blk.meta["t"])
                total += 0.5 * np.sum(blk.w * r * r)
        return total

    def query_rows(self, fname, x, y, t_rel, d=(0, 0, 0)):
        """Rows giving the jump D = F+ - F- (unknown sides only) at points."""
        xi, eta, tau = self.to_local(x, y, t_rel)
        comp = {"Hx": 0, "Hy": 1, "Ez": 2}[fname]
        rows = 0.0
        for s in self.sides:
            rows = rows + _SIGN[s] * self.basis_rows(s, xi, eta, tau, d)[comp]
        return rows


def assemble(patch, config, problem, t_ref=0.0, samples=None, level_times=None, sides=(PLUS, MINUS)):
    """Gram matrix ``M`` and linear term ``b`` of the patch functional."""
    pf = PatchFunctional(patch, config, problem, sides, use_fictitious=samples is not None)
    return pf.M, pf.rhs(t_ref, samples, level_times)


@dataclass
class Factorization:
    cho: tuple
    lam: float
    M: np.ndarray

    def solve(self, b):
        return cho_solve(self.cho, b)


def factorize(M, tikhonov=1e-12):
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    lam = tikhonov * np.trace(M) / n
    if lam == 0.0:
        lam = tikhonov
    try:
        cho = cho_factor(M + lam * np.eye(n), lower=False)
    except LinAlgError as exc:
        raise SolverBreakdownError(f"Cholesky factorization failed: {exc}") from exc
    return Factorization(cho, lam, M)


def minimize(M, b, tikhonov=1e-12):
    """Solve ``(M + lam I) c = b`` with ``lam = tikhonov * tr(M) / n``.

    Returns ``(c, info)``; a :class:`ConditioningWarning` is issued when the
    relative backward error ``|Mc - b| / (|M| |c| + |b|)`` exceeds 1e-8,
    i.e. when the solve lost far more than the regularization accounts for.
    """
    fac = factorize(M, tikhonov)
    b = np.asarray(b, dtype=float)
    c = fac.solve(b)
    res = float(np.linalg.norm(M @ c - b))
    nb = float(np.linalg.norm(b))
    scale = float(np.linalg.norm(M, 2) * np.linalg.norm(c)) + nb
    info = dict(lam=fac.lam, residual=res, well_conditioned=res <= 1e-8 * max(scale, 1e-300))
    if nb > 0 and not info["well_conditioned"]:
        warnings.warn(f"CFM minimization backward error {res / scale:.3e} exceeds 1e-8",
                      ConditioningWarning, stacklevel=2)
    return c, info


class CorrectionFunction:
    """Polynomial extensions of both sides on one patch."""

    def __init__(self, functional, coeffs, t_ref=0.0):
        self.f = functional
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.t_ref = t_ref
        self.patch_id = functional.patch.id

    @property
    def window(self):
        w0, w1 = self.f.patch.window
        return self.t_ref + w0, self.t_ref + w1

    def _check(self, x, y, t):
        t0, t1 = self.window
        tol = 1e-9 * max(1.0, abs(t1 - t0))
        if not np.all(self.f.patch.contains(x, y)) or np.any(np.asarray(t) < t0 - tol) or np.any(np.asarray(t) > t1 + tol):
            raise OutOfPatchError("evaluation point outside the patch box x time window")

    def evaluate(self, side, fname, x, y, t, d=(0, 0, 0)):
        """Value of the ``side`` extension of ``fname`` (zero for known sides)."""
        self._check(x, y, t)
        if side not in self.f.sides:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y), np.asarray(t)).shape)
        x, y, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float))
        xi, eta, tau = self.f.to_local(x.ravel(), y.ravel(), t.ravel() - self.t_ref)
        comp = {"Hx": 0, "Hy": 1, "Ez": 2}[fname]
        vals = self.f.basis_rows(side, xi, eta, tau, d)[comp] @ self.coeffs
        return vals.reshape(x.shape)

    def jump(self, fname, x, y, t, d=(0, 0, 0)):
        return self.evaluate(PLUS, fname, x, y, t, d) - self.evaluate(MINUS, fname, x, y, t, d)

    def jump_at(self, fname, point, t):
        return float(self.jump(fname, point[0], point[1], t))


def solve_patch(functional, t_ref=0.0, samples=None, level_times=None, tikhonov=1e-12):
    c, _ = minimize(functional.M, functional.rhs(t_ref, samples, level_times), tikhonov)
    return CorrectionFunction(functional, c, t_ref)
