"""Global linear maps from FD history to stencil corrections.

The Gram matrix of every patch depends only on geometry and coefficients,
so each patch is factorized once and the jumps it returns are linear in
the FD samples and in the source/interface data:

    D = G @ samples + R @ g(t)

``G`` and ``R`` are assembled into one sparse matrix per correction event
("E": E_z jumps at ``t_n`` before the H update; "H": H jumps at
``t_{n+1/2}`` after it).  A step then costs two sparse products.
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..geometry import MINUS, PLUS, build_patch
from ..grid import FIELDS
from .functional import CfmConfig, CorrectionFunction, PatchFunctional, factorize


@dataclass(frozen=True)
class CouplingConfig:
    """How patches are placed in time and fed with FD data.

    ``window`` is the patch time interval in units of dt relative to the
    correction time; ``levels`` is the number of stored time levels of each
    field used by the fictitious interpolants (temporal degree levels-1).
    """

    cfm: CfmConfig
    window: tuple = (-2.0, 0.0)
    levels: int = 3


def level_times(event, dt, levels):
    """Times (relative to the event time) of the lag-0.. levels of each field."""
    lead = "Ez" if event == "E" else "H"
    out = {}
    for f in FIELDS:
        shift = 0.0 if (f == "Ez") == (lead == "Ez") else 0.5
        out[f] = [-(m + shift) * dt for m in range(levels)]
    return out


class CorrectionOperator:
    """Per-patch CFM solves turned into global sparse maps."""

    def __init__(self, plan, coupling, diagnostics=None):
        self.plan = plan
        self.coupling = coupling
        grid = plan.grid
        self.grid = grid
        dt = grid.dt
        window = (coupling.window[0] * dt, coupling.window[1] * dt)
        layout = plan.layout
        self.interface_labels = []
        for spec in layout.interfaces:
            lab = {}
            for f in FIELDS:
                L = plan.labels[f]
                lab[f] = np.where(L == spec.plus, PLUS, np.where(L == spec.minus, MINUS, 0))
            self.interface_labels.append(lab)
        self.functionals = {}
        self.slot_offset = {}
        off = 0
        for f in FIELDS:
            for lag in range(coupling.levels):
                self.slot_offset[(f, lag)] = off
                off += int(np.prod(grid.shape(f)))
        self.n_samples = off
        self.maps = {}
        self.records = []
        for event in ("E", "H"):
            self.maps[event] = self._build_event(event, window, dt)
        if diagnostics is not None:
            self.write_diagnostics(diagnostics)

    # -------------------------------------------------------------- setup
    def functional(self, iface, node, window):
        key = (iface, node)
        if key not in self.functionals:
            spec = self.plan.layout.interfaces[iface]
            cfg = self.coupling.cfm
            one_sided = tuple(spec.sides) != (PLUS, MINUS)
            patch = build_patch(spec.interface, self.grid, node, spec.beta, window,
                                labels=self.interface_labels[iface], sides=spec.sides,
                                min_nodes=cfg.fd_space_degree + 1, max_nodes=max(cfg.fd_space_degree + 1, 5),
                                node_id=len(self.functionals))
            pf = PatchFunctional(patch, cfg, spec.problem, spec.sides, use_fictitious=not one_sided)
            fac = factorize(pf.M, cfg.tikhonov)
            self.functionals[key] = (pf, fac)
        return self.functionals[key]

    def _build_event(self, event, window, dt):
        plan = self.plan
        queries = plan.queries[event]
        groups = {}
        for qi, (q, node) in enumerate(zip(queries, plan.patch_nodes[event])):
            groups.setdefault((q.iface, node), []).append(qi)
        times = level_times(event, dt, self.coupling.levels)
        g_rows, g_cols, g_vals = [], [], []
        src_blocks = []
        for (iface, node), qidx in groups.items():
            pf, fac = self.functional(iface, node, window)
            rows = []
            for qi in qidx:
                q = queries[qi]
                i, j = np.unravel_index(q.node, self.grid.shape(q.field))
                x, y = self.grid.position(q.field, i, j)
                rows.append(pf.query_rows(q.field, np.array([x]), np.array([y]), np.array([0.0]))[0])
            Q = np.array(rows)
            QK = fac.solve(Q.T).T  # Q (M + lam I)^{-1}
            B, cols = pf.fictitious_map(times)
            if B.shape[1]:
                G = QK @ B
                gcols = np.array([self.slot_offset[(f, lag)] + node_ for (f, lag, node_) in cols])
                for r, qi in enumerate(qidx):
                    g_rows.append(np.full(gcols.size, qi))
                    g_cols.append(gcols)
                    g_vals.append(G[r])
            problem = pf.problem
            if getattr(problem, "has_sources", False) or getattr(problem, "has_interface_data", False):
                src_blocks.append((qidx, QK @ pf.source_map(), pf))
            self.records.append(dict(event=event, iface=iface, node=node, patch=pf.patch.id,
                                     queries=len(qidx)))
        nq = len(queries)
        if g_rows:
            G = sp.csr_matrix((np.concatenate(g_vals), (np.concatenate(g_rows), np.concatenate(g_cols))),
                              shape=(nq, self.n_samples))
            G.sum_duplicates()
        else:
            G = sp.csr_matrix((nq, self.n_samples))
        return dict(G=G, sources=src_blocks, nq=nq, harmonic=self._harmonic(src_blocks))

    def _harmonic(self, src_blocks):
        """Precompute the data term for time-harmonic problems.

        If every problem with data declares ``omega`` (data of the form
        ``a cos(omega t) + b sin(omega t)``), the data term at any time is
        ``cos(omega t) d0 + sin(omega t) d1``.
        """
        if not src_blocks:
            return None
        omegas = {getattr(pf.problem, "omega", None) for _, _, pf in src_blocks}
        if len(omegas) != 1 or None in omegas:
            return None
        omega = omegas.pop()
        d0 = self._source_term(src_blocks, 0.0)
        d1 = self._source_term(src_blocks, 0.5 * np.pi / omega)
        return omega, d0, d1

    def _source_term(self, src_blocks, t):
        out = {}
        for qidx, R, pf in src_blocks:
            vals = R @ pf.source_values(t)
            for qi, v in zip(qidx, vals):
                out[qi] = out.get(qi, 0.0) + v
        return out

    # --------------------------------------------------------------- use
    def samples(self, state):
        """Flattened FD history in the slot layout of the ``G`` maps."""
        levels = self.coupling.levels
        hist_e = state.history["E"]
        hist_h = state.history["H"]
        if len(hist_e) < levels or len(hist_h) < levels:
            raise ValueError("not enough stored time levels for the CFM interpolants")
        level = {"Hx": lambda m: hist_h[m][0], "Hy": lambda m: hist_h[m][1], "Ez": lambda m: hist_e[m]}
        return np.concatenate([level[f](m).ravel() for f in FIELDS for m in range(levels)])

    def data_term(self, event, t):
        mp = self.maps[event]
        out = np.zeros(mp["nq"])
        if not mp["sources"]:
            return out
        if mp["harmonic"] is not None:
            omega, d0, d1 = mp["harmonic"]
            c, s = np.cos(omega * t), np.sin(omega * t)
            for qi, v in d0.items():
                out[qi] += c * v
            for qi, v in d1.items():
                out[qi] += s * v
            return out
        for qi, v in self._source_term(mp["sources"], t).items():
            out[qi] += v
        return out

    def jumps(self, event, state, t):
        mp = self.maps[event]
        if mp["nq"] == 0:
            return np.zeros(0)
        return mp["G"] @ self.samples(state) + self.data_term(event, t)

    __call__ = jumps

    def correction_function(self, iface, node, state, t, event="H"):
        """Full two-sided correction function of one patch at time ``t``.

        Used for jump-condition diagnostics.  ``state`` must hold the
        history matching ``event``.
        """
        dt = self.grid.dt
        window = (self.coupling.window[0] * dt, self.coupling.window[1] * dt)
        pf, fac = self.functional(iface, node, window)
        times = level_times(event, dt, self.coupling.levels)
        B, cols = pf.fictitious_map(times)
        s_all = self.samples(state)
        samples = np.array([s_all[self.slot_offset[(f, lag)] + n] for (f, lag, n) in cols])
        b = B @ samples if cols else np.zeros(pf.n)
        if getattr(pf.problem, "has_sources", False) or getattr(pf.problem, "has_interface_data", False):
            b = b + pf.source_map() @ pf.source_values(t)
        return CorrectionFunction(pf, fac.solve(b), t)

    def patch_keys(self, iface=None):
        keys = sorted(self.functionals)
        return [k for k in keys if iface is None or k[0] == iface]

    def write_diagnostics(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["patch", "iface", "i", "j", "n_unknowns", "cond_estimate", "segments"])
            for (iface, node), (pf, fac) in sorted(self.functionals.items(), key=lambda kv: kv[1][0].patch.id):
                ev = np.linalg.eigvalsh(pf.M + fac.lam * np.eye(pf.n))
                w.writerow([pf.patch.id, iface, node[0], node[1], pf.n, f"{ev[-1] / ev[0]:.3e}",
                            len(pf.patch.segments)])


def exact_jumps(plan, event, t):
    """Jumps of the reference solution at the plan's query nodes."""
    layout = plan.layout
    grid = plan.grid
    comp = {"Hx": 0, "Hy": 1, "Ez": 2}
    queries = plan.queries[event]
    out = np.zeros(len(queries))
    groups = {}
    for n, q in enumerate(queries):
        groups.setdefault((q.iface, q.field), []).append(n)
    for (iface, fname), idx in groups.items():
        spec = layout.interfaces[iface]
        nodes = np.array([queries[n].node for n in idx])
        x, y = grid.position(fname, *np.unravel_index(nodes, grid.shape(fname)))
        vals = []
        for region in (spec.plus, spec.minus):
            if region in layout.media:
                prob, side = layout.media[region]
                vals.append(np.asarray(prob.fields(side, x, y, t)[comp[fname]], dtype=float))
            else:
                vals.append(np.zeros(len(idx)))
        out[idx] = vals[0] - vals[1]
    return out
