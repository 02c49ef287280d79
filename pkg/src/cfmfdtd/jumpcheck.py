"""Explicit high-order jump conditions evaluated on computed correction functions.

Every condition is a closed-form expression of one side's polynomial
expansions (derivatives are exact polynomial derivatives) and the
coefficients; its jump ``[[.]] = (+) - (-)`` is integrated over the
interface samples of the patch at ``t_f``:

    E(patch, condition) = ( sum_q w_q [[c]](p_q, t_f)^2 )^(1/2)

The error of an order is the root-sum-square over the conditions of that
order, and ``E_i`` is its maximum over patches.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .cfm.functional import OutOfPatchError
from .geometry import MINUS, PLUS


@dataclass(frozen=True)
class JumpCondition:
    name: str
    order: int
    #: ``expr(cf, side, x, y, nx, ny, t, problem) -> values`` of one side
    expr: Callable


def _d(cf, side, fname, x, y, t, d):
    return cf.evaluate(side, fname, x, y, t, d)


def _eps(problem, side, x, y):
    return problem.material(side, x, y)[1]


def _non_magnetic():
    def c(name, order, fn):
        return JumpCondition(name, order, fn)

    def field(fname, d):
        return lambda cf, s, x, y, nx, ny, t, p: _d(cf, s, fname, x, y, t, d)

    def over_eps(fn, power=1):
        return lambda cf, s, x, y, nx, ny, t, p: fn(cf, s, x, y, t) / _eps(p, s, x, y) ** power

    return (
        c("[[Hx]]", 0, field("Hx", (0, 0, 0))),
        c("[[Hy]]", 0, field("Hy", (0, 0, 0))),
        c("[[Ez]]", 0, field("Ez", (0, 0, 0))),
        c("[[dy Ez]]", 1, field("Ez", (0, 1, 0))),
        c("[[dx Ez]]", 1, field("Ez", (1, 0, 0))),
        c("[[(dx Hy - dy Hx)/eps]]", 1, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Hy", x, y, t, (1, 0, 0)) - _d(cf, s, "Hx", x, y, t, (0, 1, 0)))),
        # printed with a minus sign in the paper; continuity of d_tt Ez gives the
        # Laplacian, and the exact scattering solution violates the printed form
        c("[[(dxx Ez + dyy Ez)/eps]]", 2, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Ez", x, y, t, (2, 0, 0)) + _d(cf, s, "Ez", x, y, t, (0, 2, 0)))),
        c("[[(dyy Hx - dxy Hy)/eps]]", 2, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Hx", x, y, t, (0, 2, 0)) - _d(cf, s, "Hy", x, y, t, (1, 1, 0)))),
        c("[[(dxx Hy - dxy Hx)/eps]]", 2, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Hy", x, y, t, (2, 0, 0)) - _d(cf, s, "Hx", x, y, t, (1, 1, 0)))),
        c("[[(dxxy Ez + dyyy Ez)/eps]]", 3, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Ez", x, y, t, (2, 1, 0)) + _d(cf, s, "Ez", x, y, t, (0, 3, 0)))),
        c("[[(dxxx Ez + dxyy Ez)/eps]]", 3, over_eps(
            lambda cf, s, x, y, t: _d(cf, s, "Ez", x, y, t, (3, 0, 0)) + _d(cf, s, "Ez", x, y, t, (1, 2, 0)))),
        c("[[(dxxx Hy + dxyy Hy - dyyy Hx - dxxy Hx)/eps^2]]", 3, over_eps(
            lambda cf, s, x, y, t: (_d(cf, s, "Hy", x, y, t, (3, 0, 0)) + _d(cf, s, "Hy", x, y, t, (1, 2, 0))
                                    - _d(cf, s, "Hx", x, y, t, (0, 3, 0)) - _d(cf, s, "Hx", x, y, t, (2, 1, 0))),
            power=2)),
    )


def _frame(cf, s, x, y, nx, ny, t, p, d=(0, 0, 0)):
    """``(H_n, H_tau)`` in the local frame, tau = n rotated by +90 degrees."""
    hx = _d(cf, s, "Hx", x, y, t, d)
    hy = _d(cf, s, "Hy", x, y, t, d)
    return nx * hx + ny * hy, -ny * hx + nx * hy


def _dn(nx, ny, dx, dy):
    return nx * dx + ny * dy


def _dtau(nx, ny, dx, dy):
    return -ny * dx + nx * dy


def _mu_terms(p, s, x, y):
    mu, eps = p.material(s, x, y)
    mux, muy, _, _ = p.material_gradient(s, x, y)
    return mu, eps, mux, muy


def _magnetic():
    def h_tau(cf, s, x, y, nx, ny, t, p):
        return _frame(cf, s, x, y, nx, ny, t, p)[1]

    def mu_h_n(cf, s, x, y, nx, ny, t, p):
        return p.material(s, x, y)[0] * _frame(cf, s, x, y, nx, ny, t, p)[0]

    def ez(cf, s, x, y, nx, ny, t, p):
        return _d(cf, s, "Ez", x, y, t, (0, 0, 0))

    def dtau_ez(cf, s, x, y, nx, ny, t, p):
        return _dtau(nx, ny, _d(cf, s, "Ez", x, y, t, (1, 0, 0)), _d(cf, s, "Ez", x, y, t, (0, 1, 0)))

    def dn_ez_over_mu(cf, s, x, y, nx, ny, t, p):
        dn = _dn(nx, ny, _d(cf, s, "Ez", x, y, t, (1, 0, 0)), _d(cf, s, "Ez", x, y, t, (0, 1, 0)))
        return dn / p.material(s, x, y)[0]

    def _mu_h_derivs(cf, s, x, y, nx, ny, t, p):
        """d_n and d_tau of mu H_n and mu H_tau by the product rule."""
        mu, _, mux, muy = _mu_terms(p, s, x, y)
        hn, ht = _frame(cf, s, x, y, nx, ny, t, p)
        hn_x, ht_x = _frame(cf, s, x, y, nx, ny, t, p, (1, 0, 0))
        hn_y, ht_y = _frame(cf, s, x, y, nx, ny, t, p, (0, 1, 0))
        mun, mut = _dn(nx, ny, mux, muy), _dtau(nx, ny, mux, muy)
        return (mun * hn + mu * _dn(nx, ny, hn_x, hn_y), mut * hn + mu * _dtau(nx, ny, hn_x, hn_y),
                mun * ht + mu * _dn(nx, ny, ht_x, ht_y), mut * ht + mu * _dtau(nx, ny, ht_x, ht_y))

    def div_mu_h(cf, s, x, y, nx, ny, t, p):
        dn_muhn, _, _, dtau_muht = _mu_h_derivs(cf, s, x, y, nx, ny, t, p)
        return dn_muhn + dtau_muht

    def curl_mu_h(cf, s, x, y, nx, ny, t, p):
        _, dtau_muhn, dn_muht, _ = _mu_h_derivs(cf, s, x, y, nx, ny, t, p)
        mu, eps = p.material(s, x, y)
        return dn_muht - dtau_muhn - mu * eps * _d(cf, s, "Ez", x, y, t, (0, 0, 1))

    c = JumpCondition
    return (
        c("[[H_tau]]", 0, h_tau),
        c("[[mu H_n]]", 0, mu_h_n),
        c("[[Ez]]", 0, ez),
        c("[[d_tau Ez]]", 1, dtau_ez),
        c("[[d_n Ez / mu]]", 1, dn_ez_over_mu),
        c("[[d_n(mu H_n) + d_tau(mu H_tau)]]", 1, div_mu_h),
        c("[[d_n(mu H_tau) - d_tau(mu H_n) - d_t(mu eps Ez)]]", 1, curl_mu_h),
    )


NON_MAGNETIC = _non_magnetic()
MAGNETIC = _magnetic()


def condition_set(regime):
    """The printed condition list of ``regime`` ('non-magnetic' or 'magnetic')."""
    if regime == "non-magnetic":
        return NON_MAGNETIC
    if regime == "magnetic":
        return MAGNETIC
    raise ValueError(f"unknown material regime {regime!r}")


def regime_of(problem):
    mup = np.asarray(problem.material(PLUS, 0.0, 0.0)[0])
    mum = np.asarray(problem.material(MINUS, 0.0, 0.0)[0])
    return "non-magnetic" if np.allclose(mup, mum) else "magnetic"


def _check_window(correction, t_f):
    lo, hi = correction.window
    tol = 1e-9 * max(1.0, hi - lo)
    if not (lo - tol <= t_f <= hi + tol):
        raise OutOfPatchError(f"t_f = {t_f} outside the patch window [{lo}, {hi}]")


def jump_error(correction, condition, t_f):
    """L2(Gamma cap patch) norm of the jump of ``condition`` at ``t_f``."""
    _check_window(correction, t_f)
    pf = correction.f
    smp = pf.patch.samples
    t = np.full(smp.x.shape, float(t_f))
    vals = [condition.expr(correction, s, smp.x, smp.y, smp.nx, smp.ny, t, pf.problem) for s in (PLUS, MINUS)]
    r = vals[0] - vals[1]
    return float(np.sqrt(np.sum(smp.weights * r * r)))


def order_errors(correction, conditions, t_f):
    """Per-order root-sum-square of the condition errors of one patch."""
    out = {}
    for cond in conditions:
        e = jump_error(correction, cond, t_f)
        out[cond.order] = out.get(cond.order, 0.0) + e * e
    return {q: float(np.sqrt(v)) for q, v in out.items()}


def max_over_patches(corrections, conditions, t_f):
    """``{order: E_i}``: the maximum over patches of each order's error."""
    table = {}
    for cf in corrections:
        for q, e in order_errors(cf, conditions, t_f).items():
            table[q] = max(table.get(q, 0.0), e)
    return table


def corrections_at(result, event="E"):
    """Correction functions of every two-sided patch at the run's final time.

    After a full step ``E`` is at ``t_n`` and ``H`` at ``t_{n-1/2}``, which
    is the history of the "E" event at ``t_n``.
    """
    op = result.operator
    state = result.state
    t = state.t_e if event == "E" else state.t_h
    out = []
    for iface, node in op.patch_keys():
        spec = op.plan.layout.interfaces[iface]
        if tuple(spec.sides) != (PLUS, MINUS):
            continue
        out.append(op.correction_function(iface, node, state, t, event))
    return out, t


def jump_table(result, regime=None):
    """``{order: E_i}`` for a finished :class:`~cfmfdtd.harness.RunResult`."""
    corrections, t = corrections_at(result)
    if not corrections:
        return {}
    if regime is None:
        regime = regime_of(corrections[0].f.problem)
    return max_over_patches(corrections, condition_set(regime), t)


def write_jump_csv(hs, tables, path, header=None):
    """One row per ``(h, order, E_i)``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        w = csv.writer(fh)
        w.writerow(["h", "order", "E"])
        for h, table in zip(hs, tables):
            if not table:
                continue
            for q in sorted(table):
                w.writerow([repr(float(h)), q, repr(table[q])])
    return path
