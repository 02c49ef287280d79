"""Space-time polynomial bases in patch-local coordinates (xi, eta, tau).

The E_z basis is the monomial basis of P^k(xi, eta, tau).  The H basis is
built from stream functions: for every monomial psi = xi^a eta^b tau^c of
degree <= k+1 with a + b >= 1, the field (d psi/d eta, -d psi/d xi) is a
divergence-free element of [P^k]^2.  These fields are linearly independent
and span the whole divergence-free subspace, whose dimension is
C(k+4, 3) - (k+2).  Coefficients are integers, so the divergence vanishes
exactly.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np


def monomials(degree):
    """Exponent triples (a, b, c) with a + b + c <= degree, graded order."""
    return [(a, d - a - c, c) for d in range(degree + 1) for c in range(d + 1)
            for a in range(d - c, -1, -1)]


@dataclass(frozen=True)
class DivFreePolyBasis:
    degree: int
    exps: tuple  # monomials of degree <= k
    hx: np.ndarray  # (n_mono, n_H) integer coefficients
    hy: np.ndarray
    ez: np.ndarray  # (n_mono, n_E), identity

    @property
    def n_h(self):
        return self.hx.shape[1]

    @property
    def n_e(self):
        return self.ez.shape[1]

    @property
    def size(self):
        """Unknowns per side."""
        return self.n_h + self.n_e

    def divergence_coefficients(self):
        """Coefficients of d(hx)/d(xi) + d(hy)/d(eta) over the monomials (exact)."""
        index = {e: r for r, e in enumerate(self.exps)}
        div = np.zeros_like(self.hx)
        for r, (a, b, c) in enumerate(self.exps):
            if a > 0:
                div[index[(a - 1, b, c)]] += a * self.hx[r]
            if b > 0:
                div[index[(a, b - 1, c)]] += b * self.hy[r]
        return div

    def monomial_values(self, xi, eta, tau, d=(0, 0, 0)):
        """Matrix (n_points, n_mono) of d-derivatives of the monomials."""
        xi, eta, tau = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (xi, eta, tau))
        k = self.degree
        pw = []
        for v, dv in zip((xi, eta, tau), d):
            p = np.zeros((k + 1, v.size))
            for e in range(dv, k + 1):
                p[e] = _falling(e, dv) * v ** (e - dv)
            pw.append(p)
        ex = np.asarray(self.exps)
        return (pw[0][ex[:, 0]] * pw[1][ex[:, 1]] * pw[2][ex[:, 2]]).T

    def evaluate(self, xi, eta, tau, d=(0, 0, 0)):
        """Values of the basis functions: ``(Hx, Hy, Ez)`` matrices."""
        m = self.monomial_values(xi, eta, tau, d)
        return m @ self.hx, m @ self.hy, m @ self.ez


def _falling(n, k):
    out = 1
    for q in range(k):
        out *= n - q
    return out


def h_dimension(k):
    return comb(k + 4, 3) - (k + 2)


@lru_cache(maxsize=None)
def build_basis(k):
    if k not in (1, 2, 3, 4):
        raise ValueError(f"unsupported basis degree {k}; expected 1..4")
    exps = monomials(k)
    index = {e: r for r, e in enumerate(exps)}
    streams = [(a, b, c) for (a, b, c) in monomials(k + 1) if a + b >= 1]
    hx = np.zeros((len(exps), len(streams)))
    hy = np.zeros((len(exps), len(streams)))
    for col, (a, b, c) in enumerate(streams):
        if b > 0:
            hx[index[(a, b - 1, c)], col] = b
        if a > 0:
            hy[index[(a - 1, b, c)], col] = -a
    ez = np.eye(len(exps))
    for arr in (hx, hy, ez):
        arr.setflags(write=False)
    return DivFreePolyBasis(k, tuple(exps), hx, hy, ez)
