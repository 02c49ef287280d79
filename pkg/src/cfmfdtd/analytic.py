"""Reference solutions: dielectric-cylinder scattering and a manufactured problem.

Both expose the same small surface used by the solver and the tests:

``fields(side, x, y, t)``
    ``(Hx, Hy, Ez)`` of the requested side, evaluated anywhere (each
    closed form is a smooth extension across the interface).
``material(side, x, y)`` / ``material_gradient(side, x, y)``
    ``(mu, eps)`` and ``(dmu/dx, dmu/dy, deps/dx, deps/dy)``.
``sources(side, x, y, t)``
    ``(f1x, f1y, f2)`` with ``mu dH/dt + curl E = f1`` and
    ``eps dE/dt - curl H = f2``.
``interface_data(x, y, nx, ny, t)``
    ``(a, b, c, d)``: the TM_z right-hand sides of the interface
    conditions, ``a = [[Ez]]``, ``b = nx [[Hy]] - ny [[Hx]]``,
    ``c = 0`` and ``d = [[mu (nx Hx + ny Hy)]]``.

``side`` is ``+1`` (outer region) or ``-1`` (inner region).
"""

from dataclasses import dataclass

import numpy as np

from .geometry import MINUS, PLUS
from .special import bessel_j_all, bessel_y_all, cylinder_tables


def _with_derivative(tab):
    """Rows 0..m-1 of a cylinder-function table and their derivatives."""
    d = np.empty_like(tab[:-1])
    d[0] = -tab[1]
    d[1:] = 0.5 * (tab[:-2] - tab[2:])
    return tab[:-1], d


def _zeros_like(*arrays):
    return np.zeros(np.broadcast(*arrays).shape)


class ReferenceSolution:
    """Shared helpers; subclasses provide ``fields`` and ``material``."""

    has_sources = False
    has_interface_data = False

    def material_gradient(self, side, x, y):
        z = _zeros_like(x, y)
        return z, z.copy(), z.copy(), z.copy()

    def sources(self, side, x, y, t):
        z = _zeros_like(x, y, t)
        return z, z.copy(), z.copy()

    def interface_data(self, x, y, nx, ny, t):
        hxp, hyp, ezp = self.fields(PLUS, x, y, t)
        hxm, hym, ezm = self.fields(MINUS, x, y, t)
        mup, _ = self.material(PLUS, x, y)
        mum, _ = self.material(MINUS, x, y)
        a = ezp - ezm
        b = nx * (hyp - hym) - ny * (hxp - hxm)
        c = np.zeros_like(a)
        d = nx * (mup * hxp - mum * hxm) + ny * (mup * hyp - mum * hym)
        return a, b, c, d

    def sampler(self, side, x, y):
        """Callable ``t -> (Hx, Hy, Ez)`` at fixed points.

        ``side`` may be a scalar or an array of +/-1 matching ``x``.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        side = np.broadcast_to(np.asarray(side), x.shape)

        def evaluate(t):
            out = [np.empty(x.shape) for _ in range(3)]
            for s in (PLUS, MINUS):
                m = side == s
                if np.any(m):
                    vals = self.fields(s, x[m], y[m], t)
                    for o, v in zip(out, vals):
                        o[m] = v
            return tuple(out)

        return evaluate


@dataclass
class ScatteringSolution(ReferenceSolution):
    """TM_z plane wave scattered by a circular dielectric cylinder.

    The incident wave is ``sum_n i^-n J_n(k+ r) e^{i(n theta + omega t)}``;
    the physical field is the real part of the complex series.
    """

    mu_plus: float = 1.0
    mu_minus: float = 1.0
    eps_plus: float = 1.0
    eps_minus: float = 2.25
    omega: float = 2.0 * np.pi
    r0: float = 0.6
    center: tuple = (0.0, 0.0)
    nterms: int = 40

    def __post_init__(self):
        self.k_plus = self.omega * np.sqrt(self.mu_plus * self.eps_plus)
        self.k_minus = self.omega * np.sqrt(self.mu_minus * self.eps_minus)
        self.c_tot, self.c_scat = self._coefficients()

    @property
    def orders(self):
        return np.arange(-self.nterms, self.nterms + 1)

    def _coefficients(self):
        n = self.orders
        N = self.nterms
        jp, djp, yp, dyp = cylinder_tables(N, np.array([self.k_plus * self.r0]))
        jm, djm, _, _ = cylinder_tables(N, np.array([self.k_minus * self.r0]))
        sgn = np.where(n % 2 == 0, 1.0, -1.0)
        idx = np.abs(n)

        def signed(tab):
            return np.where(n >= 0, 1.0, sgn) * tab[idx, 0]

        Jp, dJp = signed(jp), signed(djp)
        Yp, dYp = signed(yp), signed(dyp)
        Jm, dJm = signed(jm), signed(djm)
        Hp = Jp - 1j * Yp
        dHp = dJp - 1j * dYp
        ap = self.k_plus / self.mu_plus
        am = self.k_minus / self.mu_minus
        phase = (1j) ** (-n)
        denom = am * dJm * Hp - ap * dHp * Jm
        c_tot = phase * ap * (dJp * Hp - dHp * Jp) / denom
        c_scat = phase * (ap * dJp * Jm - am * dJm * Jp) / denom
        return c_tot, c_scat

    def material(self, side, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        if side == PLUS:
            return np.full(shape, self.mu_plus), np.full(shape, self.eps_plus)
        return np.full(shape, self.mu_minus), np.full(shape, self.eps_minus)

    def polar_amplitudes(self, side, r, theta):
        """Complex ``(H_r, H_theta, E_z)`` amplitudes of the ``e^{i omega t}`` factor."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        N = self.nterms
        n = self.orders
        shape = np.broadcast(r, theta).shape
        r = np.broadcast_to(r, shape).ravel()
        theta = np.broadcast_to(theta, shape).ravel()
        if side == MINUS:
            k, mu = self.k_minus, self.mu_minus
        else:
            k, mu = self.k_plus, self.mu_plus
        jt, djt = _with_derivative(bessel_j_all(N + 2, k * r))
        if side == PLUS:
            yt, dyt = _with_derivative(bessel_y_all(N + 2, k * r))

        def signed(tab, m):
            # tab holds orders 0..N+1; returns rows for signed orders m
            s = np.where((m < 0) & (np.abs(m) % 2 == 1), -1.0, 1.0)
            return s[:, None] * tab[np.abs(m)]

        if side == MINUS:
            Z = signed(jt, n)
            dZ = signed(djt, n)
            Zm1 = signed(jt, n - 1)
            Zp1 = signed(jt, n + 1)
            coef = self.c_tot
        else:
            H = jt - 1j * yt
            dH = djt - 1j * dyt
            coef_inc = (1j) ** (-n)
            Z = coef_inc[:, None] * signed(jt, n) + self.c_scat[:, None] * signed(H, n)
            dZ = coef_inc[:, None] * signed(djt, n) + self.c_scat[:, None] * signed(dH, n)
            Zm1 = coef_inc[:, None] * signed(jt, n - 1) + self.c_scat[:, None] * signed(H, n - 1)
            Zp1 = coef_inc[:, None] * signed(jt, n + 1) + self.c_scat[:, None] * signed(H, n + 1)
            coef = np.ones(n.size)
        e = np.exp(1j * n[:, None] * theta[None, :]) * coef[:, None]
        ez = np.sum(e * Z, axis=0)
        h_theta = -1j * k / (self.omega * mu) * np.sum(e * dZ, axis=0)
        # n Z_n(kr)/r = (k/2) (Z_{n-1} + Z_{n+1}) avoids the r = 0 singularity
        h_r = -(k / (2.0 * self.omega * mu)) * np.sum(e * (Zm1 + Zp1), axis=0)
        return h_r.reshape(shape), h_theta.reshape(shape), ez.reshape(shape)

    def amplitudes(self, side, x, y):
        """Complex Cartesian ``(Hx, Hy, Ez)`` amplitudes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dx = x - self.center[0]
        dy = y - self.center[1]
        r = np.hypot(dx, dy)
        theta = np.arctan2(dy, dx)
        h_r, h_t, ez = self.polar_amplitudes(side, r, theta)
        c, s = np.cos(theta), np.sin(theta)
        return h_r * c - h_t * s, h_r * s + h_t * c, ez

    def polar_fields(self, side, r, theta, t):
        phase = np.exp(1j * self.omega * t)
        return tuple(np.real(a * phase) for a in self.polar_amplitudes(side, r, theta))

    def fields(self, side, x, y, t):
        phase = np.exp(1j * self.omega * np.asarray(t))
        return tuple(np.real(a * phase) for a in self.amplitudes(side, x, y))

    def sampler(self, side, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        side = np.broadcast_to(np.asarray(side), x.shape)
        amps = [np.zeros(x.shape, dtype=complex) for _ in range(3)]
        for s in (PLUS, MINUS):
            m = side == s
            if np.any(m):
                for a, v in zip(amps, self.amplitudes(s, x[m], y[m])):
                    a[m] = v

        def evaluate(t):
            phase = np.exp(1j * self.omega * t)
            return tuple(np.real(a * phase) for a in amps)

        return evaluate

    def interface_data(self, x, y, nx, ny, t):
        z = _zeros_like(x, y, t)
        return z, z.copy(), z.copy(), z.copy()


class ManufacturedSolution(ReferenceSolution):
    """Discontinuous manufactured fields with varying coefficients inside.

    mu+ = 2, eps+ = 1 outside; mu- = sin(5 pi x y) + 2, eps- = 2 exp(x y)
    inside.  Both sides are divergence free and periodic-compatible on the
    unit square.
    """

    has_sources = True
    has_interface_data = True
    #: every source and interface datum is a cos/sin(omega t) combination
    omega = 2.0 * np.pi

    def fields(self, side, x, y, t):
        tp = 2.0 * np.pi
        if side == PLUS:
            hx = 0.5 * np.sin(tp * x) * np.sin(tp * y) * np.sin(tp * t)
            hy = 0.5 * np.cos(tp * x) * np.cos(tp * y) * np.sin(tp * t)
            ez = np.sin(tp * x) * np.cos(tp * y) * np.cos(tp * t)
            return hx, hy, ez
        ex = np.exp(-x * y)
        hx = -x * ex * np.sin(tp * t)
        hy = y * ex * np.sin(tp * t)
        ez = np.sin(tp * x * y) * np.cos(tp * t)
        return hx, hy, ez

    def material(self, side, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if side == PLUS:
            shape = np.broadcast(x, y).shape
            return np.full(shape, 2.0), np.full(shape, 1.0)
        return np.sin(5.0 * np.pi * x * y) + 2.0, 2.0 * np.exp(x * y)

    def material_gradient(self, side, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if side == PLUS:
            return super().material_gradient(side, x, y)
        c = 5.0 * np.pi * np.cos(5.0 * np.pi * x * y)
        e = 2.0 * np.exp(x * y)
        return c * y, c * x, e * y, e * x

    def sources(self, side, x, y, t):
        if side == PLUS:
            return super().sources(side, x, y, t)
        tp = 2.0 * np.pi
        xy = x * y
        mu = np.sin(5.0 * np.pi * xy) + 2.0
        emxy = np.exp(-xy)
        f1x = tp * x * (np.cos(tp * xy) - mu * emxy) * np.cos(tp * t)
        f1y = tp * y * (mu * emxy - np.cos(tp * xy)) * np.cos(tp * t)
        f2 = ((x * x + y * y) * emxy - 4.0 * np.pi * np.exp(xy) * np.sin(tp * xy)) * np.sin(tp * t)
        return f1x, f1y, f2
