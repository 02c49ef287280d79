"""Integer-order Bessel and Hankel functions for real positive arguments.

J_n is computed with Miller's downward recurrence normalized by
J_0 + 2*sum(J_2k) = 1.  Y_0 and Y_1 come from the Neumann series in the
even-order J's, and higher orders follow from the (stable) upward
recurrence for Y.  Everything is vectorized over the argument.
"""

import numpy as np

EULER_GAMMA = 0.57721566490153286061

_BIG = 1e250


def _start_order(nmax, xmax):
    m = max(nmax, int(xmax)) + 20 + int(np.sqrt(40.0 * max(nmax, xmax, 1.0)))
    return m + (m % 2)


def _j_table(nmax, x):
    """Rows J_0 .. J_m for positive x, m >= nmax chosen by Miller's rule."""
    x = np.asarray(x, dtype=float)
    m = _start_order(nmax, float(x.max()))
    table = np.zeros((m + 1,) + x.shape)
    jp1 = np.zeros_like(x)
    jk = np.full_like(x, 1e-300)
    table[m] = jk
    norm = jk.copy() if m % 2 == 0 else np.zeros_like(x)
    norm *= 2.0
    for k in range(m, 0, -1):
        jm1 = (2.0 * k / x) * jk - jp1
        big = np.abs(jm1) > _BIG
        if np.any(big):
            scale = np.where(big, 1.0 / _BIG, 1.0)
            jm1 = jm1 * scale
            jk = jk * scale
            table[k:] *= scale
            norm = norm * scale
        table[k - 1] = jm1
        if (k - 1) % 2 == 0:
            norm = norm + (jm1 if k - 1 == 0 else 2.0 * jm1)
        jp1, jk = jk, jm1
    return table / norm


def bessel_j_all(nmax, x):
    """Array of shape (nmax+1, *x.shape) holding J_0..J_nmax at x >= 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_j_all requires x >= 0")
    flat = x.ravel()
    out = np.zeros((nmax + 1, flat.size))
    zero = flat == 0
    out[0, zero] = 1.0
    pos = ~zero
    if np.any(pos):
        out[:, pos] = _j_table(nmax, flat[pos])[: nmax + 1]
    return out.reshape((nmax + 1,) + x.shape)


def bessel_y_all(nmax, x):
    """Array of shape (nmax+1, *x.shape) holding Y_0..Y_nmax at x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Y_n and H_n are singular for x <= 0")
    shape = x.shape
    x = x.ravel()
    nout = nmax
    nmax = max(nmax, 1)
    jt = _j_table(nmax + 1, x)
    m = jt.shape[0] - 1
    lg = np.log(x / 2.0) + EULER_GAMMA
    s0 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    for k in range(1, m // 2):
        sign = -1.0 if k % 2 else 1.0
        s0 += sign * jt[2 * k] / k
        s1 += sign * (jt[2 * k - 1] - jt[2 * k + 1]) / (2.0 * k)
    y0 = (2.0 / np.pi) * (lg * jt[0] - 2.0 * s0)
    # Y_1 = -Y_0'
    y1 = -(2.0 / np.pi) * (jt[0] / x - lg * jt[1]) + (4.0 / np.pi) * s1
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = y0
    out[1] = y1
    for k in range(1, nmax):
        out[k + 1] = (2.0 * k / x) * out[k] - out[k - 1]
    return out[: nout + 1].reshape((nout + 1,) + shape)


def _signed(table, n):
    n = int(n)
    if n >= 0:
        return table[n]
    return table[-n] * (-1.0 if (-n) % 2 else 1.0)


def bessel_j(n, x):
    x = np.asarray(x, dtype=float)
    return _signed(bessel_j_all(abs(int(n)), x), n)


def bessel_y(n, x):
    x = np.asarray(x, dtype=float)
    return _signed(bessel_y_all(abs(int(n)), x), n)


def hankel2(n, x):
    """Hankel function of the second kind, J_n - i Y_n."""
    return bessel_j(n, x) - 1j * bessel_y(n, x)


def _derivative(table, n):
    return 0.5 * (_signed(table, n - 1) - _signed(table, n + 1))


def bessel_jp(n, x):
    x = np.asarray(x, dtype=float)
    return _derivative(bessel_j_all(abs(int(n)) + 1, x), n)


def bessel_yp(n, x):
    x = np.asarray(x, dtype=float)
    return _derivative(bessel_y_all(abs(int(n)) + 1, x), n)


def hankel2p(n, x):
    return bessel_jp(n, x) - 1j * bessel_yp(n, x)


def cylinder_tables(nmax, x):
    """J_n, J_n', Y_n, Y_n' for n = 0..nmax in one pass (x > 0).

    Returns four arrays of shape (nmax+1, *x.shape).
    """
    x = np.asarray(x, dtype=float)
    jt = bessel_j_all(nmax + 1, x)
    yt = bessel_y_all(nmax + 1, x)
    jp = np.empty((nmax + 1,) + x.shape)
    yp = np.empty_like(jp)
    jp[0] = -jt[1]
    yp[0] = -yt[1]
    jp[1:] = 0.5 * (jt[:nmax] - jt[2 : nmax + 2])
    yp[1:] = 0.5 * (yt[:nmax] - yt[2 : nmax + 2])
    return jt[: nmax + 1], jp, yt[: nmax + 1], yp
