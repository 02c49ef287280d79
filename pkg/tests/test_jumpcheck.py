import csv

import numpy as np
import pytest

from cfmfdtd import jumpcheck
from cfmfdtd.cfm.functional import CfmConfig, CorrectionFunction, OutOfPatchError, PatchFunctional, solve_patch
from cfmfdtd.geometry import build_patch
from cfmfdtd.grid import StaggeredGrid2D
from cfmfdtd.jumpcheck import (MAGNETIC, NON_MAGNETIC, condition_set, jump_error, max_over_patches,
                               order_errors, regime_of, write_jump_csv)

from helpers import CIRCLE, SCATTERING, exact_samples, random_circle_patch
from test_functional import StaticPolynomial


class ExactExpansion:
    """Stands in for a correction function: exact fields, derivatives by 4th-order central differences."""

    def __init__(self, sol, h=2e-3):
        self.sol, self.h = sol, h

    def evaluate(self, side, fname, x, y, t, d=(0, 0, 0)):
        comp = {"Hx": 0, "Hy": 1, "Ez": 2}[fname]
        h = self.h

        def diff(fun, axis):
            def g(X, Y, T):
                e = np.zeros(3)
                e[axis] = h
                a = lambda k: fun(X + k * e[0], Y + k * e[1], T + k * e[2])
                return (-a(2) + 8 * a(1) - 8 * a(-1) + a(-2)) / (12 * h)
            return g

        fun = lambda X, Y, T: self.sol.fields(side, X, Y, T)[comp]
        for axis, n in enumerate(d):
            for _ in range(n):
                fun = diff(fun, axis)
        return fun(*(np.asarray(v, float) for v in (x, y, t)))


@pytest.mark.parametrize("regime", ["non-magnetic", "magnetic"])
def test_conditions_hold_for_exact_solution(regime):
    # [DERIVED] each printed condition must vanish on the Mie series (FD oracle)
    from cfmfdtd.geometry import MINUS, PLUS
    sol = SCATTERING[regime]
    th = np.linspace(0, 2 * np.pi, 7, endpoint=False) + 0.1
    x, y, nx, ny = 0.6 * np.cos(th), 0.6 * np.sin(th), np.cos(th), np.sin(th)
    t = np.full(th.shape, 0.37)
    cf = ExactExpansion(sol)
    for c in condition_set(regime):
        jump = c.expr(cf, PLUS, x, y, nx, ny, t, sol) - c.expr(cf, MINUS, x, y, nx, ny, t, sol)
        assert np.max(np.abs(jump)) < 1e-4, c.name


def test_condition_sets():
    assert len(NON_MAGNETIC) == 12 and len(MAGNETIC) == 7
    assert [sum(c.order == q for c in NON_MAGNETIC) for q in range(4)] == [3, 3, 3, 3]
    assert [sum(c.order == q for c in MAGNETIC) for q in range(2)] == [3, 4]
    assert condition_set("magnetic") is MAGNETIC
    with pytest.raises(ValueError):
        condition_set("other")
    assert regime_of(SCATTERING["magnetic"]) == "magnetic"
    assert regime_of(SCATTERING["non-magnetic"]) == "non-magnetic"


def _identical_sides(rng, regime):
    _, pf = random_circle_patch(rng, SCATTERING[regime], k=3)
    half = rng.standard_normal(pf.n // 2)
    return CorrectionFunction(pf, np.concatenate([half, half]), t_ref=0.5)


@pytest.mark.parametrize("regime", ["non-magnetic", "magnetic"])
def test_identical_sides_give_zero(regime, rng):
    cf = _identical_sides(rng, regime)
    ez = next(c for c in condition_set(regime) if c.name == "[[Ez]]")
    assert jump_error(cf, ez, 0.5) <= 1e-14
    if regime == "non-magnetic":
        # conditions free of the (jumping) coefficients vanish too
        for c in NON_MAGNETIC:
            if "eps" not in c.name:
                assert jump_error(cf, c, 0.5) <= 1e-12


def test_single_patch_table_and_window(rng):
    _, pf = random_circle_patch(rng, SCATTERING["magnetic"])
    cf = CorrectionFunction(pf, rng.standard_normal(pf.n), t_ref=0.5)
    t = 0.5 - 0.01
    assert max_over_patches([cf], MAGNETIC, t) == order_errors(cf, MAGNETIC, t)
    with pytest.raises(OutOfPatchError):
        jump_error(cf, MAGNETIC[0], 0.6)


def test_max_over_patches_takes_maximum(rng):
    _, pf = random_circle_patch(rng, SCATTERING["magnetic"])
    a = CorrectionFunction(pf, rng.standard_normal(pf.n), t_ref=0.5)
    b = CorrectionFunction(pf, 3.0 * a.coeffs, t_ref=0.5)
    table = max_over_patches([a, b], MAGNETIC, 0.5)
    tb = order_errors(b, MAGNETIC, 0.5)
    for q in table:
        assert table[q] == pytest.approx(tb[q])


def _flip(monkeypatch, normal_too):
    frame, dtau, dn = jumpcheck._frame, jumpcheck._dtau, jumpcheck._dn

    def flipped_frame(*args, **kw):
        hn, ht = frame(*args, **kw)
        return (-hn if normal_too else hn), -ht

    monkeypatch.setattr(jumpcheck, "_frame", flipped_frame)
    monkeypatch.setattr(jumpcheck, "_dtau", lambda nx, ny, dx, dy: -dtau(nx, ny, dx, dy))
    if normal_too:
        monkeypatch.setattr(jumpcheck, "_dn", lambda nx, ny, dx, dy: -dn(nx, ny, dx, dy))


def test_magnetic_frame_invariance(rng, monkeypatch):
    """tau -> -tau leaves six conditions unchanged; the Ampere condition, whose
    curl part changes sign while mu eps d_t Ez does not, is invariant only under
    proper rotations of the frame (n, tau) -> (-n, -tau).  See the ledger."""
    _, pf = random_circle_patch(rng, SCATTERING["magnetic"])
    cf = CorrectionFunction(pf, rng.standard_normal(pf.n), t_ref=0.5)
    before = np.array([jump_error(cf, c, 0.5) for c in MAGNETIC])
    with monkeypatch.context() as m:
        _flip(m, normal_too=False)
        after = np.array([jump_error(cf, c, 0.5) for c in MAGNETIC])
    np.testing.assert_allclose(after[:6], before[:6], rtol=1e-13, atol=1e-13)
    assert "d_t" in MAGNETIC[6].name and not np.isclose(after[6], before[6])
    with monkeypatch.context() as m:
        _flip(m, normal_too=True)
        rotated = np.array([jump_error(cf, c, 0.5) for c in MAGNETIC])
    np.testing.assert_allclose(rotated, before, rtol=1e-13, atol=1e-13)


def test_zero_contrast_smooth_solution():
    prob = StaticPolynomial()
    grid = StaggeredGrid2D.square(-1.0, 1.0, 40)
    i = int(round(1.6 / grid.dx))
    patch = build_patch(CIRCLE, grid, (i, 20), 7.0, (-2 * grid.dt, 0.0))
    pf = PatchFunctional(patch, CfmConfig(k=2, c_p=1.0, c_f=grid.dt), prob)
    samples, times = exact_samples(pf, grid, prob, 0.5)
    cf = solve_patch(pf, 0.5, samples, times)
    table = max_over_patches([cf], NON_MAGNETIC, 0.5 - grid.dt)
    assert set(table) == {0, 1, 2, 3}
    # regularization-level residue, amplified by 1/L per derivative order
    L = patch.half_width
    for q, e in table.items():
        assert e < 1e-7 * L ** -q


def test_jump_csv(tmp_path):
    path = write_jump_csv([0.05, 0.025], [{0: 1e-3, 1: 2e-2}, None], tmp_path / "j.csv", header="# config: {}")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config: {}"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["h", "order", "E"] and len(rows) == 3
    assert float(rows[2][2]) == 2e-2
