import numpy as np
import pytest

from cfmfdtd.geometry import (MINUS, PLUS, Circle, DegenerateGradientError, HalfPlane,
                              NoInterfaceInPatchError, Square, Star, build_patch, classify, normal,
                              sample_interface)
from cfmfdtd.grid import StaggeredGrid2D

CIRCLE = Circle((0.0, 0.0), 0.6)
STAR5 = Star((0.5, 0.5), 0.25, 0.05, 5)


def test_classify_examples():
    assert classify(CIRCLE, (0.0, 0.0)) == MINUS
    assert classify(CIRCLE, (1.0, 1.0)) == PLUS
    assert classify(STAR5, (0.5, 0.5)) == MINUS
    # phi == 0 counts as MINUS
    assert classify(CIRCLE, (0.6, 0.0)) == MINUS


def test_circle_normals():
    np.testing.assert_allclose(normal(CIRCLE, (0.6, 0.0)), [1.0, 0.0])
    np.testing.assert_allclose(normal(CIRCLE, (0.0, -0.6)), [0.0, -1.0], atol=1e-15)
    with pytest.raises(ValueError):
        normal(CIRCLE, (0.3, 0.0))
    with pytest.raises(DegenerateGradientError):
        CIRCLE.normal(0.0, 0.0)


@pytest.mark.parametrize("lobes", [3, 5])
def test_star_gradient_matches_finite_differences(lobes):
    # [DERIVED] central differences of phi at the lobe tip and elsewhere
    star = Star((0.5, 0.5), 0.25, 0.05, lobes)
    for th in (0.0, 0.37, 2.1):
        x, y = star.point(th)
        h = 1e-6
        fx = (star.phi(x + h, y) - star.phi(x - h, y)) / (2 * h)
        fy = (star.phi(x, y + h) - star.phi(x, y - h)) / (2 * h)
        gx, gy = star.grad_phi(x, y)
        assert abs(fx - gx) < 1e-8 and abs(fy - gy) < 1e-8
        assert abs(star.phi(x, y)) < 1e-14


def test_sample_normals_are_outward_unit():
    smp = sample_interface(STAR5, (0.5, 0.5), 0.4, 0.01)
    gx, gy = STAR5.grad_phi(smp.x, smp.y)
    g = np.hypot(gx, gy)
    np.testing.assert_allclose(smp.nx, gx / g, atol=1e-12)
    np.testing.assert_allclose(smp.ny, gy / g, atol=1e-12)


def test_full_circle_length():
    smp = sample_interface(CIRCLE, (0.0, 0.0), 1.0, 0.05)
    assert abs(smp.length - 2 * np.pi * 0.6) < 1e-10


def test_diagonal_line_arc_length():
    # [DERIVED] a 45 degree line through the box centre has length sqrt(2) L
    L = 0.35
    line = HalfPlane(origin=(0.1, 0.2), direction=(1.0, -1.0))
    smp = sample_interface(line, (0.1, 0.2), L / 2, 0.02)
    assert abs(smp.length - np.sqrt(2) * L) < 1e-10


def test_square_perimeter_and_corners():
    sq = Square((0.0, 0.0), 0.9)
    smp = sample_interface(sq, (0.0, 0.0), 1.5, 0.05)
    assert abs(smp.length - 8 * 0.9) < 1e-10
    np.testing.assert_allclose(np.hypot(smp.nx, smp.ny), 1.0)
    # every normal is axis aligned
    assert np.all(np.isclose(np.abs(smp.nx) + np.abs(smp.ny), 1.0))


def test_patch_near_circle():
    grid = StaggeredGrid2D.square(-1.0, 1.0, 40)
    i = int(round((0.6 + 1.0) / grid.dx))
    patch = build_patch(CIRCLE, grid, (i, 20), 7.0, (-0.05, 0.0))
    assert abs(patch.side_length - 0.35) < 1e-14
    assert patch.samples.size > 0
    assert np.all(np.abs(CIRCLE.phi(patch.samples.x, patch.samples.y)) < 1e-12)
    assert np.all(patch.contains(patch.samples.x, patch.samples.y))
    for side in (PLUS, MINUS):
        fields = {s.field for s in patch.segments if s.side == side}
        assert fields == {"Hx", "Hy", "Ez"}
    for s in patch.segments:
        X = s.coords[:, 0]
        Y = s.coords[:, 1]
        assert np.all(CIRCLE.classify(X, Y) == s.side)


def test_patch_without_interface():
    grid = StaggeredGrid2D.square(-1.0, 1.0, 40)
    with pytest.raises(NoInterfaceInPatchError):
        build_patch(CIRCLE, grid, (20, 20), 7.0, (-0.05, 0.0))
