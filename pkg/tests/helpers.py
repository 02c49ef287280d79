"""Shared builders for patch-level tests."""

import numpy as np

from cfmfdtd.analytic import ScatteringSolution
from cfmfdtd.cfm.functional import CfmConfig, PatchFunctional
from cfmfdtd.cfm.operator import level_times
from cfmfdtd.geometry import Circle, build_patch
from cfmfdtd.grid import StaggeredGrid2D

CIRCLE = Circle((0.0, 0.0), 0.6)


def near_interface_node(grid, interface, rng):
    """A random E_z node within one cell of the interface."""
    X, Y = grid.coords("Ez")
    d = interface.distance(X, Y)
    cand = np.argwhere(d < grid.dx)
    return tuple(int(v) for v in cand[rng.integers(len(cand))])


def random_circle_patch(rng, problem, n=None, k=2):
    n = n or int(rng.choice([30, 40, 56]))
    grid = StaggeredGrid2D.square(-1.0, 1.0, n)
    node = near_interface_node(grid, CIRCLE, rng)
    patch = build_patch(CIRCLE, grid, node, 7.0, (-2 * grid.dt, 0.0))
    cfg = CfmConfig(k=k, c_p=1.0, c_f=grid.dt, beta=7.0)
    return grid, PatchFunctional(patch, cfg, problem)


def exact_samples(pf, grid, problem, t_ref, levels=3, event="H", fields_fn=None):
    """FD sample vector in the layout of ``fictitious_map`` from exact data."""
    times = level_times(event, grid.dt, levels)
    _, cols = pf.fictitious_map(times)
    comp = {"Hx": 0, "Hy": 1, "Ez": 2}
    fields_fn = fields_fn or problem.fields
    out = np.empty(len(cols))
    for q, (f, lag, node) in enumerate(cols):
        i, j = np.unravel_index(node, grid.shape(f))
        x, y = grid.position(f, i, j)
        side = int(np.sign(CIRCLE.phi(x, y))) or -1
        out[q] = fields_fn(side, x, y, t_ref + times[f][lag])[comp[f]]
    return out, times


SCATTERING = {"non-magnetic": ScatteringSolution(), "magnetic": ScatteringSolution(mu_minus=2.0)}
