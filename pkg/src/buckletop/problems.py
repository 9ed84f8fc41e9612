"""Benchmark problem generators.

The main example is a rectangular domain, nelx wide and nely tall, loaded
downward over the right edge of a solid patch centered on the right side
at mid-height (point c).  Two pinned supports sit on the left
edge where the 45-degree lines from c meet it, each at the center of its
own solid patch; the optimized structures are the classic two-bar bracket
with an upper tension bar and a lower slender compression bar whose
buckling drives the whole study.  Pin placement and the element size are
configuration parameters; the default element size 0.018 is calibrated so
the uniform-density reference analysis reproduces this benchmark's
reference fundamental load factor (0.662).
"""

import numpy as np

from .mesh import BoundarySpec, build_grid, column_benchmark_spec

__all__ = ["column_benchmark_spec", "compressed_beam_spec", "compressed_patch_spec",
           "build_problem"]

BEAM_ELEMENT_SIZE = 0.018


def _patch_elements(mesh, x0, y0, nx, ny):
    """Element indices of the block [x0, x0+nx) x [y0, y0+ny)."""
    i = np.arange(x0, x0 + nx)
    j = np.arange(y0, y0 + ny)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    return (ii * mesh.nely + jj).ravel()


def default_pins(nelx, nely, pin_x=None):
    """Pin nodes on the 45-degree lines from the right-edge midpoint.

    By default the pins sit on the left edge (pin_x = 0), so the rows are
    nely/2 -+ nelx; fractional rows (odd nely) are rounded symmetrically.
    """
    if pin_x is None:
        pin_x = 0
    if not 0 <= pin_x < nelx:
        raise ValueError(f"pin column {pin_x} outside the grid")
    dy = nelx - pin_x
    mid = nely / 2.0
    lo = int(round(mid - dy))
    hi = nely - lo
    if lo < 0 or hi > nely:
        raise ValueError(f"45-degree pins fall outside the domain for {nelx}x{nely}")
    return pin_x, lo, hi


def compressed_beam_spec(nelx, nely, lx=BEAM_ELEMENT_SIZE, ly=BEAM_ELEMENT_SIZE,
                         t=1.0, F=0.02, patch=9, pin_x=None, pin_rows=None,
                         load_width=None, pin_nodes=3):
    """Mesh + boundary spec of the main buckling-constrained example.

    Each pin fixes a short vertical run of pin_nodes nodes centered on the
    45-degree intersection; a literal one-node pin is a singular point
    support whose local compliance never converges under refinement.
    """
    mesh = build_grid(nelx, nely, lx, ly, t)
    if load_width is None:
        load_width = patch
    if pin_rows is None:
        pin_x, ya, yb = default_pins(nelx, nely, pin_x)
    else:
        pin_x = 0 if pin_x is None else pin_x
        ya, yb = pin_rows

    load_y0 = (nely - load_width) // 2

    def clamp(v, n):
        return min(max(v, 0), n - patch)

    passive = [
        _patch_elements(mesh, nelx - patch, clamp((nely - patch) // 2, nely), patch, patch),
        _patch_elements(mesh, clamp(pin_x - patch // 2, nelx), clamp(ya - patch // 2, nely), patch, patch),
        _patch_elements(mesh, clamp(pin_x - patch // 2, nelx), clamp(yb - patch // 2, nely), patch, patch),
    ]

    fixed = []
    half = pin_nodes // 2
    for y in (ya, yb):
        for dy in range(-half, pin_nodes - half):
            node = mesh.node_id(pin_x, min(max(y + dy, 0), nely))
            fixed += [2 * node, 2 * node + 1]

    w = np.ones(load_width + 1)
    w[0] = w[-1] = 0.5
    w /= w.sum()
    loads = []
    for k in range(load_width + 1):
        node = mesh.node_id(nelx, load_y0 + k)
        loads.append((2 * node + 1, -F * w[k]))

    bc = BoundarySpec(np.array(fixed), loads, passive_solid=np.concatenate(passive))
    return mesh, bc


def compressed_patch_spec(nelx, nely, lx=1.0, ly=1.0, t=1.0, F=1.0):
    """Square-ish patch clamped at the bottom, compressed from the top.

    Sensitivity-verification fixture: the whole domain carries compressive
    stress and design changes near both the load and the support matter.
    """
    mesh = build_grid(nelx, nely, lx, ly, t)
    fixed = []
    for i in range(nelx + 1):
        node = mesh.node_id(i, 0)
        fixed += [2 * node, 2 * node + 1]
    w = np.ones(nelx + 1)
    w[0] = w[-1] = 0.5
    w /= w.sum()
    loads = []
    for i in range(nelx + 1):
        node = mesh.node_id(i, nely)
        loads.append((2 * node + 1, -F * w[i]))
    return mesh, BoundarySpec(np.array(fixed), loads)


def fixture_density(mesh, lo=0.3, hi=0.9, seed=7):
    """Deterministic pseudo-random density field for verification fixtures."""
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random(mesh.n_elems)


def build_problem(cfg):
    """(mesh, bc) from a RunConfig's mesh + problem sections."""
    mc, pc = cfg.mesh, cfg.problem
    if pc.kind == "column":
        return column_benchmark_spec(mc.nelx, mc.nely)
    if pc.kind == "compressed_patch":
        return compressed_patch_spec(mc.nelx, mc.nely, mc.lx, mc.ly, mc.t, F=pc.F)
    pin_rows = tuple(pc.pin_rows) if pc.pin_rows is not None else None
    return compressed_beam_spec(mc.nelx, mc.nely, mc.lx, mc.ly, mc.t,
                                F=pc.F, patch=pc.patch, pin_x=pc.pin_x,
                                pin_rows=pin_rows, load_width=pc.load_width,
                                pin_nodes=pc.pin_nodes)
