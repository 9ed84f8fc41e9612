"""Regular quadrilateral grid, DOF numbering, supports and loads.

Node numbering is column-major from the bottom-left corner: node (i, j)
with i along x and j along y gets index i*(nely+1) + j, and carries DOFs
(2*node, 2*node+1) = (ux, uy).  Elements are numbered the same way,
e = i*nely + j.  Tests that compare eigenvector orderings rely on this
convention, so it is fixed.
"""

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised for inconsistent mesh / boundary definitions."""


@dataclass(frozen=True)
class GridMesh:
    """Regular nelx-by-nely grid of rectangular elements.

    lx, ly are the *element* edge lengths; t is the out-of-plane thickness.
    """

    nelx: int
    nely: int
    lx: float
    ly: float
    t: float

    @property
    def n_elems(self):
        return self.nelx * self.nely

    @property
    def n_nodes(self):
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def n_dofs(self):
        return 2 * self.n_nodes

    def node_id(self, i, j):
        """Global node index of grid node (i, j)."""
        return i * (self.nely + 1) + j

    def element_index(self, i, j):
        return i * self.nely + j

    def element_grid_coords(self, e):
        """(i, j) grid coordinates of element e."""
        return divmod(e, self.nely)

    def element_centers(self):
        """(m, 2) element-center coordinates in physical units."""
        i, j = np.divmod(np.arange(self.n_elems), self.nely)
        return np.column_stack(((i + 0.5) * self.lx, (j + 0.5) * self.ly))

    def edof_map(self):
        """(m, 8) element-to-DOF map, nodes counter-clockwise from the
        lower-left corner, (ux, uy) per node."""
        i, j = np.divmod(np.arange(self.n_elems), self.nely)
        n1 = i * (self.nely + 1) + j
        n2 = (i + 1) * (self.nely + 1) + j
        n3 = (i + 1) * (self.nely + 1) + (j + 1)
        n4 = i * (self.nely + 1) + (j + 1)
        nodes = np.column_stack((n1, n2, n3, n4))
        edof = np.empty((self.n_elems, 8), dtype=np.int64)
        edof[:, 0::2] = 2 * nodes
        edof[:, 1::2] = 2 * nodes + 1
        return edof


@dataclass
class BoundarySpec:
    """Supports, nodal loads and passive element sets for one problem."""

    fixed_dofs: np.ndarray
    loads: list  # list of (dof, value) pairs
    passive_solid: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    passive_void: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.fixed_dofs = np.unique(np.asarray(self.fixed_dofs, dtype=np.int64))
        self.passive_solid = np.unique(np.asarray(self.passive_solid, dtype=np.int64))
        self.passive_void = np.unique(np.asarray(self.passive_void, dtype=np.int64))
        loaded = {d for d, v in self.loads if v != 0.0}
        clash = loaded.intersection(self.fixed_dofs.tolist())
        if clash:
            raise ConfigurationError(f"loaded DOFs are prescribed: {sorted(clash)}")
        if np.intersect1d(self.passive_solid, self.passive_void).size:
            raise ConfigurationError("passive solid and void element sets overlap")

    def load_vector(self, n_dofs):
        f = np.zeros(n_dofs)
        for dof, val in self.loads:
            f[dof] += val
        return f

    def free_dofs(self, n_dofs):
        mask = np.ones(n_dofs, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)


def build_grid(nelx, nely, lx, ly, t):
    """Build a GridMesh, validating dimensions."""
    if nelx < 1 or nely < 1:
        raise ConfigurationError(f"element counts must be >= 1, got {nelx}x{nely}")
    if lx <= 0 or ly <= 0 or t <= 0:
        raise ConfigurationError(f"element dimensions must be positive, got {(lx, ly, t)}")
    return GridMesh(int(nelx), int(nely), float(lx), float(ly), float(t))


def element_dofs(mesh, e):
    """8 global DOF indices of element e (counter-clockwise node order)."""
    if not 0 <= e < mesh.n_elems:
        raise IndexError(f"element index {e} out of range [0, {mesh.n_elems})")
    return mesh.edof_map()[e]


def _edge_lumped_weights(n_nodes):
    """Consistent lumping of a uniform traction on a bilinear element edge:
    interior nodes weight 1, edge-end nodes weight 1/2."""
    w = np.ones(n_nodes)
    w[0] = w[-1] = 0.5
    return w / w.sum()


COLUMN_LENGTH = 10.0
COLUMN_HEIGHT = 1.0
COLUMN_THICKNESS = 0.005
COLUMN_E = 2.0e11
COLUMN_NU = 0.0
COLUMN_LOAD = 2.5e5


def column_benchmark_spec(nelx, nely):
    """Cantilever column under uniform tip compression.

    The domain is 10 x 1 with thickness 0.005; the left edge is clamped and
    a total axial load of 2.5e5 is lumped consistently over the tip-edge
    nodes.  Material constants for this benchmark are E = 2e11, nu = 0.
    """
    mesh = build_grid(nelx, nely, COLUMN_LENGTH / nelx, COLUMN_HEIGHT / nely, COLUMN_THICKNESS)
    fixed = []
    for j in range(nely + 1):
        node = mesh.node_id(0, j)
        fixed += [2 * node, 2 * node + 1]
    w = _edge_lumped_weights(nely + 1)
    loads = []
    for j in range(nely + 1):
        node = mesh.node_id(nelx, j)
        loads.append((2 * node, -COLUMN_LOAD * w[j]))
    return mesh, BoundarySpec(np.array(fixed), loads)
