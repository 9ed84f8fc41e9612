"""Plane-stress Q4 and incompatible-modes Q6 rectangles.

Both elements are integrated with 2x2 Gauss quadrature (exact for the
bilinear stiffness).  The Q6 element enriches the bilinear displacement
field with two internal bubble modes per direction, statically condensed
out; its stresses are recovered *including* the bubble contribution while
the geometric operator G keeps the compatible shape functions only, so the
stress stiffness stays an 8x8 on the nodal DOFs.
"""

from dataclasses import dataclass

import numpy as np

GAUSS_PTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _elastic_matrix(E, nu):
    return E / (1.0 - nu**2) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])


def _shape_derivs(xi, eta, lx, ly):
    """Cartesian derivatives of the four bilinear shape functions."""
    dN_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    dN_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    return dN_dxi * 2.0 / lx, dN_deta * 2.0 / ly


def _b_compat(xi, eta, lx, ly):
    """3x8 strain-displacement matrix of the bilinear field."""
    dN_dx, dN_dy = _shape_derivs(xi, eta, lx, ly)
    B = np.zeros((3, 8))
    B[0, 0::2] = dN_dx
    B[1, 1::2] = dN_dy
    B[2, 0::2] = dN_dy
    B[2, 1::2] = dN_dx
    return B


def _b_incompatible(xi, eta, lx, ly):
    """3x4 strain matrix of the bubble modes (1-xi^2), (1-eta^2) in u, v.

    Amplitude ordering: [u*(1-xi^2), u*(1-eta^2), v*(1-xi^2), v*(1-eta^2)].
    """
    dxi = -2.0 * xi * 2.0 / lx
    deta = -2.0 * eta * 2.0 / ly
    Ba = np.zeros((3, 4))
    Ba[0, 0] = dxi
    Ba[1, 3] = deta
    Ba[2, 1] = deta
    Ba[2, 2] = dxi
    return Ba


def _g_matrix(xi, eta, lx, ly):
    """4x8 displacement-gradient matrix: [u,x; u,y; v,x; v,y]."""
    dN_dx, dN_dy = _shape_derivs(xi, eta, lx, ly)
    G = np.zeros((4, 8))
    G[0, 0::2] = dN_dx
    G[1, 0::2] = dN_dy
    G[2, 1::2] = dN_dx
    G[3, 1::2] = dN_dy
    return G


@dataclass(frozen=True)
class ElementStressState:
    """Plane-stress components (sx, sy, txy) at the 2x2 Gauss points, (4, 3)."""

    sigma: np.ndarray


@dataclass(frozen=True)
class ElementTemplate:
    """Precomputed element operators shared by every element of a grid.

    k0            8x8 solid stiffness
    recovery      4x8 bubble-amplitude recovery (Q6) or None (Q4)
    stress_op     (4, 3, 8) Gauss-point stress operators sigma = S u_e
    g_basis       (4, 3, 8, 8) weighted matrices such that
                  g0 = sum_gp sum_c sigma[gp, c] * g_basis[gp, c]
    """

    kind: str
    E: float
    nu: float
    t: float
    lx: float
    ly: float
    k0: np.ndarray
    recovery: np.ndarray | None
    stress_op: np.ndarray
    g_basis: np.ndarray

    def element_volume(self):
        return self.lx * self.ly * self.t


def _gauss_loop(lx, ly):
    for xi in GAUSS_PTS:
        for eta in GAUSS_PTS:
            yield xi, eta, lx * ly / 4.0  # unit Gauss weights, det J = lx*ly/4


def q4_stiffness(E, nu, t, lx, ly):
    """8x8 plane-stress stiffness of the bilinear rectangle."""
    _check_material(E, nu, lx, ly, t)
    D = _elastic_matrix(E, nu)
    k = np.zeros((8, 8))
    for xi, eta, dv in _gauss_loop(lx, ly):
        B = _b_compat(xi, eta, lx, ly)
        k += B.T @ D @ B * dv * t
    return 0.5 * (k + k.T)


def q6_stiffness(E, nu, t, lx, ly):
    """Condensed 8x8 Q6 stiffness and the 4x8 bubble recovery operator."""
    _check_material(E, nu, lx, ly, t)
    D = _elastic_matrix(E, nu)
    kuu = np.zeros((8, 8))
    kua = np.zeros((8, 4))
    kaa = np.zeros((4, 4))
    for xi, eta, dv in _gauss_loop(lx, ly):
        B = _b_compat(xi, eta, lx, ly)
        Ba = _b_incompatible(xi, eta, lx, ly)
        kuu += B.T @ D @ B * dv * t
        kua += B.T @ D @ Ba * dv * t
        kaa += Ba.T @ D @ Ba * dv * t
    if np.linalg.cond(kaa) > 1e12:
        raise np.linalg.LinAlgError("singular incompatible-mode block")
    recovery = -np.linalg.solve(kaa, kua.T)
    k = kuu + kua @ recovery
    return 0.5 * (k + k.T), recovery


def _check_material(E, nu, lx, ly, t):
    if E <= 0:
        raise ValueError(f"Young modulus must be positive, got {E}")
    if not 0.0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    if lx <= 0 or ly <= 0 or t <= 0:
        raise ValueError(f"degenerate element geometry {(lx, ly, t)}")


def make_template(kind, E, nu, t, lx, ly):
    """Build the ElementTemplate for 'q4' or 'q6'."""
    kind = kind.lower()
    if kind == "q4":
        k0 = q4_stiffness(E, nu, t, lx, ly)
        recovery = None
    elif kind == "q6":
        k0, recovery = q6_stiffness(E, nu, t, lx, ly)
    else:
        raise ValueError(f"unknown element kind {kind!r}")

    D = _elastic_matrix(E, nu)
    stress_op = np.zeros((4, 3, 8))
    g_basis = np.zeros((4, 3, 8, 8))
    for gp, (xi, eta, dv) in enumerate(_gauss_loop(lx, ly)):
        B = _b_compat(xi, eta, lx, ly)
        if recovery is not None:
            B = B + _b_incompatible(xi, eta, lx, ly) @ recovery
        stress_op[gp] = D @ B
        G = _g_matrix(xi, eta, lx, ly)
        w = dv * t
        g_basis[gp, 0] = w * (np.outer(G[0], G[0]) + np.outer(G[2], G[2]))
        g_basis[gp, 1] = w * (np.outer(G[1], G[1]) + np.outer(G[3], G[3]))
        g_basis[gp, 2] = w * (np.outer(G[0], G[1]) + np.outer(G[1], G[0])
                              + np.outer(G[2], G[3]) + np.outer(G[3], G[2]))
    return ElementTemplate(kind, E, nu, t, lx, ly, k0, recovery, stress_op, g_basis)


def element_stress(template, ue):
    """Gauss-point stresses for element displacements ue (length 8)."""
    ue = np.asarray(ue, dtype=float)
    if ue.shape != (8,):
        raise ValueError(f"expected 8 element displacements, got shape {ue.shape}")
    return ElementStressState(template.stress_op @ ue)


def stress_stiffness(template, stress_state):
    """8x8 geometric (initial-stress) stiffness for the given stress state."""
    sigma = stress_state.sigma
    g0 = np.einsum("gc,gcij->ij", sigma, template.g_basis)
    return 0.5 * (g0 + g0.T)
