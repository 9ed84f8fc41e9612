"""Design gradients of compliance and of the buckling eigenvalues.

With modes normalized to phi^T Ksigma phi = -1, the consistent load-factor
gradient is

    dlam_i/dxe = phi^T (dK/dxe + lam_i dKsigma/dxe) phi - lam_i v^T dK/dxe u0

with the adjoint v solving K v = grad_u(phi^T Ksigma phi).  The matching
mu-gradient is dmu_i/dxe = mu_i^2 dlam_i/dxe; the frequency-like-only
variant drops the adjoint term (inconsistent, kept for comparison studies).
"""

from dataclasses import dataclass

import numpy as np

from .analysis import element_displacements, gauss_stresses
from .field import dh1, dh2, h2


def element_quadratic_k0(mesh, template, a, b=None):
    """Per-element a_e^T k0 b_e for global vectors a, b."""
    ae = element_displacements(mesh, a)
    be = ae if b is None else element_displacements(mesh, b)
    return np.einsum("ei,ij,ej->e", ae, template.k0, be)


def _mode_gradient_quadratics(mesh, template, mode):
    """Gauss-point quadratic forms of one mode against the stress components.

    Returns q of shape (m, 4, 3) such that phi_e^T g0(sigma) phi_e =
    sum_gp q[:, gp, :] . sigma[:, gp, :] for any stress state.
    """
    pe = element_displacements(mesh, mode)
    q = np.einsum("ei,gcij,ej->egc", pe, template.g_basis, pe)
    return q


def element_geometric_energy(mesh, template, mode, u0):
    """Per-element phi_e^T g0(u0_e) phi_e (unit interpolation)."""
    sigma = gauss_stresses(mesh, template, u0)
    q = _mode_gradient_quadratics(mesh, template, mode)
    return np.einsum("egc,egc->e", q, sigma)


def compliance_sens(mesh, template, xbar, u0, interp):
    """dJ/dxbar_e = -dh1(xbar_e) u0_e^T k0 u0_e (self-adjoint; <= 0)."""
    return -dh1(np.asarray(xbar, dtype=float), interp) * element_quadratic_k0(mesh, template, u0)


def adjoint_rhs(mesh, template, xbar, mode, interp):
    """Assemble grad_u (phi^T Ksigma(u) phi); independent of u0 by linearity."""
    q = _mode_gradient_quadratics(mesh, template, mode)
    r_e = np.einsum("egc,gcj->ej", q, template.stress_op)
    r_e *= h2(np.asarray(xbar, dtype=float), interp)[:, None]
    rhs = np.zeros(mesh.n_dofs)
    np.add.at(rhs, mesh.edof_map().ravel(), r_e.ravel())
    return rhs


def solve_adjoint(lu, free, rhs, n_dofs, K=None):
    """Solve K v = rhs on the free DOFs, reusing the equilibrium factorization.

    Passing K enables iterative refinement to the 1e-10 residual contract.
    """
    from .analysis import refined_solve
    v = np.zeros(n_dofs)
    if K is None:
        v[free] = lu.solve(rhs[free])
    else:
        v[free] = refined_solve(lu, K[np.ix_(free, free)].tocsc(), rhs[free])
    return v


@dataclass
class EigSensitivity:
    """Gradient of one eigenpair with respect to physical densities."""

    dlam_dxbar: np.ndarray
    dmu_dxbar: np.ndarray
    adjoint: np.ndarray
    consistent: bool


def lambda_sens(mesh, template, xbar, u0, mode, lam, v, interp, consistent=True):
    """Gradient of lambda_i on physical densities; adjoint term optional."""
    xbar = np.asarray(xbar, dtype=float)
    freq = dh1(xbar, interp) * element_quadratic_k0(mesh, template, mode) \
        + lam * dh2(xbar, interp) * element_geometric_energy(mesh, template, mode, u0)
    if not consistent:
        return freq
    adj = lam * dh1(xbar, interp) * element_quadratic_k0(mesh, template, v, u0)
    return freq - adj


def mu_sens(mesh, template, xbar, u0, mode, mu, v, interp, consistent=True):
    """Gradient of mu_i = -1/lambda_i; equals mu^2 * lambda_sens."""
    lam = -1.0 / mu
    return mu**2 * lambda_sens(mesh, template, xbar, u0, mode, lam, v, interp,
                               consistent=consistent)


def eig_sensitivity(mesh, template, xbar, u0, mode, mu, lu, free, interp,
                    consistent=True, K=None):
    """Full gradient bundle for one eigenpair (adjoint solve included)."""
    rhs = adjoint_rhs(mesh, template, xbar, mode, interp)
    v = solve_adjoint(lu, free, rhs, mesh.n_dofs, K=K)
    lam = -1.0 / mu
    dlam = lambda_sens(mesh, template, xbar, u0, mode, lam, v, interp, consistent)
    return EigSensitivity(dlam, mu**2 * dlam, v, consistent)
