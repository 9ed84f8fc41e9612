"""Global assembly, equilibrium solve and the buckling eigenproblem.

The buckling problem is posed as Ksigma*phi = mu*K*phi with mu < 0 on the
compression side and lambda = -1/mu.  Modes are normalized to
phi^T Ksigma phi = -1.  Small systems use a dense generalized solve; large
ones use ARPACK in regular generalized mode, reusing the sparse
factorization of K from the equilibrium solve as the M-inverse operator.
A fixed start vector keeps runs bitwise reproducible.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from .elements import stress_stiffness
from .field import h1, h2

DENSE_EIG_CUTOFF = 1500


class AnalysisError(RuntimeError):
    """Raised when a factorization or eigen solve fails."""


def assemble_stiffness(mesh, template, xbar, interp):
    """Sparse symmetric stiffness K = sum_e h1(xbar_e) * k0 scattered."""
    edof = mesh.edof_map()
    scale = h1(np.asarray(xbar, dtype=float), interp)
    vals = scale[:, None, None] * template.k0[None, :, :]
    iK = np.repeat(edof, 8, axis=1).ravel()
    jK = np.tile(edof, (1, 8)).ravel()
    K = sp.coo_matrix((vals.ravel(), (iK, jK)), shape=(mesh.n_dofs, mesh.n_dofs))
    return K.tocsc()


def element_displacements(mesh, u):
    """(m, 8) gather of a global vector to element level."""
    return u[mesh.edof_map()]


def gauss_stresses(mesh, template, u0):
    """(m, 4, 3) unit-interpolation Gauss-point stresses of all elements."""
    ue = element_displacements(mesh, u0)
    return np.einsum("gcj,ej->egc", template.stress_op, ue)


def assemble_stress_stiffness(mesh, template, xbar, u0, interp):
    """Sparse geometric stiffness Ksigma = sum_e h2(xbar_e) * g0(u0_e)."""
    edof = mesh.edof_map()
    sigma = gauss_stresses(mesh, template, u0)
    g_all = np.einsum("egc,gcij->eij", sigma, template.g_basis)
    g_all *= h2(np.asarray(xbar, dtype=float), interp)[:, None, None]
    iK = np.repeat(edof, 8, axis=1).ravel()
    jK = np.tile(edof, (1, 8)).ravel()
    Ks = sp.coo_matrix((g_all.ravel(), (iK, jK)), shape=(mesh.n_dofs, mesh.n_dofs))
    return Ks.tocsc()


def factorize(K, free):
    """Factorize K on the free DOFs (symmetric-mode LU, Cholesky-like pivots)."""
    Kff = K[np.ix_(free, free)].tocsc()
    try:
        lu = spla.splu(Kff, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise AnalysisError(f"stiffness factorization failed: {exc}") from exc
    diag = lu.U.diagonal()
    if np.any(diag <= 0):
        bad = free[lu.perm_c[int(np.argmin(diag))]]
        raise AnalysisError(
            f"stiffness not positive definite (pivot at DOF {bad}); "
            "the design is likely structurally disconnected")
    return lu


def refined_solve(lu, A, b, tol=1e-10, floor_guard=1e-6, max_refine=4):
    """Solve A x = b via the factorization with iterative refinement.

    Refines to the 1e-10 relative-residual contract when double precision
    allows it.  For extreme stiffness contrasts the attainable residual is
    floored at eps*||A||*||x||/||b||; once refinement stalls at that floor
    the solve is accepted, while residuals above floor_guard still raise
    (they indicate an actually failed solve, e.g. a disconnected design).
    """
    x = lu.solve(b)
    ref = np.linalg.norm(b)
    if ref == 0.0:
        return x
    prev = np.inf
    for _ in range(max_refine):
        r = b - A @ x
        rel = np.linalg.norm(r) / ref
        if rel <= tol or rel >= 0.5 * prev:
            break
        prev = rel
        x = x + lu.solve(r)
    rel = np.linalg.norm(b - A @ x) / ref
    if rel > tol:
        floor = np.finfo(float).eps * spla.norm(A) * np.linalg.norm(x) / ref
        if rel > max(floor_guard, 100.0 * floor):
            raise AnalysisError(f"linear solve stalled at residual {rel:.2e}")
    return x


def solve_equilibrium(K, f0, fixed_dofs):
    """Solve K u0 = f0 with the fixed DOFs eliminated by reduction."""
    n = K.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed_dofs] = False
    free = np.flatnonzero(mask)
    lu = factorize(K, free)
    u0 = np.zeros(n)
    u0[free] = refined_solve(lu, K[np.ix_(free, free)].tocsc(), f0[free])
    return u0, lu, free


def compliance(u0, f0):
    """J = u0^T f0."""
    return float(u0 @ f0)


@dataclass
class BucklingSpectrum:
    """Eigenpairs of the buckling problem, most negative mu first."""

    mu: np.ndarray                 # ascending, all < 0
    modes: np.ndarray              # (n, k) full-length vectors, fixed DOFs zero
    residuals: np.ndarray
    k_requested: int
    pseudo: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pseudo is None:
            self.pseudo = np.zeros(self.mu.size, dtype=bool)

    @property
    def lam(self):
        """Load factors lambda_i = -1/mu_i, ascending."""
        return -1.0 / self.mu

    @property
    def k_physical(self):
        return int(self.mu.size)

    def kept(self, n_keep):
        """Indices of the lowest n_keep non-pseudo load factors."""
        idx = np.flatnonzero(~self.pseudo)
        return idx[:n_keep]


def _normalize_modes(mu, Phi, Ksig_ff):
    norms = -np.einsum("ij,ij->j", Phi, Ksig_ff @ Phi)
    if np.any(norms <= 0):
        raise AnalysisError("mode with non-negative Ksigma norm on the compression side")
    return Phi / np.sqrt(norms)


def buckling_eigs(K, Ksigma, k, fixed_dofs, lu=None, dense_cutoff=DENSE_EIG_CUTOFF):
    """k algebraically smallest eigenpairs of Ksigma phi = mu K phi.

    Only negative-mu (positive load factor) pairs are returned; if fewer
    than k exist the spectrum is truncated (k_requested records the ask).
    """
    if k < 1:
        raise ValueError("need at least one eigenpair")
    n = K.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed_dofs] = False
    free = np.flatnonzero(mask)
    Kff = K[np.ix_(free, free)].tocsc()
    Ksf = Ksigma[np.ix_(free, free)].tocsc()

    nf = free.size
    if nf <= dense_cutoff:
        vals, vecs = eigh(Ksf.toarray(), Kff.toarray())
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        if lu is None:
            lu = factorize(K, free)
        Minv = spla.LinearOperator((nf, nf), matvec=lu.solve)
        v0 = np.full(nf, 1.0 / np.sqrt(nf))
        try:
            vals, vecs = spla.eigsh(
                Ksf, k=min(k, nf - 1), M=Kff, Minv=Minv, which="SA",
                v0=v0, ncv=min(nf, max(4 * k, 40)), maxiter=8000, tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise AnalysisError(f"buckling eigensolve did not converge: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    neg = vals < 0
    vals, vecs = vals[neg][:k], vecs[:, neg][:, :k]
    if vals.size == 0:
        raise AnalysisError("no compressive buckling eigenvalues found")
    vecs = _normalize_modes(vals, vecs, Ksf)

    num = Ksf @ vecs - Kff @ vecs * vals
    residuals = np.linalg.norm(num, axis=0) / np.linalg.norm(Kff @ vecs, axis=0)
    Phi = np.zeros((n, vals.size))
    Phi[free] = vecs
    return BucklingSpectrum(vals, Phi, residuals, k_requested=k)


def mode_elastic_energies(mesh, template, xbar, interp, mode):
    """Per-element strain energy phi_e^T k_e phi_e of one mode."""
    pe = element_displacements(mesh, mode)
    quad = np.einsum("ei,ij,ej->e", pe, template.k0, pe)
    return h1(np.asarray(xbar, dtype=float), interp) * quad


def flag_pseudo_modes(spectrum, mesh, template, xbar, interp,
                      density_cut=0.1, energy_frac=0.8):
    """Mark modes whose strain energy concentrates in low-density regions.

    A mode is artificial when the energy fraction carried by elements with
    xbar < density_cut exceeds energy_frac.
    """
    xbar = np.asarray(xbar, dtype=float)
    low = xbar < density_cut
    flags = np.zeros(spectrum.k_physical, dtype=bool)
    if low.any():
        for i in range(spectrum.k_physical):
            en = mode_elastic_energies(mesh, template, xbar, interp, spectrum.modes[:, i])
            total = en.sum()
            if total > 0 and en[low].sum() / total > energy_frac:
                flags[i] = True
    spectrum.pseudo = flags
    return spectrum
