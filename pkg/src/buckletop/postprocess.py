"""Derived diagnostics: separation factors, energy maps, stiffness ratios."""

from dataclasses import dataclass

import numpy as np

from .analysis import element_displacements, gauss_stresses, mode_elastic_energies

LOG_CLIP_DECADES = 6.0


def separation_factors(lam, alpha):
    """delta_i = lam_i/lam_1 - alpha^(i-1) for i >= 2.

    Values approach zero as mode i coalesces (up to the alpha gap) onto the
    fundamental one.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.size < 2:
        return np.empty(0)
    if lam[0] <= 0:
        raise ValueError("load factors must be positive")
    if np.any(np.diff(lam) < -1e-12 * lam[0]):
        raise ValueError("load factors must be sorted ascending")
    i = np.arange(2, lam.size + 1)
    return lam[1:] / lam[0] - alpha ** (i - 1.0)


def mode_energy_map(mesh, template, xbar, interp, mode):
    """Per-element strain energy phi_e = phi^T k_e phi of one mode (>= 0)."""
    return mode_elastic_energies(mesh, template, xbar, interp, mode)


def log_energy_map(energies, clip_decades=LOG_CLIP_DECADES):
    """log10(phi_e / phi_max), clipped below at -clip_decades."""
    energies = np.asarray(energies, dtype=float)
    emax = energies.max()
    if emax <= 0:
        return np.full(energies.shape, -clip_decades)
    with np.errstate(divide="ignore"):
        out = np.log10(energies / emax)
    return np.clip(out, -clip_decades, 0.0)


def stress_energy_sign_map(mesh, template, u0, v, xbar=None, density_cut=0.1):
    """Signed per-element stress energy psi_e = v_e^T g0(u0_e) v_e.

    Positive values mark stiffened (tension) regions, negative softened
    (compression) ones.  Elements below the density cut are zeroed, a
    display convention.
    """
    sigma = gauss_stresses(mesh, template, u0)
    ve = element_displacements(mesh, v)
    q = np.einsum("ei,gcij,ej->egc", ve, template.g_basis, ve)
    psi = np.einsum("egc,egc->e", q, sigma)
    if xbar is not None:
        psi = np.where(np.asarray(xbar) < density_cut, 0.0, psi)
    return psi


@dataclass
class DiagnosticsReport:
    """Summary numbers of one analysis or optimization run."""

    J0: float
    Jf: float
    lam: np.ndarray
    delta: np.ndarray
    kappa: float = None

    @property
    def Jn(self):
        return self.Jf / self.J0

    def to_dict(self):
        return {
            "J0": self.J0,
            "Jf": self.Jf,
            "Jn": self.Jn,
            "kappa": self.kappa,
            "lambda": list(map(float, np.atleast_1d(self.lam))),
            "delta": list(map(float, np.atleast_1d(self.delta))),
        }
