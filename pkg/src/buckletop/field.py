"""Material interpolation, density filtering and Heaviside projection.

The stiffness interpolation h1 keeps a small void modulus E0 while the
stress-stiffness interpolation h2 goes to zero with the density, which is
what keeps spurious buckling modes out of void regions.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class InterpSpec:
    """Power-law interpolation of the void/solid moduli."""

    E0: float
    E1: float
    p: float

    def __post_init__(self):
        if not 0 < self.E0 < self.E1:
            raise ValueError(f"need 0 < E0 < E1, got E0={self.E0}, E1={self.E1}")
        if self.p < 1:
            raise ValueError(f"penalization must be >= 1, got {self.p}")


def h1(xe, interp):
    """Stiffness interpolation E0 + x^p (E1 - E0)."""
    return interp.E0 + np.asarray(xe) ** interp.p * (interp.E1 - interp.E0)


def h2(xe, interp):
    """Stress-stiffness interpolation x^p E1."""
    return np.asarray(xe) ** interp.p * interp.E1


def dh1(xe, interp):
    return interp.p * np.asarray(xe) ** (interp.p - 1) * (interp.E1 - interp.E0)


def dh2(xe, interp):
    return interp.p * np.asarray(xe) ** (interp.p - 1) * interp.E1


def filter_matrix(nelx, nely, rmin):
    """Row-stochastic hat-weight filter matrix over element centers.

    Weights max(0, rmin - dist) with distances in element units; rows are
    renormalized at the boundary (weights truncated at the domain edge).
    """
    m = nelx * nely
    if rmin <= 1.0:
        return sp.identity(m, format="csr")
    r = int(np.ceil(rmin)) - 1
    ii, jj = np.divmod(np.arange(m), nely)
    rows, cols, vals = [], [], []
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            w = rmin - np.hypot(di, dj)
            if w <= 0:
                continue
            i2 = ii + di
            j2 = jj + dj
            ok = (i2 >= 0) & (i2 < nelx) & (j2 >= 0) & (j2 < nely)
            rows.append(np.flatnonzero(ok))
            cols.append(i2[ok] * nely + j2[ok])
            vals.append(np.full(ok.sum(), w))
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    ).tocsr()
    rowsum = np.asarray(H.sum(axis=1)).ravel()
    return sp.diags(1.0 / rowsum) @ H


@dataclass
class FilterSpec:
    """Filter + projection parameters bound to a mesh, with passive sets."""

    rmin: float
    eta: float
    beta: float
    W: sp.csr_matrix
    passive_solid: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    passive_void: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @classmethod
    def build(cls, nelx, nely, rmin, eta, beta, passive_solid=(), passive_void=()):
        W = filter_matrix(nelx, nely, rmin)
        return cls(rmin, eta, beta,
                   W,
                   np.asarray(passive_solid, dtype=np.int64),
                   np.asarray(passive_void, dtype=np.int64))

    def _denominator(self):
        return np.tanh(self.beta * self.eta) + np.tanh(self.beta * (1.0 - self.eta))

    def project(self, xtilde):
        num = np.tanh(self.beta * self.eta) + np.tanh(self.beta * (xtilde - self.eta))
        return num / self._denominator()

    def project_deriv(self, xtilde):
        th = np.tanh(self.beta * (xtilde - self.eta))
        return self.beta * (1.0 - th**2) / self._denominator()

    def inverse_project(self, xbar):
        """Filtered-field value whose projection equals xbar (scalar or array)."""
        arg = np.clip(xbar * self._denominator() - np.tanh(self.beta * self.eta), -1 + 1e-15, 1 - 1e-15)
        return self.eta + np.arctanh(arg) / self.beta


def filter_project(x, spec):
    """Forward map x -> (xtilde, xbar); passive elements forced after projection."""
    xtilde = spec.W @ np.asarray(x, dtype=float)
    xbar = spec.project(xtilde)
    if spec.passive_solid.size:
        xbar[spec.passive_solid] = 1.0
    if spec.passive_void.size:
        xbar[spec.passive_void] = 0.0
    return xtilde, xbar


def chain_rule(dL_dxbar, x, spec):
    """Back-propagate a gradient on physical densities to design variables."""
    xtilde = spec.W @ np.asarray(x, dtype=float)
    g = np.array(dL_dxbar, dtype=float)
    if spec.passive_solid.size:
        g[spec.passive_solid] = 0.0
    if spec.passive_void.size:
        g[spec.passive_void] = 0.0
    return spec.W.T @ (g * spec.project_deriv(xtilde))


@dataclass
class DesignField:
    """Raw, filtered and projected density fields with the volume bound."""

    x: np.ndarray
    xtilde: np.ndarray
    xbar: np.ndarray
    volfrac: float

    @classmethod
    def from_raw(cls, x, spec, volfrac):
        xtilde, xbar = filter_project(x, spec)
        return cls(np.asarray(x, dtype=float), xtilde, xbar, volfrac)

    def volume_fraction(self, on="physical"):
        f = self.xbar if on == "physical" else self.x
        return float(np.mean(f))
