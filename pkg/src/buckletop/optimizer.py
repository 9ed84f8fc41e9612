"""MMA design updates and the constrained optimization loop.

The MMA subproblem solver is the standard primal-dual Newton method for
Svanberg's method of moving asymptotes.  Asymptote initialization 0.5x the
variable range, adaptation factors 0.7 / 1.2 and a move limit of 0.2 are
used throughout (the usual defaults).
"""

from dataclasses import dataclass, field

import numpy as np

from . import aggregation, analysis, field as field_mod, sensitivity
from .aggregation import ConstraintSpec
from .elements import make_template
from .field import DesignField, FilterSpec, InterpSpec

ASY_INIT = 0.5
ASY_INCR = 1.2
ASY_DECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5
EPSIMIN = 1e-7


@dataclass
class MmaState:
    """Rolling state of the MMA update (asymptotes + two previous iterates)."""

    n: int
    move: float = 0.2
    xold1: np.ndarray = None
    xold2: np.ndarray = None
    low: np.ndarray = None
    upp: np.ndarray = None
    iteration: int = 0

    def __post_init__(self):
        if self.low is None:
            self.low = np.zeros(self.n)
        if self.upp is None:
            self.upp = np.ones(self.n)


def mma_update(x, f0, df0dx, g_vec, dgdx, state,
               xmin=None, xmax=None, c_coef=1000.0):
    """One MMA step for min f0 s.t. g_i >= 0 on box [xmin, xmax].

    Constraints arrive in feasible-when-nonnegative orientation and are
    converted to the solver's f_i <= 0 convention internally.  The
    subproblem is always feasible through its elastic slack variables, so
    an infeasible iterate degrades into a constraint-relaxation step
    rather than a failure.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if xmin is None:
        xmin = np.zeros(n)
    if xmax is None:
        xmax = np.ones(n)
    g_vec = np.atleast_1d(np.asarray(g_vec, dtype=float))
    dgdx = np.atleast_2d(np.asarray(dgdx, dtype=float))
    m = g_vec.size
    fval = -g_vec
    dfdx = -dgdx

    state.iteration += 1
    xval = x
    xrange = xmax - xmin
    if state.iteration <= 2 or state.xold2 is None:
        low = xval - ASY_INIT * xrange
        upp = xval + ASY_INIT * xrange
    else:
        zzz = (xval - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[zzz > 0] = ASY_INCR
        factor[zzz < 0] = ASY_DECR
        low = xval - factor * (state.xold1 - state.low)
        upp = xval + factor * (state.upp - state.xold1)
        # a tight contraction floor lets oscillating variables settle far
        # below the usual 0.01*range limit cycle
        low = np.clip(low, xval - 10.0 * xrange, xval - 1e-4 * xrange)
        upp = np.clip(upp, xval + 1e-4 * xrange, xval + 10.0 * xrange)

    alfa = np.maximum.reduce([low + ALBEFA * (xval - low),
                              xval - state.move * xrange, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - xval),
                              xval + state.move * xrange, xmax])

    xmami = np.maximum(xrange, 1e-5)
    ux1 = upp - xval
    xl1 = xval - low
    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0 / xmami
    p0 = (p0 + pq0) * ux1**2
    q0 = (q0 + pq0) * xl1**2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + RAA0 / xmami[None, :]
    P = (P + PQ) * ux1[None, :] ** 2
    Q = (Q + PQ) * xl1[None, :] ** 2
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    a0 = 1.0
    a = np.zeros(m)
    c = np.full(m, c_coef)
    d = np.ones(m)
    xnew, *_ = _subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d)

    state.xold2 = state.xold1
    state.xold1 = xval.copy()
    state.low = low
    state.upp = upp
    return xnew


def _subsolv(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
    """Primal-dual Newton solve of the MMA subproblem."""
    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / (x - alfa), 1.0)
    eta = np.maximum(1.0 / (beta - x), 1.0)
    mu = np.maximum(1.0, 0.5 * c)
    zet = 1.0
    s = np.ones(m)
    epsi = 1.0

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + lam @ P
        qlam = q0 + lam @ Q
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        rex = plam / ux1**2 - qlam / xl1**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * z - epsi
        res = lam * s - epsi
        r = np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])
        return r, np.linalg.norm(r), np.abs(r).max()

    while epsi > EPSIMIN:
        _, resnorm, resmax = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        for _ in range(200):
            if resmax <= 0.9 * epsi:
                break
            ux1 = upp - x
            xl1 = x - low
            ux2 = ux1**2
            xl2 = xl1**2
            plam = p0 + lam @ P
            qlam = q0 + lam @ Q
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]
            delx = plam / ux2 - qlam / xl2 - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2.0 * (plam / (ux1 * ux2) + qlam / (xl1 * xl2)) \
                + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.block([[Alam, a[:, None]],
                               [a[None, :], -zet / z]])
                sol = np.linalg.solve(AA, np.concatenate([blam, [delz]]))
                dlam = sol[:m]
                dz = sol[m]
                dx = -delx / diagx - (dlam @ GG) / diagx
            else:
                diaglamyiinv = 1.0 / diaglamyi
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T * diaglamyiinv[None, :]) @ GG
                azz = zet / z + a @ (a * diaglamyiinv)
                axz = -(a * diaglamyiinv) @ GG
                bx = delx + (dellamyi * diaglamyiinv) @ GG
                bz = delz - a @ (dellamyi * diaglamyiinv)
                AA = np.block([[Axx, axz[:, None]],
                               [axz[None, :], azz]])
                sol = np.linalg.solve(AA, np.concatenate([-bx, [-bz]]))
                dx = sol[:n]
                dz = sol[n]
                dlam = (GG @ dx) * diaglamyiinv - dz * (a * diaglamyiinv) \
                    + dellamyi * diaglamyiinv
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmxx, stmalfa, stmbeta, 1.0)

            xold, yold, zold = x, y, z
            lamold, xsiold, etaold = lam, xsi, eta
            muold, zetold, sold = mu, zet, s
            resnew = 2.0 * resnorm
            for _ in range(50):
                if resnew <= resnorm:
                    break
                x = xold + steg * dx
                y = yold + steg * dy
                z = zold + steg * dz
                lam = lamold + steg * dlam
                xsi = xsiold + steg * dxsi
                eta = etaold + steg * deta
                mu = muold + steg * dmu
                zet = zetold + steg * dzet
                s = sold + steg * ds
                _, resnew, resmax = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                steg *= 0.5
            resnorm = resnew
        epsi *= 0.1
    return x, y, z, lam, xsi, eta, mu, zet, s


@dataclass(frozen=True)
class ContinuationSchedule:
    """Deterministic schedules for the penalization p and aggregation rho."""

    p_start: float = 1.0
    p_step: float = 0.25
    p_period: int = 25
    p_max: float = 6.0
    rho_start: float = None
    rho_factor: float = 2.0
    rho_period: int = 100
    rho_max: float = None

    def penalization(self, iteration):
        return min(self.p_max, self.p_start + self.p_step * (iteration // self.p_period))

    def aggregation_rho(self, iteration):
        if self.rho_start is None:
            return None
        rho = self.rho_start * self.rho_factor ** (iteration // self.rho_period)
        if self.rho_max is not None:
            rho = min(rho, self.rho_max)
        return rho


def continuation_step(iteration, schedule):
    """(p, rho) at a given iteration."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    return schedule.penalization(iteration), schedule.aggregation_rho(iteration)


@dataclass
class OptimizationProblem:
    """Everything geometric/material the optimization loop needs."""

    mesh: object
    bc: object
    element_kind: str = "q4"
    E1: float = 1.0
    E0: float = 1e-6
    nu: float = 0.3
    volfrac: float = 0.2
    filter_spec: FilterSpec = None
    volume_on: str = "physical"


@dataclass
class OptimizationSettings:
    max_iters: int = 700
    move: float = 0.2
    n_eigs: int = 24
    n_constraints: int = 12
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)
    continuation: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    consistent: bool = True
    early_stop_change: float = None
    x0: np.ndarray = None
    dense_cutoff: int = analysis.DENSE_EIG_CUTOFF


@dataclass
class IterationRecord:
    iteration: int
    p: float
    rho: float
    J: float
    volume: float
    change: float
    lam: np.ndarray
    g_max: float


@dataclass
class OptimizationResult:
    design: DesignField
    history: list
    J0: float
    Jf: float
    spectrum: analysis.BucklingSpectrum
    p_final: float

    @property
    def Jn(self):
        return self.Jf / self.J0


def analyze_design(problem, xbar, p, n_eigs, dense_cutoff=analysis.DENSE_EIG_CUTOFF,
                   flag_pseudo=True):
    """Equilibrium + spectrum of a physical density field at penalization p."""
    mesh, bc = problem.mesh, problem.bc
    template = make_template(problem.element_kind, 1.0, problem.nu,
                             mesh.t, mesh.lx, mesh.ly)
    interp = InterpSpec(problem.E0, problem.E1, p)
    f0 = bc.load_vector(mesh.n_dofs)
    K = analysis.assemble_stiffness(mesh, template, xbar, interp)
    u0, lu, free = analysis.solve_equilibrium(K, f0, bc.fixed_dofs)
    Ksig = analysis.assemble_stress_stiffness(mesh, template, xbar, u0, interp)
    spectrum = analysis.buckling_eigs(K, Ksig, n_eigs, bc.fixed_dofs, lu=lu,
                                      dense_cutoff=dense_cutoff)
    if flag_pseudo:
        analysis.flag_pseudo_modes(spectrum, mesh, template, xbar, interp)
    J = analysis.compliance(u0, f0)
    return dict(template=template, interp=interp, f0=f0, K=K, u0=u0, lu=lu,
                free=free, Ksig=Ksig, spectrum=spectrum, J=J)


def reference_compliance(problem):
    """Compliance of the uniform design xbar = volfrac at p = 1.

    Passive regions keep their forced densities; they are part of the
    structure, not the design.
    """
    mesh, bc = problem.mesh, problem.bc
    template = make_template(problem.element_kind, 1.0, problem.nu,
                             mesh.t, mesh.lx, mesh.ly)
    interp = InterpSpec(problem.E0, problem.E1, 1.0)
    xbar = np.full(mesh.n_elems, problem.volfrac)
    if bc.passive_solid.size:
        xbar[bc.passive_solid] = 1.0
    if bc.passive_void.size:
        xbar[bc.passive_void] = 0.0
    f0 = bc.load_vector(mesh.n_dofs)
    K = analysis.assemble_stiffness(mesh, template, xbar, interp)
    u0, _, _ = analysis.solve_equilibrium(K, f0, bc.fixed_dofs)
    return analysis.compliance(u0, f0)


def initial_design(problem):
    """Uniform raw design whose projection equals the volume fraction."""
    x0 = problem.filter_spec.inverse_project(problem.volfrac)
    return np.full(problem.mesh.n_elems, float(x0))


def _volume_constraint(design, problem, fs):
    """(g, dg/dx) for the volume bound, feasible when g >= 0."""
    m = design.x.size
    f = problem.volfrac
    if problem.volume_on == "design":
        g = 1.0 - np.mean(design.x) / f
        dg = np.full(m, -1.0 / (m * f))
        return g, dg
    g = 1.0 - np.mean(design.xbar) / f
    dg = field_mod.chain_rule(np.full(m, -1.0 / (m * f)), design.x, fs)
    return g, dg


def run_optimization(problem, settings, iteration_callback=None):
    """Run the full MMA loop; returns the design, history and diagnostics."""
    mesh = problem.mesh
    fs = problem.filter_spec
    m = mesh.n_elems

    x = settings.x0.copy() if settings.x0 is not None else initial_design(problem)
    J0 = reference_compliance(problem)
    state = MmaState(n=m, move=settings.move)
    spec0 = settings.constraint
    buckling_on = spec0.Pc_bar > 0.0
    s_frozen = None
    p_prev = rho_prev = None
    history = []

    iteration = 0
    for iteration in range(settings.max_iters):
        p, rho = continuation_step(iteration, settings.continuation)
        if rho is None:
            rho = spec0.rho
        continuation_changed = (p != p_prev) or (rho != rho_prev)
        p_prev, rho_prev = p, rho

        design = DesignField.from_raw(x, fs, problem.volfrac)
        try:
            st = analyze_design(problem, design.xbar, p, settings.n_eigs,
                                dense_cutoff=settings.dense_cutoff)
        except analysis.AnalysisError as exc:
            exc.post_mortem = dict(iteration=iteration, p=p, rho=rho,
                                   x=x.copy(), xbar=design.xbar.copy())
            raise
        spectrum = st["spectrum"]
        kept = spectrum.kept(settings.n_constraints)

        dJdxbar = sensitivity.compliance_sens(mesh, st["template"], design.xbar,
                                              st["u0"], st["interp"])
        dJdx = field_mod.chain_rule(dJdxbar, x, fs)

        g_list = []
        dg_list = []
        gv, dgv = _volume_constraint(design, problem, fs)
        g_list.append(gv)
        dg_list.append(dgv)

        cons_spec = ConstraintSpec(spec0.kind, spec0.Pc_bar, spec0.alpha, rho)
        if buckling_on and kept.size:
            dmu_rows = []
            for idx in kept:
                es = sensitivity.eig_sensitivity(
                    mesh, st["template"], design.xbar, st["u0"],
                    spectrum.modes[:, idx], spectrum.mu[idx], st["lu"], st["free"],
                    st["interp"], consistent=settings.consistent, K=st["K"])
                dmu_rows.append(field_mod.chain_rule(es.dmu_dxbar, x, fs))
            dmu_rows = np.array(dmu_rows)
            mu_kept = spectrum.mu[kept]
            if cons_spec.kind == "separate":
                g_b, coeff = aggregation.separate_constraints(
                    mu_kept, cons_spec.Pc_bar, cons_spec.alpha)
                g_list.extend(g_b.tolist())
                dg_list.extend((coeff[:, None] * dmu_rows).tolist())
            else:
                if continuation_changed or s_frozen is None:
                    M, _ = aggregation.aggregate(mu_kept, cons_spec)
                    s_frozen = aggregation.scale_factor(mu_kept.min(), M)
                g_a, dg_a, _ = aggregation.aggregated_constraint(
                    mu_kept, dmu_rows, cons_spec, s=s_frozen)
                g_list.append(g_a)
                dg_list.append(dg_a)

        g_vec = np.array(g_list)
        dgdx = np.array(dg_list)

        x_new = mma_update(x, st["J"] / J0, dJdx / J0, g_vec, dgdx, state)
        change = float(np.abs(x_new - x).max())
        rec = IterationRecord(iteration, p, rho, st["J"],
                              design.volume_fraction(problem.volume_on),
                              change, spectrum.lam[kept] if kept.size else spectrum.lam,
                              float(np.max(-g_vec)))
        history.append(rec)
        if iteration_callback is not None:
            iteration_callback(rec, design)
        x = x_new
        if settings.early_stop_change is not None and change < settings.early_stop_change:
            break

    p_final, _ = continuation_step(iteration, settings.continuation)
    design = DesignField.from_raw(x, fs, problem.volfrac)
    st = analyze_design(problem, design.xbar, p_final, settings.n_eigs,
                        dense_cutoff=settings.dense_cutoff)
    return OptimizationResult(design, history, J0, st["J"], st["spectrum"], p_final)
