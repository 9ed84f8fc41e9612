"""Run orchestration: the column accuracy study, optimization runs,
re-analysis of stored designs and the finite-difference gradient check."""

import os
from dataclasses import dataclass

import numpy as np

from . import aggregation, outputs, postprocess, sensitivity
from .field import FilterSpec, DesignField, chain_rule, filter_project
from .mesh import COLUMN_E, COLUMN_LOAD, COLUMN_NU
from .optimizer import (OptimizationProblem, OptimizationSettings,
                        ContinuationSchedule, analyze_design, run_optimization)
from .problems import build_problem, column_benchmark_spec, fixture_density

COLUMN_LADDER = [(10, 2), (10, 4), (20, 2), (20, 4), (40, 8), (80, 16), (160, 32)]


def euler_column_load(E=COLUMN_E, t=0.005, Ly=1.0, Lx=10.0):
    """Closed-form critical load of the clamped-free column, pi^2 E I / (4 Lx^2)."""
    Iy = t * Ly**3 / 12.0
    return np.pi**2 * E * Iy / (4.0 * Lx**2)


@dataclass
class LadderRow:
    nelx: int
    nely: int
    lam1: float
    critical_load: float
    rel_error: float


def verify_column(element_kind, meshes=None, n_eigs=4):
    """lambda_1 accuracy of the column benchmark across a mesh ladder."""
    if meshes is None:
        meshes = COLUMN_LADDER
    Pc = euler_column_load()
    rows = []
    for nelx, nely in meshes:
        problem = OptimizationProblem(
            *column_benchmark_spec(nelx, nely), element_kind=element_kind,
            E1=COLUMN_E, E0=COLUMN_E * 1e-6, nu=COLUMN_NU)
        xbar = np.ones(problem.mesh.n_elems)
        st = analyze_design(problem, xbar, p=1.0, n_eigs=n_eigs, flag_pseudo=False)
        lam1 = st["spectrum"].lam[0]
        load = lam1 * COLUMN_LOAD
        rows.append(LadderRow(nelx, nely, lam1, load, load / Pc - 1.0))
    return rows


def _problem_from_config(cfg):
    mesh, bc = build_problem(cfg)
    fs = FilterSpec.build(mesh.nelx, mesh.nely, cfg.field.rmin, cfg.field.eta,
                          cfg.field.beta, passive_solid=bc.passive_solid,
                          passive_void=bc.passive_void)
    return OptimizationProblem(mesh, bc, element_kind=cfg.element,
                               E1=cfg.material.E1, E0=cfg.material.E0,
                               nu=cfg.material.nu, volfrac=cfg.field.f,
                               filter_spec=fs, volume_on=cfg.field.volume_on)


def _settings_from_config(cfg, problem):
    cc = cfg.optimizer.continuation
    rs = cfg.constraint.rho_schedule or {}
    schedule = ContinuationSchedule(
        p_start=cc.p_start, p_step=cc.p_step, p_period=cc.p_period, p_max=cc.p_max,
        rho_start=rs.get("start"), rho_factor=rs.get("factor", 2.0),
        rho_period=rs.get("period", 100), rho_max=rs.get("max"))
    x0 = None
    if cfg.problem.initial_design is not None:
        x0 = outputs.read_field_csv(cfg.problem.initial_design,
                                    problem.mesh.nelx, problem.mesh.nely)
    return OptimizationSettings(
        max_iters=cfg.optimizer.max_iters, move=cfg.optimizer.move,
        n_eigs=cfg.constraint.n_eigs, n_constraints=cfg.constraint.n_constraints,
        constraint=aggregation.ConstraintSpec(cfg.constraint.kind, cfg.constraint.Pc_bar,
                                              cfg.constraint.alpha, cfg.constraint.rho),
        continuation=schedule, consistent=cfg.sensitivity.consistent,
        early_stop_change=cfg.optimizer.early_stop_change, x0=x0)


def _diagnostics(problem, st, alpha, n_constraints, J0=None):
    spectrum = st["spectrum"]
    kept = spectrum.kept(n_constraints)
    lam = spectrum.lam[kept]
    delta = postprocess.separation_factors(lam, alpha) if lam.size >= 2 else np.empty(0)
    return postprocess.DiagnosticsReport(
        J0 if J0 is not None else st["J"], st["J"], lam, delta)


def _write_mode_maps(outdir, problem, st, xbar, n_modes=4, prefix="mode_energy"):
    mesh = problem.mesh
    spectrum = st["spectrum"]
    for i in range(min(n_modes, spectrum.k_physical)):
        en = postprocess.mode_energy_map(mesh, st["template"], xbar,
                                         st["interp"], spectrum.modes[:, i])
        logmap = postprocess.log_energy_map(en)
        outputs.write_scalar_pgm(os.path.join(outdir, f"{prefix}_{i+1}.pgm"),
                                 logmap, mesh.nelx, mesh.nely,
                                 -postprocess.LOG_CLIP_DECADES, 0.0)


def run_optimize(cfg, outdir=None):
    """Full optimization run with all file artifacts."""
    outdir = outdir or cfg.output.dir
    os.makedirs(outdir, exist_ok=True)
    problem = _problem_from_config(cfg)
    settings = _settings_from_config(cfg, problem)
    mesh = problem.mesh

    every = cfg.output.checkpoint_every

    def checkpoint(rec, design):
        if every and rec.iteration % every == 0:
            outputs.write_density_pgm(
                os.path.join(outdir, f"density_{rec.iteration:04d}.pgm"),
                design.xbar, mesh.nelx, mesh.nely)

    try:
        result = run_optimization(problem, settings, iteration_callback=checkpoint)
    except Exception as exc:
        pm = getattr(exc, "post_mortem", None)
        if pm is not None:
            outputs.write_field_csv(os.path.join(outdir, "crash_x.csv"),
                                    pm["x"], mesh.nelx, mesh.nely)
            outputs.write_field_csv(os.path.join(outdir, "crash_design.csv"),
                                    pm["xbar"], mesh.nelx, mesh.nely)
            outputs.write_json(os.path.join(outdir, "crash_state.json"),
                               {"iteration": pm["iteration"], "p": pm["p"],
                                "rho": pm["rho"], "error": str(exc)})
        raise

    outputs.write_history(os.path.join(outdir, "history.csv"), result.history,
                          settings.n_constraints)
    outputs.write_density_pgm(os.path.join(outdir, "final_design.pgm"),
                              result.design.xbar, mesh.nelx, mesh.nely)
    outputs.write_field_csv(os.path.join(outdir, "final_design.csv"),
                            result.design.xbar, mesh.nelx, mesh.nely)
    outputs.write_field_csv(os.path.join(outdir, "final_x.csv"),
                            result.design.x, mesh.nelx, mesh.nely)

    st = analyze_design(problem, result.design.xbar, result.p_final,
                        settings.n_eigs)
    report = _diagnostics(problem, st, cfg.constraint.alpha,
                          settings.n_constraints, J0=result.J0)
    if cfg.output.reference_Jn:
        report.kappa = report.Jn / cfg.output.reference_Jn
    diag = report.to_dict()
    diag.update({
        "p_final": result.p_final,
        "volume": result.design.volume_fraction(problem.volume_on),
        "Pc_bar": cfg.constraint.Pc_bar,
        "constraint_kind": cfg.constraint.kind,
        "J0_definition": "uniform physical density xbar = f at p = 1",
    })
    outputs.write_json(os.path.join(outdir, "diagnostics.json"), diag)
    _write_mode_maps(outdir, problem, st, result.design.xbar)
    return result, diag


def run_analyze(cfg, density_path, p_values=(1.0, 3.0), outdir=None):
    """Equilibrium + spectrum + diagnostics of a stored physical density field."""
    outdir = outdir or cfg.output.dir
    os.makedirs(outdir, exist_ok=True)
    problem = _problem_from_config(cfg)
    mesh = problem.mesh
    xbar = outputs.read_field_csv(density_path, mesh.nelx, mesh.nely)
    # the problem's passive regions are part of the structure, not the design
    if problem.bc.passive_solid.size:
        xbar[problem.bc.passive_solid] = 1.0
    if problem.bc.passive_void.size:
        xbar[problem.bc.passive_void] = 0.0

    diag = {
        "penalization_assumption":
            "reference values for uniform designs correspond to p = 1 "
            "(no penalization of the as-given physical densities); passive "
            "solid regions are kept solid",
    }
    last_st = None
    for p in p_values:
        st = analyze_design(problem, xbar, p, cfg.constraint.n_eigs)
        report = _diagnostics(problem, st, cfg.constraint.alpha,
                              cfg.constraint.n_constraints)
        entry = report.to_dict()
        entry["volume"] = float(np.mean(xbar))
        diag[f"p={p:g}"] = entry
        last_st = st
    outputs.write_json(os.path.join(outdir, "diagnostics.json"), diag)
    _write_mode_maps(outdir, problem, last_st, xbar)
    psi = postprocess.stress_energy_sign_map(mesh, last_st["template"],
                                             last_st["u0"],
                                             last_st["spectrum"].modes[:, 0],
                                             xbar=xbar)
    outputs.write_field_csv(os.path.join(outdir, "stress_energy_mode1.csv"),
                            psi, mesh.nelx, mesh.nely)
    return diag


MAX_FDCHECK_ELEMS = 12 * 12


def _fd_gradient(func, x, h_base=1e-6):
    g = np.zeros(x.size)
    for e in range(x.size):
        h = h_base * (1.0 + abs(x[e]))
        xp = x.copy()
        xp[e] += h
        xm = x.copy()
        xm[e] -= h
        g[e] = (func(xp) - func(xm)) / (2.0 * h)
    return g


def _masked_rel_err(analytic, fd):
    mask = np.abs(fd) > 1e-8 * np.abs(fd).max()
    rel = np.zeros(fd.size)
    rel[mask] = np.abs((analytic - fd) / fd)[mask]
    return rel, mask


def run_fdcheck(cfg, outdir=None):
    """Central-difference validation of every gradient path.

    Returns (rows, summary): per-entry records and max relative errors per
    quantity.  The mesh is capped at 12x12 elements to bound runtime.
    """
    problem = _problem_from_config(cfg)
    mesh = problem.mesh
    if mesh.n_elems > MAX_FDCHECK_ELEMS:
        raise ValueError(f"fdcheck mesh is capped at {MAX_FDCHECK_ELEMS} elements, "
                         f"got {mesh.n_elems}")
    fs = problem.filter_spec
    x = fixture_density(mesh)
    p = 3.0
    n_eigs = min(cfg.constraint.n_eigs, 6)
    cons = aggregation.ConstraintSpec(
        "ks" if cfg.constraint.kind == "separate" else cfg.constraint.kind,
        Pc_bar=max(cfg.constraint.Pc_bar, 1.0), alpha=cfg.constraint.alpha,
        rho=cfg.constraint.rho)

    def forward(xraw):
        _, xbar = filter_project(xraw, fs)
        return analyze_design(problem, xbar, p, n_eigs, flag_pseudo=False)

    st = forward(x)
    spectrum = st["spectrum"]
    design = DesignField.from_raw(x, fs, problem.volfrac)

    dJ = chain_rule(sensitivity.compliance_sens(mesh, st["template"], design.xbar,
                                                st["u0"], st["interp"]), x, fs)
    rows_dmu = []
    for i in range(spectrum.k_physical):
        es = sensitivity.eig_sensitivity(
            mesh, st["template"], design.xbar, st["u0"], spectrum.modes[:, i],
            spectrum.mu[i], st["lu"], st["free"], st["interp"],
            consistent=cfg.sensitivity.consistent, K=st["K"])
        rows_dmu.append((es.dlam_dxbar, es.dmu_dxbar))
    dlam1 = chain_rule(rows_dmu[0][0], x, fs)
    dmu1 = chain_rule(rows_dmu[0][1], x, fs)
    dmu_all = np.array([chain_rule(r[1], x, fs) for r in rows_dmu])
    g_agg, dg_agg, s_used = aggregation.aggregated_constraint(
        spectrum.mu, dmu_all, cons)

    fd_J = _fd_gradient(lambda xi: forward(xi)["J"], x)
    fd_lam1 = _fd_gradient(lambda xi: forward(xi)["spectrum"].lam[0], x)
    fd_mu1 = _fd_gradient(lambda xi: forward(xi)["spectrum"].mu[0], x)

    def agg_value(xi):
        sp = forward(xi)["spectrum"]
        g, _, _ = aggregation.aggregated_constraint(sp.mu, np.zeros((sp.k_physical, 1)),
                                                    cons, s=s_used)
        return g

    fd_agg = _fd_gradient(agg_value, x)

    quantities = [
        ("compliance", dJ, fd_J),
        ("lambda_1", dlam1, fd_lam1),
        ("mu_1", dmu1, fd_mu1),
        ("aggregated", dg_agg, fd_agg),
    ]
    rows = []
    summary = {}
    for name, an, fd in quantities:
        rel, mask = _masked_rel_err(an, fd)
        summary[name] = float(rel.max())
        for e in range(x.size):
            rows.append((name, e, an[e], fd[e], rel[e], bool(mask[e])))

    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        lines = ["quantity,element,analytic,fd,rel_error,significant"]
        lines += [f"{q},{e},{a:.17g},{f:.17g},{r:.17g},{int(s)}"
                  for q, e, a, f, r, s in rows]
        outputs._atomic_write(os.path.join(outdir, "fdcheck.csv"),
                              "\n".join(lines) + "\n")
    return rows, summary


FD_TOLERANCES = {"compliance": 1e-5, "lambda_1": 1e-3, "mu_1": 1e-3, "aggregated": 1e-3}


def fdcheck_passes(summary, tolerances=FD_TOLERANCES):
    return all(summary[k] < tol for k, tol in tolerances.items())
