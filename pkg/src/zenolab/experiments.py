"""Builders turning an ``ExperimentConfig`` into module objects, and the runs
behind each CLI subcommand.  Every function returns plain data; file output
is left to the CLI.
"""
from __future__ import annotations

import math

import numpy as np

from . import increments as inc
from . import kinetics as kin
from . import robustness as rob
from . import schur
from . import zenoflow as zf
from .config import ExperimentConfig
from .quadform import LocalFrame, assemble, gradient_frame, make_frame, signature


def reference_momentum(cfg: ExperimentConfig) -> np.ndarray:
    """``|p| (cos theta u + sin theta e)`` with ``e`` the first basis vector orthogonal to ``u``."""
    u = np.asarray(cfg.geometry.axis, dtype=float)
    for k in range(4):
        e = np.eye(4)[k] - u[k] * u
        if np.linalg.norm(e) > 0.5:
            e /= np.linalg.norm(e)
            break
    th = cfg.geometry.theta
    return cfg.geometry.p_norm * (math.cos(th) * u + math.sin(th) * e)


def build_frame(cfg: ExperimentConfig) -> LocalFrame:
    frame = make_frame(reference_momentum(cfg), cfg.geometry.axis)
    if cfg.geometry.normal_convention == "gradient":
        frame = gradient_frame(assemble(1.0, cfg.flow.r0, frame), frame.p_ref)
    return frame


def build_amplitude(cfg: ExperimentConfig) -> schur.AmplitudeModel:
    return schur.AmplitudeModel(w=cfg.amplitude.w, a=cfg.amplitude.a)


def resolvent_params(cfg: ExperimentConfig, Q, frame) -> schur.ResolventParams:
    g = cfg.amplitude.gamma
    if g is None:
        g = schur.default_gamma(Q, frame.p_ref, build_amplitude(cfg), cfg.increments.kappa,
                                seed=cfg.mc.seed)
    return schur.ResolventParams(cfg.increments.kappa, g, cfg.amplitude.eta)


def build_flow_model(cfg: ExperimentConfig, frame: LocalFrame | None = None) -> zf.FlowModel:
    frame = frame or build_frame(cfg)
    kappa = cfg.increments.kappa
    provider = zf.increment_provider(frame, cfg.increments.s, kappa, cfg.increments.weighting)
    if cfg.flow.rho_model == "constant":
        rho = zf.ConstantRate(cfg.flow.rho_value)
    else:
        Q0 = assemble(1.0, cfg.flow.r0, frame)
        params = resolvent_params(cfg, Q0, frame)
        rho = zf.SchurRate(frame, build_amplitude(cfg), params.eta, kappa, params.gamma,
                           cfg.flow.rho_dlam, min(cfg.mc.samples, 8192), cfg.mc.seed)
    return zf.FlowModel.from_form(1.0, cfg.flow.r0, kappa, provider, rho=rho,
                                  representative=cfg.flow.representative)


def build_jump_model(cfg: ExperimentConfig) -> kin.JumpModel:
    k = cfg.kinetics
    return kin.JumpModel(m=k.m, alpha=k.alpha, beta=k.beta, h=k.h, n_side=k.n_side,
                         jumps=tuple(k.jumps), w=k.w, dim=k.dim)


# -- subcommand runs ---------------------------------------------------------

def run_moments(cfg: ExperimentConfig) -> list[dict]:
    frame = build_frame(cfg)
    Q = assemble(1.0, cfg.flow.r0, frame)
    rows = []
    for kappa in cfg.increments.kappa_grid:
        k_w = kappa if cfg.increments.weighting == "zeno" else 0.0
        law = inc.IncrementLaw(cfg.increments.s, k_w, Q, frame)
        for method in ("analytic", "montecarlo"):
            M = inc.moments(law, method, cfg.mc.samples, cfg.mc.seed, chunk=cfg.mc.chunk,
                            workers=cfg.mc.workers)
            rows.append({"kappa": kappa, **M.as_dict()})
    return rows


def run_flow(cfg: ExperimentConfig):
    model = build_flow_model(cfg)
    traj = zf.integrate_flow(model, cfg.flow.r0, cfg.flow.lam_max, rtol=cfg.flow.rtol,
                             atol=cfg.flow.atol, tol_rhs=cfg.flow.tol_rhs)
    summary = {"termination": traj.termination, "message": traj.message, "n_records": len(traj.records),
               "gamma_target": model.gamma_target}
    if traj.records:
        r_final = traj.final.r
        frame = build_frame(cfg)
        sig = signature(assemble(traj.final.q_n, traj.final.q_tan, frame))
        summary.update({
            "final_lambda": traj.final.lam,
            "final_r": r_final,
            "signature": str(sig),
            "gamma_max_rel_drift": traj.gamma_drift(),
            "r_strictly_decreasing": bool(np.all(np.diff(traj.r) < 0)),
            "rhs_all_negative": bool(all(rec.rhs < 0 for rec in traj.records)),
        })
    return traj, summary


def run_fixed_point(cfg: ExperimentConfig) -> dict:
    model = build_flow_model(cfg)
    report = zf.fixed_point(model, tuple(cfg.flow.bracket))
    out = {"fixed_point": report.as_dict()}
    if report.found:
        Q, sig = zf.fixed_point_form(report.root, build_frame(cfg))
        out["stability"] = zf.stability(model, report.root)
        out["signature"] = str(sig)
        out["Q_star"] = Q.entries.tolist()
    else:
        # the moment relation is still informative off the root: report it at r0
        c = model.coefficients(cfg.flow.r0)
        out["moment_ratio_at_r0"] = c.M.M_nn / c.M.M_tt if c.M.M_tt else None
        out["minus_A_over_B_at_r0"] = -c.A / c.B if c.B else None
    return out


def run_sigma(cfg: ExperimentConfig) -> dict:
    frame = build_frame(cfg)
    Q = assemble(1.0, cfg.flow.r0, frame)
    params = resolvent_params(cfg, Q, frame)
    st = schur.sigma_tensor(Q, frame, build_amplitude(cfg), params, cfg.amplitude.averaging,
                            cfg.mc.samples, cfg.mc.seed, resolvent=cfg.amplitude.resolvent,
                            chunk=cfg.mc.chunk, workers=cfg.mc.workers)
    other = "multiplier" if cfg.amplitude.resolvent == "lorentzian" else "lorentzian"
    st_other = schur.sigma_tensor(Q, frame, build_amplitude(cfg), params, cfg.amplitude.averaging,
                                  cfg.mc.samples, cfg.mc.seed, resolvent=other,
                                  chunk=cfg.mc.chunk, workers=cfg.mc.workers)
    out = st.as_dict()
    out["gamma"] = params.gamma
    out["kappa"] = params.kappa
    out["eta"] = params.eta
    out["resolvent_form_discrepancy"] = {
        "other_form": other,
        "sigma_tan_other": st_other.sigma_tan,
        "ratio": st.sigma_tan / st_other.sigma_tan if st_other.sigma_tan else None,
    }
    return out


def run_equilibrium(cfg: ExperimentConfig):
    model = build_jump_model(cfg)
    L = kin.generator(model)
    fb = kin.gibbs_state(model)
    f0 = np.zeros(model.n_sites)
    f0[model.n_sites // 2] = 1.0
    res = kin.evolve(model, f0, cfg.kinetics.horizon, l1_target=cfg.kinetics.l1_target)
    resid = kin.stationarity_residual(model, fb, L, per_site=True)
    pts = model.points
    p_col = pts[:, 0] if model.dim == 1 else np.linalg.norm(pts, axis=1)
    table = {"p": p_col, "f": res.f, "f_gibbs": fb, "residual": resid}
    summary = {
        "residual_max": float(resid.max()),
        "l1_distance_final": res.l1[-1],
        "nonrel_max_dev": kin.nonrel_limit_check(model)["max_dev"] if model.dim == 1 else None,
        "free_energy_monotone": res.free_energy_monotone(),
        "mass_error_max": max(res.mass_error),
        "detailed_balance_residual": kin.detailed_balance_residual(model),
        "final_time": res.times[-1],
        "measure": kin.MEASURE,
        "measure_note": "f is a density for the counting measure on the lattice; the invariant "
                        "mass-shell measure would reweight by the lattice Jacobian",
    }
    log = {"t": res.times, "l1": res.l1, "free_energy": res.free_energy}
    return table, summary, log


def run_anisotropy(cfg: ExperimentConfig) -> list[dict]:
    rb = cfg.robustness
    model = rob.AnisoModel(gamma_perp=rb.gamma_perp, coupling=rb.coupling, chi=rb.chi)
    direction = model.aniso_basis[0] + 0.5 * model.aniso_basis[3]
    direction /= np.linalg.norm(direction)
    rows = []
    for eps in rb.eps_aniso:
        out = rob.aniso_evolve(rob.AnisoState(cfg.flow.r0, eps * direction), model, rb.lam_max)
        rows.append({"epsilon_aniso": eps, "gamma_perp": rb.gamma_perp,
                     "decay_slope": out["decay_slope"] if eps > 0 else 0.0,
                     "endpoint_shift": out["endpoint_shift"]})
    return rows
