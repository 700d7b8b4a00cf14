"""Invariant suite behind ``zenolab verify``.

Each check returns ``{"name", "passed", "value", "threshold"}``.  Sizes are
kept moderate so the whole suite runs in a few seconds; the pytest suite
exercises the same invariants at full scale.
"""
from __future__ import annotations

import numpy as np

from . import increments as inc
from . import kinetics as kin
from . import quadform as qf
from . import robustness as rob
from . import schur
from . import zenoflow as zf
from .config import ExperimentConfig
from .experiments import build_flow_model, build_frame, build_jump_model
from .rng import stream


def _check(name, value, threshold, passed=None):
    ok = bool(value <= threshold) if passed is None else bool(passed)
    return {"name": name, "passed": ok, "value": float(value), "threshold": float(threshold)}


def _random_sym(g, n=4):
    a = g.standard_normal((n, n))
    return 0.5 * (a + a.T)


def check_quadform(cfg, g):
    out = []
    worst = 0.0
    for _ in range(200):
        u = g.standard_normal(4)
        u /= np.linalg.norm(u)
        f = qf.make_frame(g.standard_normal(4), u)
        qn, qt = g.uniform(-3, 3, 2)
        a, b, res = qf.decompose(qf.assemble(qn, qt, f), f)
        worst = max(worst, abs(a - qn), abs(b - qt), res)
    out.append(_check("quadform.decompose_assemble", worst, 1e-13))
    frame = build_frame(cfg)
    sigs = [str(qf.signature(qf.assemble(1.0, r, frame))) for r in (0.5, -0.5, 0.0)]
    out.append(_check("quadform.signature_family", 0.0, 0.0, sigs == ["(4,0,0)", "(1,3,0)", "(1,0,3)"]))
    alpha = 0.7
    qs = qf.QuadForm.diag(1, -alpha, -alpha, -alpha)
    res = max(qf.isometry_residual(qs, qf.scaled_boost(0.3, alpha, ax)) for ax in (1, 2, 3))
    out.append(_check("quadform.isometry_boost", res, 1e-10))
    return out


def check_increments(cfg, g):
    out = []
    worst = 0.0
    for _ in range(1000):
        Q = qf.QuadForm(_random_sym(g))
        p, d = g.uniform(-5, 5, 4), g.uniform(-5, 5, 4)
        lhs = qf.evaluate(Q, p + d / 2) - qf.evaluate(Q, p - d / 2)
        rhs = inc.contrast(Q, p, d)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    out.append(_check("increments.contrast_identity", worst, 1e-12))
    frame = build_frame(cfg)
    Q = qf.assemble(1.0, cfg.flow.r0, frame)
    worst_z = 0.0
    for kappa in (0.0, 1.0, 4.0):
        law = inc.IncrementLaw(cfg.increments.s, kappa, Q, frame)
        a = inc.moments(law)
        m = inc.moments(law, "montecarlo", 200_000, cfg.mc.seed, chunk=cfg.mc.chunk, workers=cfg.mc.workers)
        for key, se in (("M_nn", "se_nn"), ("M_tt", "se_tt"), ("M_nt", "se_nt")):
            z = abs(getattr(a, key) - getattr(m, key)) / max(getattr(m, se), 1e-300)
            worst_z = max(worst_z, z)
    out.append(_check("increments.mc_vs_analytic_z", worst_z, 4.0))
    return out


def check_zenoflow(cfg, g):
    out = []
    e_worst = h_worst = i_worst = 0.0
    for _ in range(1000):
        kappa = g.uniform(0.1, 5)
        qn, qt = g.uniform(-3, 3, 2)
        mnn, mtt = g.uniform(0.1, 2, 2)
        M = inc.MomentSet(mnn, mtt, g.uniform(-1, 1) * np.sqrt(mnn * mtt))
        G = zf.gamma(qn, qt, kappa, M)
        A, B = zf.sensitivities(qn, qt, kappa, M)
        scale = max(abs(G), 1e-300)
        e_worst = max(e_worst, abs(G - 0.5 * (qn * A + qt * B)) / scale)
        for a in (0.5, 2.0, 10.0):
            h_worst = max(h_worst, abs(zf.gamma(a * qn, a * qt, kappa, M) - a * a * G) / (a * a * scale))
        r = qt / qn
        lhs = A + r * B
        rhs = 4 * kappa * qn * M.quadratic(r)
        i_worst = max(i_worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    out.append(_check("zenoflow.euler_identity", e_worst, 1e-12))
    out.append(_check("zenoflow.homogeneity", h_worst, 1e-12))
    out.append(_check("zenoflow.A_plus_rB_identity", i_worst, 1e-12))
    frame = build_frame(cfg)
    provider = zf.increment_provider(frame, cfg.increments.s, cfg.increments.kappa, cfg.increments.weighting)
    state = zf.FlowState.from_form(1.0, cfg.flow.r0, cfg.increments.kappa, provider)
    states = zf.calibrated_trajectory(state, 1e-3, 200, cfg.increments.kappa, provider)
    drift = max(abs(zf.gamma(s.q_n, s.q_tan, cfg.increments.kappa, provider(s.q_n, s.q_tan)) - state.Gamma)
                / state.Gamma for s in states)
    out.append(_check("zenoflow.calibration_drift", drift, 1e-10))
    model = build_flow_model(cfg, frame)
    traj = zf.integrate_flow(model, cfg.flow.r0, cfg.flow.lam_max, rtol=cfg.flow.rtol)
    dec = bool(np.all(np.diff(traj.r) < 0))
    out.append(_check("zenoflow.flow_monotone", 0.0, 0.0, dec))
    neg = [r for r in traj.r if r < 0]
    sig_ok = all(str(qf.signature(qf.assemble(1.0, r, frame))) == "(1,3,0)" for r in neg)
    out.append(_check("zenoflow.lorentzian_after_crossing", 0.0, 0.0, sig_ok))
    return out


def check_schur(cfg, g):
    out = []
    worst = 0.0
    for _ in range(10_000 // 10):
        Q = qf.QuadForm(_random_sym(g))
        p1, p2, k = g.uniform(-3, 3, (3, 4))
        lhs, rhs, res = schur.kicked_gap_check(Q, p1, p2, k)
        worst = max(worst, res / max(1.0, abs(lhs)))
    out.append(_check("schur.kicked_gap", worst, 1e-10))
    viol = 0
    for gam in (0.1, 1.0):
        eps = g.uniform(-1, 1, 20_000)
        delta = g.uniform(-10, 10, 20_000)
        rem = np.abs(schur.resolvent_remainder(eps, delta, gam))
        viol += int(np.sum(rem > schur.remainder_bound(eps, gam) * (1 + 1e-12)))
    out.append(_check("schur.resolvent_bound_violations", viol, 0))
    frame = build_frame(cfg)
    Q = qf.assemble(1.0, cfg.flow.r0, frame)
    params = schur.ResolventParams(cfg.increments.kappa, 1.0, cfg.amplitude.eta)
    st = schur.sigma_tensor(Q, frame, schur.AmplitudeModel(cfg.amplitude.w, cfg.amplitude.a), params,
                            n_samples=20_000, seed=cfg.mc.seed)
    out.append(_check("schur.sigma_psd", -st.min_eigenvalue(), 4 * float(st.mc_se.max())))
    c = np.array([0.0, 0.3, 0.7])
    rho0 = np.ones((3, 3))
    worst = 0.0
    for t in (0.1, 1.0, 3.0):
        rho = schur.evolve_monitoring(c, 2.0, t, rho0)
        ref = schur.monitoring_damping(2.0, t, c[:, None] - c[None, :])
        worst = max(worst, float(np.abs(rho - ref).max()))
    out.append(_check("schur.monitoring_semigroup", worst, 1e-12))
    return out


def check_kinetics(cfg, g):
    model = build_jump_model(cfg)
    out = [_check("kinetics.detailed_balance", kin.detailed_balance_residual(model), 1e-13),
           _check("kinetics.gibbs_stationarity", kin.stationarity_residual(model, kin.gibbs_state(model)), 1e-12)]
    if model.dim == 1:
        rep = kin.nonrel_limit_check(model)
        out.append(_check("kinetics.nonrel_deviation", rep["max_dev"], 2e-5))
        out.append(_check("kinetics.nonrel_slope", abs(rep["loglog_slope"] - 4.0), 0.1))
    return out


def check_robustness(cfg, g):
    out = []
    worst = 0.0
    for _ in range(50):
        A, B = g.uniform(0.5, 3, 2)
        c = g.uniform(0.1, 2)
        spec = rob.ScalarFlowSpec(A, -B, lambda r, c=c: 1 + c * r * r)
        rep = rob.reparam_fixed_points(spec, (-10, 10))
        worst = max(worst, rep["difference"])
        if not rep["same_stability"]:
            worst = np.inf
    out.append(_check("robustness.reparam_fixed_points", worst, 1e-10))
    model = rob.AnisoModel(gamma_perp=cfg.robustness.gamma_perp, coupling=cfg.robustness.coupling)
    d = model.aniso_basis[1]
    rep = rob.aniso_evolve(rob.AnisoState(cfg.flow.r0, 0.01 * d), model, cfg.robustness.lam_max)
    out.append(_check("robustness.aniso_slope", rep["decay_slope"], -cfg.robustness.gamma_perp / 2))
    return out


CHECKS = (check_quadform, check_increments, check_zenoflow, check_schur, check_kinetics, check_robustness)


def run_verify(cfg: ExperimentConfig) -> list[dict]:
    results = []
    for fn in CHECKS:
        results.extend(fn(cfg, stream(cfg.mc.seed, "verify." + fn.__name__)))
    return results
