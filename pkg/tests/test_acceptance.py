"""Acceptance criteria 1-10, one test each.

Every test prints a single PASS/FAIL line (collected again in the terminal
summary) and then asserts the verdict.  Run standalone with
``python3 -m pytest tests/test_acceptance.py -v``.
"""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from zenolab import increments as inc
from zenolab import kinetics as kin
from zenolab import quadform as qf
from zenolab import robustness as rob
from zenolab import schur
from zenolab import zenoflow as zf
from zenolab.config import ExperimentConfig
from zenolab.experiments import build_flow_model, build_frame, run_flow
from zenolab.increments import MomentSet
from zenolab.rng import stream

N_CASES = 10_000


def _sym(g, n):
    a = g.standard_normal((n, 4, 4))
    return 0.5 * (a + np.swapaxes(a, 1, 2))


def _quad(Q, p):
    return np.einsum("ni,nij,nj->n", p, Q, p)


def test_criterion_01_exact_identities(acceptance):
    g = stream(2024, "acceptance.identities")
    t0 = time.perf_counter()
    worst = {}

    Q = _sym(g, N_CASES)
    p, d = g.uniform(-5, 5, (2, N_CASES, 4))
    hi, lo = _quad(Q, p + d / 2), _quad(Q, p - d / 2)
    lhs = hi - lo
    rhs = np.array([inc.contrast(qf.QuadForm(Q[i]), p[i], d[i]) for i in range(N_CASES)])
    worst["contrast"] = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(lhs))))

    p1, p2, k = g.uniform(-3, 3, (3, N_CASES, 4))
    res = [schur.kicked_gap_check(qf.QuadForm(Q[i]), p1[i], p2[i], k[i]) for i in range(N_CASES)]
    worst["kicked_gap"] = max(r[2] / max(1.0, abs(r[0])) for r in res)

    e = h = c = 0.0
    for _ in range(N_CASES):
        kappa = g.uniform(0.1, 5)
        qn = g.uniform(0.1, 3) * g.choice([-1, 1])
        qt = g.uniform(-3, 3)
        mnn, mtt = g.uniform(0.05, 2, 2)
        M = MomentSet(mnn, mtt, g.uniform(-1, 1) * math.sqrt(mnn * mtt))
        G = zf.gamma(qn, qt, kappa, M)
        A, B = zf.sensitivities(qn, qt, kappa, M)
        # relative to the sum of absolute terms: Gamma itself may nearly cancel
        scale = 2 * kappa * (qn * qn * mnn + qt * qt * mtt + 2 * abs(qn * qt * M.M_nt))
        e = max(e, abs(G - 0.5 * (qn * A + qt * B)) / scale)
        a = g.uniform(0.01, 100)
        h = max(h, abs(zf.gamma(a * qn, a * qt, kappa, M) - a * a * G) / (a * a * scale))
        r = qt / qn
        lhs_c, rhs_c = A + r * B, 4 * kappa * qn * M.quadratic(r)
        c = max(c, abs(lhs_c - rhs_c) / (2 * scale / abs(qn)))
    worst["euler"], worst["homogeneity"], worst["A+rB"] = e, h, c

    # detailed balance on the library's rate tables for random lattice models
    n_edges, db = 0, 0.0
    while n_edges < N_CASES:
        model = kin.JumpModel(m=g.uniform(0.5, 2), alpha=g.uniform(0.5, 2), beta=g.uniform(0, 5),
                              h=g.uniform(0.01, 0.05), n_side=100)
        table = kin.db_rates(model)
        n_edges += len(table.rate)
        db = max(db, kin.detailed_balance_residual(model, table))
    worst["detailed_balance"] = db

    elapsed = time.perf_counter() - t0
    passed = all(v <= 1e-12 for v in worst.values()) and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    acceptance(1, "exact identities", passed, f"{detail} (tol 1e-12, {N_CASES} cases each, {elapsed:.1f} s < 10 s)")
    assert passed


def test_criterion_02_monte_carlo_oracle(acceptance):
    t0 = time.perf_counter()
    n = 1_000_000
    worst_m = worst_g = 0.0
    cases = 0
    for kappa in (0.5, 1.0, 4.0):
        for s in (0.5, 1.0, 2.0):
            for theta in (math.pi / 8, math.pi / 4, 3 * math.pi / 8):
                p = np.array([math.cos(theta), math.sin(theta), 0.0, 0.0])
                f = qf.make_frame(p)
                law = inc.IncrementLaw(s, kappa, qf.assemble(1.0, 0.5, f), f)
                a = inc.moments(law)
                m = inc.moments(law, "montecarlo", n, seed=cases)
                for key in ("nn", "tt", "nt"):
                    z = abs(getattr(a, "M_" + key) - getattr(m, "M_" + key)) / getattr(m, "se_" + key)
                    worst_m = max(worst_m, z)
                mean, se = inc.mc_gamma(law, kappa, n, seed=cases)
                worst_g = max(worst_g, abs(mean - zf.gamma(1.0, 0.5, kappa, a)) / se)
                cases += 1
    elapsed = time.perf_counter() - t0
    passed = worst_m <= 4 and worst_g <= 4 and elapsed < 60
    acceptance(2, "Monte Carlo oracle", passed,
               f"max |z| moments {worst_m:.2f}, Gamma {worst_g:.2f} (tol 4 s.e., {cases} grid points "
               f"x 1e6 samples, {elapsed:.1f} s < 60 s)")
    assert passed


def test_criterion_03_resolvent_remainder(acceptance):
    g = stream(2024, "acceptance.resolvent")
    n = 100_000
    eps = g.uniform(-1, 1, n)
    delta = g.uniform(-10, 10, n)
    gam = g.choice([0.1, 1.0], n)
    closed = np.abs(schur.resolvent_remainder(eps, delta, gam))
    direct = np.abs(schur.resolvent_weight(eps, delta, gam) - schur.resolvent_weight(0.0, delta, gam)
                    - eps * schur.resolvent_dweight(delta, gam))
    bound = 4 * eps**2 / gam**4
    v_closed = int(np.sum(closed > bound))
    v_direct = int(np.sum(direct > bound))
    passed = v_closed == 0 and v_direct == 0
    acceptance(3, "resolvent remainder bound", passed,
               f"violations {v_closed} (closed form), {v_direct} (direct difference) of {n}; "
               f"max ratio {float(np.max(closed / bound)):.3f}")
    assert passed


def test_criterion_04_calibration(acceptance):
    frame = qf.make_frame([1.0, 1.0, 0.0, 0.0])
    prov = zf.increment_provider(frame, 1.0, 1.0, "zeno")
    s0 = zf.FlowState.from_form(1.0, 1.0, 1.0, prov)
    states = zf.calibrated_trajectory(s0, 1e-3, 1000, 1.0, prov)
    drift = max(abs(zf.gamma(s.q_n, s.q_tan, 1.0, prov(s.q_n, s.q_tan)) - s0.Gamma) / s0.Gamma for s in states)

    # first-order calibration factor with moments held fixed
    M = MomentSet(0.8, 0.5, -0.1)
    qn, qt, kappa = 1.0, 0.6, 1.0
    G = zf.gamma(qn, qt, kappa, M)
    _, B = zf.sensitivities(qn, qt, kappa, M)
    sig = 0.05 * 2.0 ** -np.arange(7)
    resid = np.array([abs(zf.calibration_factor(G, zf.gamma(qn, qt - s, kappa, M)) - (1 + 0.5 * s * B / G))
                      for s in sig])
    c_fit = resid / sig**2
    order = np.log2(resid[:-1] / resid[1:])
    c_star = float(c_fit[-1])
    bounded = bool(np.all(resid <= 1.25 * c_star * sig**2))
    passed = drift <= 1e-10 and bounded and abs(order[-1] - 2) < 0.05
    acceptance(4, "calibration invariance", passed,
               f"Gamma drift {drift:.1e} over 1000 steps (tol 1e-10); alpha residual order "
               f"{order[-1]:.3f}, fitted c {c_star:.4f}, residual <= 1.25 c sigma^2 on all {len(sig)} halvings: {bounded}")
    assert passed


def test_criterion_05_signature_emergence(acceptance):
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    assert cfg.flow.r0 == 1.0 and cfg.increments.weighting == "zeno" and cfg.flow.rho_model == "constant"
    traj, summary = run_flow(cfg)
    frame = build_frame(cfg)
    r = traj.r
    rhs = np.array([rec.rhs for rec in traj.records])
    decreasing = bool(np.all(rhs < 0)) and bool(np.all(np.diff(r) < 0))
    lorentz = all(str(qf.signature(qf.assemble(rec.q_n, rec.q_tan, frame))) == "(1,3,0)"
                  for rec in traj.records if rec.r < 0)
    crossed = bool(r[-1] < 0)

    model = build_flow_model(cfg)
    report = zf.fixed_point(model, tuple(cfg.flow.bracket))
    root_ok = (not report.found) or (report.residual <= 1e-10 and report.agreement is not None)
    elapsed = time.perf_counter() - t0
    passed = decreasing and lorentz and crossed and root_ok and elapsed < 30
    fp = (f"root {report.root:.6f}, residual {report.residual:.1e}, r*^2/(M_nn/M_tt) {report.agreement:.4f}"
          if report.found else f"fixed point: {report.reason}")
    acceptance(5, "signature emergence", passed,
               f"r {r[0]:.3f} -> {r[-1]:.3f} over {len(r)} steps, strictly decreasing {decreasing}, "
               f"signature for r<0 is (1,3,0): {lorentz}; {fp}; {elapsed:.1f} s < 30 s")
    assert passed


def test_criterion_06_sigma_tensor(acceptance):
    frame = qf.make_frame([1.0, 1.0, 0.0, 0.0])
    Q = qf.assemble(1.0, 0.5, frame)
    model = schur.AmplitudeModel(w=0.5, a=1.0)
    n = 200_000
    psd = []
    for averaging in ("pointwise", "shell"):
        st_ = schur.sigma_tensor(Q, frame, model, schur.ResolventParams(1.0, 1.0, 0.1), averaging, n, seed=6)
        psd.append(st_.min_eigenvalue() >= -4 * float(st_.mc_se.max()))
        psd.append(st_.sigma_tan >= -4 * st_.se_sigma_tan)

    # prefactor law at fixed gamma: same kicks, so the comparison isolates eta^2/kappa
    base = schur.sigma_tensor(Q, frame, model, schur.ResolventParams(1.0, 1.0, 0.1), n_samples=n, seed=7)
    scale_err = 0.0
    for kappa, eta in ((1.0, 0.2), (1.0, 0.3), (2.0, 0.1), (4.0, 0.1)):
        other = schur.sigma_tensor(Q, frame, model, schur.ResolventParams(kappa, 1.0, eta), n_samples=n, seed=7)
        expected = base.sigma * (eta / 0.1) ** 2 / kappa
        se = base.mc_se * (eta / 0.1) ** 2 / kappa
        mask = se > 0
        scale_err = max(scale_err, float(np.max(np.abs(other.sigma - expected)[mask] / se[mask])))

    scaled = schur.AmplitudeModel(w=0.5, a=1.0, scale=lambda k: 2.0 + np.cos(k).sum())
    g = stream(6, "acceptance.rescale")
    invariant = all(np.array_equal(schur.log_intensity_tensor(model, k, p), schur.log_intensity_tensor(scaled, k, p))
                    for k, p in zip(g.standard_normal((100, 4)), g.standard_normal((100, 4))))

    e0 = np.array([1.0, 0.0, 0.0, 0.0])
    one = schur.sigma_tensor(qf.QuadForm.identity(), qf.make_frame(e0), model.__class__(a=1.0),
                             schur.ResolventParams(1.0, 1.0, 1.0), kicks=[[0.1, 0, 0, 0]])
    hand = float(np.max(np.abs(one.sigma - 2 * np.outer(e0, e0) / 1.0441)))

    passed = all(psd) and scale_err <= 2 and invariant and hand <= 1e-12
    acceptance(6, "Sigma tensor", passed,
               f"PSD within 4 s.e. {all(psd)}; eta^2, 1/kappa scaling max dev {scale_err:.1e} s.e. (tol 2); "
               f"T rescaling invariant {invariant}; single-sample hand check error {hand:.1e} (tol 1e-12)")
    assert passed


def test_criterion_07_kinetics(acceptance):
    t0 = time.perf_counter()
    model = kin.JumpModel()
    fb = kin.gibbs_state(model)
    stat = kin.stationarity_residual(model, fb)
    t_stat = time.perf_counter() - t0
    f0 = np.zeros(model.n_sites)
    f0[model.n_sites // 2] = 1.0
    res = kin.evolve(model, f0, 1e7, l1_target=1e-6)
    mono = res.free_energy_monotone()
    nr = kin.nonrel_limit_check(model)
    passed = (model.n_sites == 401 and stat <= 1e-12 and t_stat < 5 and res.l1[-1] <= 1e-6 and mono
              and nr["max_dev"] <= 2e-5 and abs(nr["loglog_slope"] - 4.0) <= 0.1)
    acceptance(7, "kinetics", passed,
               f"stationarity {stat:.1e} on {model.n_sites} sites in {t_stat:.2f} s; L1 {res.l1[-1]:.1e} at "
               f"t={res.times[-1]:.3g}; free energy monotone over {len(res.times)} logs {mono}; "
               f"nonrel dev {nr['max_dev']:.3e} (tol 2e-5), slope {nr['loglog_slope']:.3f}")
    assert passed


def test_criterion_08_isometry(acceptance):
    r_star = -0.7
    frame = qf.make_frame([1.0, 0.0, 0.0, 0.0])
    Q, sig = zf.fixed_point_form(r_star, frame)
    g = stream(8, "acceptance.isometry")
    worst = 0.0
    for _ in range(200):
        lam = qf.scaled_boost(g.uniform(-2, 2), -r_star, int(g.integers(1, 4)))
        rot = qf.tangential_rotation(frame, g.uniform(-np.pi, np.pi, 3))
        for T in (lam, rot, rot @ lam):
            worst = max(worst, qf.isometry_residual(Q, T))
    passed = worst <= 1e-10 and str(sig) == "(1,3,0)"
    acceptance(8, "isometry", passed, f"max residual {worst:.1e} over 600 boosts/rotations of Q* {sig} (tol 1e-10)")
    assert passed


def test_criterion_09_robustness(acceptance):
    g = stream(9, "acceptance.robustness")
    diff, same = 0.0, True
    for _ in range(500):
        A, B = g.uniform(0.2, 3, 2) * g.choice([-1, 1], 2)
        c1, c2 = g.uniform(0.1, 2, 2)
        spec = rob.ScalarFlowSpec(A, B, lambda r, c1=c1, c2=c2: c1 + c2 * r * r)
        rep = rob.reparam_fixed_points(spec, (-20, 20))
        diff = max(diff, rep["difference"])
        same &= rep["same_stability"]

    cfg = ExperimentConfig()
    rb = cfg.robustness
    model = rob.AnisoModel(gamma_perp=rb.gamma_perp, coupling=rb.coupling, chi=rb.chi)
    d = model.aniso_basis[0] + 0.5 * model.aniso_basis[3]
    d /= np.linalg.norm(d)
    outs = [rob.aniso_evolve(rob.AnisoState(cfg.flow.r0, e * d), model, rb.lam_max) for e in (0.01, 0.02, 0.04)]
    slope = max(o["decay_slope"] for o in outs)
    ratios = [outs[i + 1]["endpoint_shift"] / outs[i]["endpoint_shift"] for i in range(2)]
    linear = all(abs(x - 2) <= 0.2 for x in ratios)
    passed = diff <= 1e-10 and same and slope <= -rb.gamma_perp / 2 and linear
    acceptance(9, "robustness", passed,
               f"reparametrized fixed points differ by {diff:.1e} (tol 1e-10), stability signs agree {same}; "
               f"aniso slope {slope:.4f} <= {-rb.gamma_perp / 2}; shift ratios on doubling "
               f"{ratios[0]:.4f}, {ratios[1]:.4f} (2 within 10%)")
    assert passed


def _cli(tmp, name, *args):
    out = tmp / name
    proc = subprocess.run([sys.executable, "-m", "zenolab.cli", *args, "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_10_determinism(tmp_path, acceptance):
    identical = {}
    for command in ("verify", "flow"):
        base = ["--seed", "777", "--samples", "200000"]
        a = _cli(tmp_path, command + "_a", command, *base, "--workers", "1")
        b = _cli(tmp_path, command + "_b", command, *base, "--workers", "1")
        c = _cli(tmp_path, command + "_c", command, *base, "--workers", "4")
        identical[command] = a == b == c
    passed = all(identical.values())
    acceptance(10, "determinism", passed,
               f"bit-identical outputs across two runs and workers 1 vs 4: "
               + ", ".join(f"{k} {v}" for k, v in identical.items()))
    assert passed


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
