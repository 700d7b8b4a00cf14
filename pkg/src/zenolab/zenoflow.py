"""Calibrated projective flow of the quadratic form ``q_n Pi_n + q_tan Pi_tan``.

The damping scale is quadratic in the coefficients,

    Gamma = 2 kappa (q_n^2 M_nn + q_tan^2 M_tt + 2 q_n q_tan M_nt),

with sensitivities ``A = dGamma/dq_n`` and ``B = dGamma/dq_tan`` taken at fixed
moments.  A raw tangential shift ``q_tan -> q_tan - sigma_tan`` is followed by a
positive rescaling that restores Gamma; only the ratio ``r = q_tan / q_n``
carries information, and in the continuum

    dr/dlambda = -rho_tan(r) (A + r B) / (2 Gamma).

Moments come from a *provider*: a callable ``(q_n, q_tan) -> MomentSet``.
Zeno-weighted providers depend on the current form, so calibration and the
flow coefficients are solved self-consistently.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import RK45
from scipy.optimize import brentq

from .increments import IncrementLaw, MomentSet, moments
from .quadform import LocalFrame, QuadForm, Signature, assemble, signature

MomentProvider = Callable[[float, float], MomentSet]

TRAJECTORY_COLUMNS = ("lambda", "r", "q_n", "q_tan", "Gamma", "A", "B")

__all__ = [
    "FlowError",
    "FlowState",
    "FlowRecord",
    "FlowTrajectory",
    "Coefficients",
    "FlowModel",
    "FixedPointReport",
    "ConstantRate",
    "SchurRate",
    "gamma",
    "sensitivities",
    "calibration_factor",
    "discrete_step",
    "calibrated_trajectory",
    "flow_rhs",
    "integrate_flow",
    "fixed_point",
    "stability",
    "fixed_point_form",
    "increment_provider",
    "frozen_provider",
    "write_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]


class FlowError(RuntimeError):
    """Numerical failure of the flow (Gamma collapse, calibration impossible)."""


# -- scalar relations -------------------------------------------------------

def gamma(q_n: float, q_tan: float, kappa: float, M: MomentSet) -> float:
    return 2.0 * kappa * (q_n * q_n * M.M_nn + q_tan * q_tan * M.M_tt + 2.0 * q_n * q_tan * M.M_nt)


def sensitivities(q_n: float, q_tan: float, kappa: float, M: MomentSet) -> tuple[float, float]:
    A = 4.0 * kappa * (q_n * M.M_nn + q_tan * M.M_nt)
    B = 4.0 * kappa * (q_tan * M.M_tt + q_n * M.M_nt)
    return A, B


def calibration_factor(gamma_target: float, gamma_raw: float) -> float:
    """Rescaling ``sqrt(gamma_target / gamma_raw)`` restoring a quadratic scale."""
    if not gamma_target > 0 or not gamma_raw > 0:
        raise ValueError("calibration needs positive damping scales")
    return math.sqrt(gamma_target / gamma_raw)


# -- moment providers -------------------------------------------------------

def increment_provider(frame: LocalFrame, s: float, kappa: float, weighting: str = "zeno") -> MomentProvider:
    """Analytic moments of the increment law at the current form.

    ``weighting="zeno"`` conditions on the monitoring contrast of the current
    ``Q``; ``"bare"`` uses the unconditioned base law, independent of ``Q``.
    """
    if weighting not in ("zeno", "bare"):
        raise ValueError(f"unknown weighting {weighting!r}")
    k_w = kappa if weighting == "zeno" else 0.0

    def provider(q_n: float, q_tan: float) -> MomentSet:
        law = IncrementLaw(s=s, kappa=k_w, Q=assemble(q_n, q_tan, frame), frame=frame)
        return moments(law, "analytic")

    provider.form_dependent = weighting == "zeno"
    return provider


def frozen_provider(M: MomentSet) -> MomentProvider:
    def provider(q_n: float, q_tan: float) -> MomentSet:
        return M

    provider.form_dependent = False
    return provider


# -- discrete calibrated update ---------------------------------------------

@dataclass(frozen=True)
class FlowState:
    q_n: float
    q_tan: float
    Gamma: float
    lam: float = 0.0

    def __post_init__(self):
        if self.q_n == 0:
            raise ValueError("q_n must be nonzero")
        if not self.Gamma > 0:
            raise ValueError("Gamma must be positive")

    @property
    def r(self) -> float:
        return self.q_tan / self.q_n

    @classmethod
    def from_form(cls, q_n: float, q_tan: float, kappa: float, provider: MomentProvider, lam: float = 0.0):
        g = gamma(q_n, q_tan, kappa, provider(q_n, q_tan))
        if not g > 0:
            raise FlowError(f"Gamma={g} is not positive at (q_n, q_tan)=({q_n}, {q_tan})")
        return cls(q_n, q_tan, g, lam)


def _gamma_at(q_n, q_tan, kappa, provider):
    return gamma(q_n, q_tan, kappa, provider(q_n, q_tan))


def _solve_scale(q_n, q_tan, kappa, provider, target, guess=1.0):
    """Positive ``alpha`` with ``Gamma(alpha q) = target``, moments refreshed at ``alpha q``."""
    def f(log_a):
        a = math.exp(log_a)
        g = _gamma_at(a * q_n, a * q_tan, kappa, provider)
        if not g > 0:
            raise FlowError("Gamma collapsed during calibration")
        return math.log(g / target)

    x0 = math.log(guess)
    f0 = f(x0)
    if f0 == 0.0:
        return guess
    step = -0.5 if f0 > 0 else 0.5
    x1 = x0
    for _ in range(200):
        x1 += step
        f1 = f(x1)
        if np.sign(f1) != np.sign(f0):
            break
        step *= 1.6
    else:
        raise FlowError("calibration bracket exhausted: target Gamma unattainable")
    lo, hi = sorted((x0, x1))
    root = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(root)


def discrete_step(state: FlowState, sigma_tan: float, kappa: float, provider: MomentProvider,
                  dlam: float = 1.0) -> FlowState:
    """Raw tangential shift followed by calibration back to ``state.Gamma``.

    The first-pass factor is the quadratic ``sqrt(Gamma / Gamma_raw)``; for a
    form-dependent provider it is refined so that Gamma, recomputed with
    refreshed moments, matches the old value.
    """
    if sigma_tan < 0:
        raise ValueError("sigma_tan must be nonnegative")
    q_n_raw = state.q_n
    q_tan_raw = state.q_tan - sigma_tan
    g_raw = _gamma_at(q_n_raw, q_tan_raw, kappa, provider)
    if not g_raw > 0:
        raise FlowError(f"raw Gamma={g_raw} not positive; calibration undefined")
    alpha = calibration_factor(state.Gamma, g_raw)
    g_new = _gamma_at(alpha * q_n_raw, alpha * q_tan_raw, kappa, provider)
    if abs(g_new - state.Gamma) > 1e-14 * state.Gamma:
        alpha = _solve_scale(q_n_raw, q_tan_raw, kappa, provider, state.Gamma, guess=alpha)
    return FlowState(alpha * q_n_raw, alpha * q_tan_raw, state.Gamma, state.lam + dlam)


def calibrated_trajectory(state: FlowState, sigma_tan: float, n_steps: int, kappa: float,
                          provider: MomentProvider) -> list[FlowState]:
    out = [state]
    for _ in range(n_steps):
        out.append(discrete_step(out[-1], sigma_tan, kappa, provider))
    return out


# -- rate models ------------------------------------------------------------

@dataclass(frozen=True)
class ConstantRate:
    value: float = 1.0

    def __call__(self, r: float, coeffs: "Coefficients") -> float:
        return self.value


@dataclass(frozen=True)
class SchurRate:
    """``rho_tan = sigma_tan / dlam`` from the Sigma tensor at the current form.

    Uses a fixed seed for every evaluation (common random numbers) so the rate
    is a smooth deterministic function of the form.
    """

    frame: LocalFrame
    model: object  # schur.AmplitudeModel
    eta: float
    kappa: float
    gamma_reg: float
    dlam: float = 1.0
    n_samples: int = 4096
    seed: int = 0

    def __call__(self, r: float, coeffs: "Coefficients") -> float:
        from .schur import ResolventParams, sigma_tensor

        Q = assemble(coeffs.q_n, coeffs.q_tan, self.frame)
        params = ResolventParams(self.kappa, self.gamma_reg, self.eta)
        st = sigma_tensor(Q, self.frame, self.model, params, n_samples=self.n_samples, seed=self.seed)
        return st.sigma_tan / self.dlam


# -- continuum flow ---------------------------------------------------------

@dataclass(frozen=True)
class Coefficients:
    r: float
    q_n: float
    q_tan: float
    M: MomentSet
    Gamma: float
    A: float
    B: float


@dataclass
class FlowModel:
    """Everything the continuum flow needs at a given ratio ``r``.

    ``representative="calibrated"`` picks ``q_n > 0`` so that Gamma (with
    moments at that form) equals ``gamma_target``; ``"unit"`` uses
    ``q_n = 1``.  ``gamma_target`` is the calibrated clock constant in the
    flow denominator either way.
    """

    kappa: float
    provider: MomentProvider
    gamma_target: float
    rho: Callable = field(default_factory=ConstantRate)
    representative: str = "calibrated"

    @classmethod
    def from_form(cls, q_n: float, q_tan: float, kappa: float, provider: MomentProvider, **kw):
        g = _gamma_at(q_n, q_tan, kappa, provider)
        if not g > 0:
            raise FlowError("initial Gamma not positive")
        return cls(kappa=kappa, provider=provider, gamma_target=g, **kw)

    def coefficients(self, r: float) -> Coefficients:
        if self.representative == "unit":
            q_n = 1.0
        elif self.representative == "calibrated":
            g1 = _gamma_at(1.0, r, self.kappa, self.provider)
            if not g1 > 0:
                raise FlowError(f"Gamma={g1} not positive at r={r}")
            q_n = calibration_factor(self.gamma_target, g1)
            if getattr(self.provider, "form_dependent", True):
                g = _gamma_at(q_n, r * q_n, self.kappa, self.provider)
                if abs(g - self.gamma_target) > 1e-14 * self.gamma_target:
                    q_n = _solve_scale(1.0, r, self.kappa, self.provider, self.gamma_target, guess=q_n)
        else:
            raise ValueError(f"unknown representative {self.representative!r}")
        q_tan = r * q_n
        M = self.provider(q_n, q_tan)
        A, B = sensitivities(q_n, q_tan, self.kappa, M)
        return Coefficients(r, q_n, q_tan, M, gamma(q_n, q_tan, self.kappa, M), A, B)

    def rate(self, r: float, coeffs: Coefficients | None = None) -> float:
        return self.rho(r, coeffs if coeffs is not None else self.coefficients(r))


def flow_rhs(model: FlowModel, r: float) -> float:
    c = model.coefficients(r)
    if not model.gamma_target > 0:
        raise FlowError("Gamma is not positive")
    return -model.rate(r, c) * (c.A + r * c.B) / (2.0 * model.gamma_target)


@dataclass(frozen=True)
class FlowRecord:
    lam: float
    r: float
    q_n: float
    q_tan: float
    Gamma: float
    A: float
    B: float
    rhs: float

    def row(self):
        return (self.lam, self.r, self.q_n, self.q_tan, self.Gamma, self.A, self.B)


@dataclass
class FlowTrajectory:
    records: list[FlowRecord]
    termination: str
    message: str = ""

    @property
    def lam(self):
        return np.array([x.lam for x in self.records])

    @property
    def r(self):
        return np.array([x.r for x in self.records])

    @property
    def Gamma(self):
        return np.array([x.Gamma for x in self.records])

    @property
    def final(self) -> FlowRecord:
        return self.records[-1]

    def gamma_drift(self) -> float:
        g = self.Gamma
        return float(np.max(np.abs(g - g[0])) / abs(g[0]))


def _record(model: FlowModel, lam: float, r: float) -> FlowRecord:
    c = model.coefficients(r)
    rhs = -model.rate(r, c) * (c.A + r * c.B) / (2.0 * model.gamma_target)
    return FlowRecord(lam, r, c.q_n, c.q_tan, c.Gamma, c.A, c.B, rhs)


def integrate_flow(model: FlowModel, r0: float, lam_max: float, *, rtol: float = 1e-8,
                   atol: float = 1e-12, tol_rhs: float = 1e-10, max_step: float = np.inf,
                   max_steps: int = 100_000) -> FlowTrajectory:
    """Adaptive Runge-Kutta (Dormand-Prince 5(4)) integration of the ratio flow.

    Every accepted step is recorded.  Gamma collapse and calibration failure
    end the run with a termination reason instead of raising.
    """
    if not np.isfinite(r0):
        raise ValueError("r0 must be finite")
    try:
        records = [_record(model, 0.0, r0)]
    except FlowError as exc:
        return FlowTrajectory([], "gamma_collapse", str(exc))

    def fun(t, y):
        return [flow_rhs(model, float(y[0]))]

    solver = RK45(fun, 0.0, [r0], lam_max, rtol=rtol, atol=atol, max_step=max_step)
    termination, message = "lambda_max", ""
    for _ in range(max_steps):
        if abs(records[-1].rhs) < tol_rhs:
            termination = "converged"
            break
        if solver.status != "running":
            break
        try:
            msg = solver.step()
        except FlowError as exc:
            termination, message = _failure_reason(exc), str(exc)
            break
        if solver.status == "failed":
            termination, message = "step_failed", str(msg)
            break
        try:
            records.append(_record(model, float(solver.t), float(solver.y[0])))
        except FlowError as exc:
            termination, message = _failure_reason(exc), str(exc)
            break
    else:
        termination = "max_steps"
    return FlowTrajectory(records, termination, message)


def _failure_reason(exc: FlowError) -> str:
    return "bracket_exhausted" if "bracket" in str(exc) else "gamma_collapse"


def write_trajectory_csv(traj: FlowTrajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for rec in traj.records:
            w.writerow([repr(float(v)) for v in rec.row()])


# -- fixed point ------------------------------------------------------------

@dataclass(frozen=True)
class FixedPointReport:
    found: bool
    root: float | None = None
    residual: float | None = None
    reason: str = ""
    bracket: tuple[float, float] = (0.0, 0.0)
    r_star_sq: float | None = None
    moment_ratio: float | None = None
    agreement: float | None = None

    def as_dict(self) -> dict:
        return {
            "found": self.found,
            "root": self.root,
            "residual": self.residual,
            "reason": self.reason,
            "bracket": list(self.bracket),
            "r_star_sq": self.r_star_sq,
            "moment_ratio": self.moment_ratio,
            "agreement": self.agreement,
        }


def fixed_point(model: FlowModel, bracket=(-10.0, -1e-3), n_scan: int = 64) -> FixedPointReport:
    """Locate a zero of ``A(r) + r B(r)`` inside ``bracket``.

    The bracket is scanned on a uniform grid and the first sign change is
    refined with Brent's method.  Absence of a root is reported, not raised.
    Alongside the root the self-consistency ratio ``r*^2 / (M_nn / M_tt)`` is
    emitted.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise ValueError("bracket must satisfy r_lo < r_hi")

    def g(r):
        c = model.coefficients(r)
        return c.A + r * c.B

    grid = np.linspace(lo, hi, n_scan + 1)
    vals = []
    for x in grid:
        try:
            vals.append(g(x))
        except FlowError:
            vals.append(np.nan)
    vals = np.asarray(vals)
    for i in range(n_scan):
        a, b = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b) and (a == 0 or np.sign(a) != np.sign(b)):
            if a == 0:
                root = grid[i]
            else:
                root = brentq(g, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            c = model.coefficients(root)
            resid = abs(c.A + root * c.B) / (abs(c.A) + abs(root) * abs(c.B))
            ratio = c.M.M_nn / c.M.M_tt if c.M.M_tt != 0 else math.inf
            return FixedPointReport(True, float(root), float(resid), "root", (lo, hi), root * root,
                                    ratio, (root * root) / ratio if ratio not in (0, math.inf) else None)
    reason = "none_in_bracket"
    if np.any(~np.isfinite(vals)):
        reason += " (Gamma not positive on part of the bracket)"
    return FixedPointReport(False, reason=reason, bracket=(lo, hi))


def stability(model: FlowModel, r_star: float) -> float:
    """Linearized rate ``-rho(r*) B(r*) / (2 Gamma)``; negative means attractive."""
    c = model.coefficients(r_star)
    return -model.rate(r_star, c) * c.B / (2.0 * model.gamma_target)


def fixed_point_form(r_star: float, frame: LocalFrame, tol: float = 1e-10) -> tuple[QuadForm, Signature]:
    if not np.isfinite(r_star):
        raise ValueError("r_star must be finite")
    Q = assemble(1.0, r_star, frame)
    return Q, signature(Q, tol)
