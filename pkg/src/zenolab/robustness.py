"""Structural stability of the reduced ratio flow.

Two checks: positive time reparametrizations ``dr/dl = alpha(r) F(r)`` keep
fixed points and their stability type, and weakly anisotropic perturbations
``Q = Q_iso(r) + dQ`` decay when the transverse linearization is contractive.
The transverse operator is a model, ``-gamma_perp * I`` plus a bounded
coupling; nothing here derives it from the kinetic kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .quadform import LocalFrame, make_frame

SWEEP_COLUMNS = ("epsilon_aniso", "gamma_perp", "decay_slope", "endpoint_shift")

__all__ = [
    "ScalarFlowSpec",
    "AnisoState",
    "AnisoModel",
    "reparam_fixed_points",
    "fixed_point_path",
    "anisotropic_basis",
    "project_anisotropic",
    "aniso_evolve",
    "write_sweep_csv",
    "SWEEP_COLUMNS",
]


@dataclass(frozen=True)
class ScalarFlowSpec:
    A: float
    B: float
    alpha: Callable[[float], float] = lambda r: 1.0

    def F(self, r):
        return self.A + self.B * r

    def rescaled(self, r):
        return self.alpha(r) * self.F(r)


def _root(fun, lo, hi):
    return brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _slope(fun, r, h=1e-6):
    return (fun(r + h) - fun(r - h)) / (2 * h)


def reparam_fixed_points(spec: ScalarFlowSpec, bracket) -> dict:
    """Fixed points and linearization signs of ``F`` and ``alpha * F`` in ``bracket``."""
    if spec.B == 0:
        return {"finite_fixed_point": False, "reason": "B = 0: no finite fixed point"}
    lo, hi = bracket
    if spec.F(lo) * spec.F(hi) > 0:
        return {"finite_fixed_point": False, "reason": "bracket does not contain -A/B"}
    r_plain = _root(spec.F, lo, hi)
    r_scaled = _root(spec.rescaled, lo, hi)
    s_plain = _slope(spec.F, r_plain)
    s_scaled = _slope(spec.rescaled, r_scaled)
    return {
        "finite_fixed_point": True,
        "r_plain": r_plain,
        "r_rescaled": r_scaled,
        "r_exact": -spec.A / spec.B,
        "difference": abs(r_plain - r_scaled),
        "slope_plain": s_plain,
        "slope_rescaled": s_scaled,
        "same_stability": bool(np.sign(s_plain) == np.sign(s_scaled)),
        "alpha_at_root": spec.alpha(r_plain),
    }


def fixed_point_path(A: Callable[[float], float], B: Callable[[float], float], c_grid) -> dict:
    """``r*(c) = -A(c)/B(c)`` on a grid of calibration parameters.

    Reports the largest jump between neighbours and the smallest ``|B|``;
    continuity shows as jumps shrinking with the grid spacing.
    """
    c = np.asarray(c_grid, dtype=float)
    a = np.array([A(x) for x in c])
    b = np.array([B(x) for x in c])
    if np.any(b == 0):
        raise ValueError("B vanishes on the grid")
    r = -a / b
    return {"c": c.tolist(), "r_star": r.tolist(), "max_jump": float(np.max(np.abs(np.diff(r)))),
            "min_abs_B": float(np.min(np.abs(b)))}


# -- weak anisotropy --------------------------------------------------------

def _frob(a, b):
    return float(np.sum(a * b))


def anisotropic_basis(frame: LocalFrame) -> np.ndarray:
    """Orthonormal (Frobenius) basis of symmetric 4x4 matrices orthogonal to Pi_n, Pi_tan.

    Eight elements: the isotropic family spans two of the ten symmetric
    directions.
    """
    sym = []
    for i in range(4):
        for j in range(i, 4):
            e = np.zeros((4, 4))
            e[i, j] = e[j, i] = 1.0
            sym.append(e)
    iso = [frame.pi_n / np.linalg.norm(frame.pi_n), frame.pi_tan / np.linalg.norm(frame.pi_tan)]
    basis = []
    for e in sym:
        v = e.copy()
        for b in iso + basis:
            v -= _frob(v, b) * b
        nv = np.linalg.norm(v)
        if nv > 1e-10:
            basis.append(v / nv)
    return np.array(basis)


def project_anisotropic(dq, frame: LocalFrame) -> np.ndarray:
    dq = np.asarray(dq, dtype=float)
    dq = 0.5 * (dq + dq.T)
    for p in (frame.pi_n, frame.pi_tan):
        dq = dq - _frob(dq, p) / _frob(p, p) * p
    return dq


@dataclass(frozen=True)
class AnisoState:
    r: float
    dQ: np.ndarray

    @property
    def eps_aniso(self) -> float:
        return float(np.linalg.norm(self.dQ))


@dataclass
class AnisoModel:
    """Transverse dynamics ``d dQ/dl = -gamma_perp dQ + coupling [Omega, dQ]``.

    ``Omega`` generates rotations inside the tangential block, so the coupling
    is norm-preserving and the anisotropic sector stays invariant.  The ratio
    obeys ``dr/dl = F(r) + chi <G, dQ>`` with ``G`` a fixed unit anisotropic
    direction.
    """

    gamma_perp: float = 1.0
    coupling: float = 0.0
    chi: float = 0.5
    F: Callable[[float], float] = lambda r: -(2.0 + 2.0 * r) / 2.0
    frame: LocalFrame = field(default_factory=lambda: make_frame([1.0, 1.0, 0.0, 0.0]))
    omega_angles: tuple = (0.3, -0.2, 0.5)

    def __post_init__(self):
        if not self.gamma_perp > 0:
            raise ValueError("gamma_perp must be positive")
        from scipy.linalg import null_space

        basis = null_space(self.frame.u[None, :])
        a, b, c = self.omega_angles
        gen3 = np.array([[0.0, -a, b], [a, 0.0, -c], [-b, c, 0.0]])
        self.omega = basis @ gen3 @ basis.T
        self.aniso_basis = anisotropic_basis(self.frame)
        self.G = self.aniso_basis[0]

    def rhs(self, lam, y):
        r = y[0]
        dq = y[1:].reshape(4, 4)
        d_dq = -self.gamma_perp * dq + self.coupling * (self.omega @ dq - dq @ self.omega)
        dr = self.F(r) + self.chi * _frob(self.G, dq)
        return np.concatenate([[dr], d_dq.ravel()])


def aniso_evolve(state: AnisoState, model: AnisoModel, lam_max: float, n_out: int = 201,
                 rtol: float = 1e-11, atol: float = 1e-14) -> dict:
    """Evolve ``(r, dQ)`` and compare against the isotropic run from the same ``r``.

    Returns the fitted slope of ``log |dQ|``, the norm history and the shift of
    the final ``r`` relative to the isotropic trajectory.
    """
    dq0 = project_anisotropic(state.dQ, model.frame)
    eps = float(np.linalg.norm(dq0))
    lam = np.linspace(0.0, lam_max, n_out)
    y0 = np.concatenate([[state.r], dq0.ravel()])
    sol = solve_ivp(model.rhs, (0.0, lam_max), y0, method="DOP853", t_eval=lam, rtol=rtol, atol=atol)
    iso = solve_ivp(lambda t, y: [model.F(y[0])], (0.0, lam_max), [state.r], method="DOP853",
                    t_eval=lam, rtol=rtol, atol=atol)
    norms = np.linalg.norm(sol.y[1:].T.reshape(-1, 4, 4), axis=(1, 2))
    if eps > 0:
        ok = norms > 1e-300
        slope = float(np.polyfit(lam[ok], np.log(norms[ok]), 1)[0])
        decreasing = bool(np.all(np.diff(norms) < 0))
    else:
        slope, decreasing = float("nan"), True
    return {
        "eps_aniso": eps,
        "gamma_perp": model.gamma_perp,
        "lambda": lam,
        "norm": norms,
        "r": sol.y[0],
        "r_iso": iso.y[0],
        "decay_slope": slope,
        "strictly_decreasing": decreasing,
        "endpoint_shift": float(sol.y[0, -1] - iso.y[0, -1]),
        "max_r_deviation": float(np.max(np.abs(sol.y[0] - iso.y[0]))),
    }


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([repr(float(row[k])) for k in SWEEP_COLUMNS])
