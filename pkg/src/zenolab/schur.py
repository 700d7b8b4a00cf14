"""Second-order (Schur complement) correction in the Zeno band.

The superoperator blocks never get stored: after restriction to momentum
coherences they act as multiplicative kernels, so everything here is a
function of a few momenta and one kick vector.

Amplitude model: Gaussian kick profile times Gaussian momentum intensity,

    |M_D(p)|^2 = (2 pi w^2)^-2 exp(-|D|^2 / (2 w^2)) exp(-a |p|^2),

optionally multiplied by a momentum-independent ``scale(D)^2``.  Its
log-intensity gradient is ``-2 a p``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm, null_space
from scipy.spatial.transform import Rotation

from . import rng
from .quadform import LocalFrame, QuadForm, evaluate, normal_vector

__all__ = [
    "AmplitudeModel",
    "ResolventParams",
    "SigmaTensor",
    "gap",
    "kicked_gap_check",
    "kicked_increment",
    "resolvent_weight",
    "resolvent_dweight",
    "resolvent_remainder",
    "remainder_bound",
    "resolvent_multiplier",
    "monitoring_damping",
    "monitoring_superoperator",
    "contrast_tensor",
    "log_intensity_tensor",
    "log_intensity_tensor_fd",
    "sigma_tensor",
    "default_gamma",
    "identification_report",
]


@dataclass(frozen=True)
class AmplitudeModel:
    w: float = 0.5
    a: float = 1.0
    scale: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("kick spread w must be positive")
        if not self.a >= 0:
            raise ValueError("intensity decay a must be nonnegative")

    def intensity(self, kick, p) -> float:
        kick = np.asarray(kick, dtype=float)
        p = np.asarray(p, dtype=float)
        val = (2.0 * np.pi * self.w**2) ** -2 * np.exp(-(kick @ kick) / (2.0 * self.w**2) - self.a * (p @ p))
        if self.scale is not None:
            val *= self.scale(kick) ** 2
        return float(val)

    def amplitude(self, kick, p) -> float:
        return float(np.sqrt(self.intensity(kick, p)))

    def grad_log_intensity(self, kick, p) -> np.ndarray:
        return -2.0 * self.a * np.asarray(p, dtype=float)

    def sample_kicks(self, g: np.random.Generator, n: int) -> np.ndarray:
        return self.w * g.standard_normal((n, 4))


@dataclass(frozen=True)
class ResolventParams:
    kappa: float
    gamma: float
    eta: float = 0.1

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class SigmaTensor:
    sigma: np.ndarray
    sigma_tan: float
    normal_fraction: float
    mc_se: np.ndarray
    se_sigma_tan: float
    n_samples: int
    averaging: str
    resolvent: str
    tolerance_met: bool = True

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.sigma)[0])

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "sigma_tan": self.sigma_tan,
            "normal_fraction": self.normal_fraction,
            "mc_se": self.mc_se.tolist(),
            "se_sigma_tan": self.se_sigma_tan,
            "n_samples": self.n_samples,
            "averaging": self.averaging,
            "resolvent": self.resolvent,
            "tolerance_met": self.tolerance_met,
        }


# -- gaps and the kicked-gap identity ---------------------------------------

def gap(Q: QuadForm, p1, p2) -> float:
    return evaluate(Q, p1) - evaluate(Q, p2)


def kicked_increment(Q: QuadForm, p, kick) -> float:
    """``C_Q(p + D) - C_Q(p) = 2 D^T Q p + D^T Q D``."""
    kick = np.asarray(kick, dtype=float)
    return float(2.0 * kick @ Q.entries @ np.asarray(p, dtype=float) + kick @ Q.entries @ kick)


def kicked_gap_check(Q: QuadForm, p1, p2, kick) -> tuple[float, float, float]:
    p1, p2, kick = (np.asarray(x, dtype=float) for x in (p1, p2, kick))
    lhs = gap(Q, p1 + kick, p2 + kick)
    rhs = gap(Q, p1, p2) + 2.0 * float(kick @ Q.entries @ (p1 - p2))
    return lhs, rhs, abs(lhs - rhs)


# -- resolvent factor -------------------------------------------------------

def resolvent_weight(eps, delta, gamma):
    """``F(eps; delta) = 1 / ((eps + delta)^2 + gamma^2)`` (vectorized)."""
    return 1.0 / ((eps + delta) ** 2 + gamma**2)


def resolvent_dweight(delta, gamma):
    """``dF/deps`` at ``eps = 0``."""
    return -2.0 * delta / (delta**2 + gamma**2) ** 2


def resolvent_remainder(eps, delta, gamma):
    """Taylor remainder, written in a cancellation-free closed form.

    ``F(eps) - F(0) - eps F'(0) = eps^2 (3 delta^2 + 2 eps delta - gamma^2) / (D0^2 D1)``
    with ``D0 = delta^2 + gamma^2`` and ``D1 = (eps + delta)^2 + gamma^2``.
    """
    d0 = delta**2 + gamma**2
    d1 = (eps + delta) ** 2 + gamma**2
    return eps**2 * (3.0 * delta**2 + 2.0 * eps * delta - gamma**2) / (d0**2 * d1)


def remainder_bound(eps, gamma, C: float = 8.0):
    return C * eps**2 / (2.0 * gamma**4)


def resolvent_multiplier(kappa: float, gap_value, gamma: float):
    """Regularized monitoring resolvent on a coherence: ``1 / (gamma + kappa/2 gap^2)``."""
    return 1.0 / (gamma + 0.5 * kappa * np.asarray(gap_value) ** 2)


def monitoring_damping(kappa: float, t: float, gap_value):
    return np.exp(-0.5 * kappa * t * np.asarray(gap_value) ** 2)


def monitoring_superoperator(c_values, kappa: float) -> np.ndarray:
    """Row-major vectorization of ``rho -> -kappa/2 [C, [C, rho]]`` for diagonal ``C``."""
    C = np.diag(np.asarray(c_values, dtype=float))
    eye = np.eye(len(c_values))
    comm = np.kron(C, eye) - np.kron(eye, C.T)
    return -0.5 * kappa * comm @ comm


def evolve_monitoring(c_values, kappa: float, t: float, rho0) -> np.ndarray:
    n = len(c_values)
    vec = expm(t * monitoring_superoperator(c_values, kappa)) @ np.asarray(rho0, dtype=complex).reshape(-1)
    return vec.reshape(n, n)


# -- kernel contrast and log-intensity tensor --------------------------------

def contrast_tensor(model: AmplitudeModel, kick, p_ref, dp) -> tuple[float, float]:
    """Exact amplitude contrast and its quadratic approximation ``dp^T T~ dp``."""
    p_ref = np.asarray(p_ref, dtype=float)
    dp = np.asarray(dp, dtype=float)
    exact = (model.amplitude(kick, p_ref + 0.5 * dp) - model.amplitude(kick, p_ref - 0.5 * dp)) ** 2
    grad_m = 0.5 * model.grad_log_intensity(kick, p_ref) * model.amplitude(kick, p_ref)
    t_tilde = np.outer(grad_m, grad_m)
    return float(exact), float(dp @ t_tilde @ dp)


def log_intensity_tensor(model: AmplitudeModel, kick, p) -> np.ndarray:
    g = model.grad_log_intensity(kick, p)
    t = 0.5 * np.outer(g, g)
    return 0.5 * (t + t.T)


def log_intensity_tensor_fd(model: AmplitudeModel, kick, p, h: float = 1e-5) -> np.ndarray:
    """Same tensor from central differences of ``log |M|^2`` (model-agnostic check)."""
    p = np.asarray(p, dtype=float)
    g = np.empty(4)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        g[i] = (np.log(model.intensity(kick, p + e)) - np.log(model.intensity(kick, p - e))) / (2 * h)
    t = 0.5 * np.outer(g, g)
    return 0.5 * (t + t.T)


# -- Sigma tensor -----------------------------------------------------------

def default_gamma(Q: QuadForm, p_ref, model: AmplitudeModel, kappa: float, n_samples: int = 20_000,
                  seed: int = 0) -> float:
    """``kappa^-1/2`` times the median kicked increment magnitude."""
    g = rng.stream(seed, "schur.gamma")
    kicks = model.sample_kicks(g, n_samples)
    p_ref = np.asarray(p_ref, dtype=float)
    inc = 2.0 * kicks @ (Q.entries @ p_ref) + np.einsum("ij,jk,ik->i", kicks, Q.entries, kicks)
    return float(np.median(np.abs(inc)) / np.sqrt(kappa))


def _sigma_samples(Q, p, kicks, model, params, resolvent):
    """Per-sample Sigma integrands for momenta ``p`` (n,4) and kicks (n,4); shape (n,4,4)."""
    Qm = Q.entries
    inc = 2.0 * np.einsum("ij,jk,ik->i", kicks, Qm, p) + np.einsum("ij,jk,ik->i", kicks, Qm, kicks)
    if resolvent == "lorentzian":
        weight = 1.0 / (inc**2 + params.gamma**2)
    elif resolvent == "multiplier":
        weight = 1.0 / (params.gamma + 0.5 * params.kappa * inc**2)
    else:
        raise ValueError(f"unknown resolvent form {resolvent!r}")
    grads = model.grad_log_intensity(kicks, p)  # row-wise for (n,4) inputs
    t =0.5 * np.einsum("ni,nj->nij", grads, grads)
    return (params.eta**2 / params.kappa) * weight[:, None, None] * t


def _rotate_tangential(frame: LocalFrame, g: np.random.Generator, n: int) -> np.ndarray:
    basis = null_space(frame.u[None, :])  # (4,3)
    rots = Rotation.random(n, random_state=g).as_matrix()  # (n,3,3)
    t_coords = basis.T @ frame.p_ref
    rotated = np.einsum("nij,j->ni", rots, t_coords) @ basis.T
    return (frame.u @ frame.p_ref) * frame.u[None, :] + rotated


def sigma_tensor(Q: QuadForm, frame: LocalFrame, model: AmplitudeModel, params: ResolventParams,
                 averaging: str = "pointwise", n_samples: int = 100_000, seed: int = 0, *,
                 kicks=None, resolvent: str = "lorentzian", tolerance: float | None = None,
                 chunk: int = rng.DEFAULT_CHUNK, workers: int = 1) -> SigmaTensor:
    """Monte Carlo estimate of the Schur-induced tensor Sigma(Q) at ``frame.p_ref``.

    Kicks are drawn from the model's Gaussian kick profile unless ``kicks``
    are given explicitly.  ``averaging="shell"`` also rotates ``p_ref`` about
    the frame axis.  ``resolvent="lorentzian"`` uses ``1/(dC^2 + gamma^2)``;
    ``"multiplier"`` uses ``1/(gamma + kappa/2 dC^2)``.

    If ``tolerance`` is given and the largest entry standard error exceeds it,
    the result carries ``tolerance_met=False``.
    """
    if averaging not in ("pointwise", "shell"):
        raise ValueError(f"unknown averaging {averaging!r}")
    if not np.linalg.norm(normal_vector(Q, frame.p_ref)) > 0:
        raise ValueError("Q p_ref vanishes: outside the nondegenerate Zeno band")

    def partial(g, size, given=None):
        k = given if given is not None else model.sample_kicks(g, size)
        if averaging == "shell":
            p = _rotate_tangential(frame, g, len(k))
        else:
            p = np.broadcast_to(frame.p_ref, k.shape)
        s = _sigma_samples(Q, p, k, model, params, resolvent)
        return s.sum(axis=0), (s**2).sum(axis=0)

    if kicks is not None:
        kicks = np.atleast_2d(np.asarray(kicks, dtype=float))
        n_samples = len(kicks)
        parts = [partial(rng.stream(seed, "schur.sigma", 0), n_samples, kicks)]
    else:
        parts = rng.map_chunks(partial, n_samples, seed, "schur.sigma", chunk, workers)
    s1 = np.zeros((4, 4))
    s2 = np.zeros((4, 4))
    for a, b in parts:
        s1 += a
        s2 += b
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    se = np.sqrt(var / max(n_samples - 1, 1)) if n_samples > 1 else np.zeros((4, 4))
    sigma = 0.5 * (mean + mean.T)
    pt = frame.pi_tan
    sigma_tan = float(np.trace(pt @ sigma @ pt) / 3.0)
    se_tan = float(np.sqrt(np.sum((np.diag(pt) * np.diag(se)) ** 2)) / 3.0) if n_samples > 1 else 0.0
    norm = np.linalg.norm(sigma)
    nf = float(np.linalg.norm(frame.pi_n @ sigma @ frame.pi_n) / norm) if norm > 0 else 0.0
    met = tolerance is None or float(se.max()) <= tolerance
    return SigmaTensor(sigma, sigma_tan, nf, se, se_tan, n_samples, averaging, resolvent, met)


# -- identification of the Schur term with a shift of Q ----------------------

def identification_report(Q: QuadForm, sigma, pairs, kappa: float) -> dict:
    """Compare the Schur dephasing rate with the rate from shifting ``Q -> Q - Sigma``.

    ``pairs`` is a sequence of ``(p1, p2)`` momenta.  The Schur rate is
    ``kappa * eps * dC_Sigma``; the monitoring-variation rate is
    ``kappa * dC_Q * dC_Sigma``.  Separately, the first-order change of the
    exact generator coefficient along ``Q - t Sigma`` is obtained by a central
    difference and its sign relative to the Schur generator term
    ``-kappa * eps * dC_Sigma`` is reported.
    """
    S = sigma if isinstance(sigma, QuadForm) else QuadForm(sigma)
    schur_rates, mon_rates, exact_gen = [], [], []
    h = 1e-6
    for p1, p2 in pairs:
        eps = gap(Q, p1, p2)
        d_sigma = gap(S, p1, p2)
        schur_rates.append(kappa * eps * d_sigma)
        mon_rates.append(kappa * gap(Q, p1, p2) * d_sigma)

        def coeff(t):
            return -0.5 * kappa * gap(Q - t * S, p1, p2) ** 2

        exact_gen.append((coeff(h) - coeff(-h)) / (2 * h))
    schur_rates = np.asarray(schur_rates)
    mon_rates = np.asarray(mon_rates)
    exact_gen = np.asarray(exact_gen)
    scale = np.maximum(np.abs(schur_rates), np.abs(mon_rates))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, np.abs(schur_rates - mon_rates) / scale, 0.0)
    schur_gen = -schur_rates
    nz = np.abs(schur_gen) > 1e-300
    signs_agree = bool(np.all(np.sign(exact_gen[nz]) == np.sign(schur_gen[nz]))) if nz.any() else True
    return {
        "n_pairs": int(len(schur_rates)),
        "max_relative_mismatch": float(rel.max()) if len(rel) else 0.0,
        "max_abs_rate": float(scale.max()) if len(scale) else 0.0,
        "generator_sign_consistent": signs_agree,
        "exact_generator_variation": exact_gen.tolist(),
        "schur_generator_term": schur_gen.tolist(),
    }
