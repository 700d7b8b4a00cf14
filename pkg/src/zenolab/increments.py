"""Zeno-conditioned local increment law and its second moments.

The base increment measure is an isotropic centred Gaussian with standard
deviation ``s``.  Reweighting by the Zeno factor ``exp(-kappa/2 * eps^2)``,
with ``eps = n . dp`` and ``n = 2 Q p_ref``, keeps the law Gaussian:

    C = (s^-2 I + kappa n n^T)^-1 = s^2 I - s^4 kappa n n^T / (1 + kappa s^2 |n|^2)

so every Monte Carlo estimate below has a closed-form counterpart.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .quadform import LocalFrame, QuadForm, normal_vector

__all__ = [
    "IncrementLaw",
    "MomentSet",
    "contrast",
    "zeno_weight",
    "conditioned_covariance",
    "sample",
    "moments",
    "mc_gamma",
]


@dataclass(frozen=True)
class IncrementLaw:
    s: float
    kappa: float
    Q: QuadForm
    frame: LocalFrame

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("base standard deviation s must be positive")
        if not self.kappa >= 0:
            raise ValueError("monitoring strength kappa must be nonnegative")

    @property
    def normal(self) -> np.ndarray:
        return normal_vector(self.Q, self.frame.p_ref)


@dataclass(frozen=True)
class MomentSet:
    """Second moments ``M_xy = <(p_x . dp)(p_y . dp)>`` of the increment law."""

    M_nn: float
    M_tt: float
    M_nt: float
    se_nn: float = 0.0
    se_tt: float = 0.0
    se_nt: float = 0.0
    method: str = "analytic"
    degenerate: bool = False

    def quadratic(self, r: float) -> float:
        """``M_nn + 2 r M_nt + r^2 M_tt``."""
        return self.M_nn + 2.0 * r * self.M_nt + r * r * self.M_tt

    def cauchy_schwarz_gap(self) -> float:
        return self.M_nn * self.M_tt - self.M_nt**2

    def cauchy_schwarz_ok(self) -> bool:
        # propagated standard error of the determinant
        err = np.sqrt(
            (self.M_tt * self.se_nn) ** 2
            + (self.M_nn * self.se_tt) ** 2
            + (2.0 * self.M_nt * self.se_nt) ** 2
        )
        return self.M_nn >= 0 and self.M_tt >= 0 and self.cauchy_schwarz_gap() >= -3.0 * err

    def as_dict(self) -> dict:
        return {
            "M_nn": self.M_nn,
            "M_tt": self.M_tt,
            "M_nt": self.M_nt,
            "se_nn": self.se_nn,
            "se_tt": self.se_tt,
            "se_nt": self.se_nt,
            "method": self.method,
            "degenerate": self.degenerate,
        }


def contrast(Q: QuadForm, p_ref, dp) -> float:
    """Local measurement contrast ``2 (Q p_ref) . dp``.

    Equals ``C_Q(p_ref + dp/2) - C_Q(p_ref - dp/2)`` exactly.
    """
    return float(normal_vector(Q, p_ref) @ np.asarray(dp, dtype=float))


def zeno_weight(law: IncrementLaw, dp) -> float:
    eps = contrast(law.Q, law.frame.p_ref, dp)
    return float(np.exp(-0.5 * law.kappa * eps * eps))


def conditioned_covariance(law: IncrementLaw) -> np.ndarray:
    n = law.normal
    s2 = law.s**2
    denom = 1.0 + law.kappa * s2 * (n @ n)
    cov = s2 * np.eye(4) - (law.kappa * s2 * s2 / denom) * np.outer(n, n)
    return 0.5 * (cov + cov.T)


def _cholesky(law: IncrementLaw) -> np.ndarray:
    cov = conditioned_covariance(law)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("conditioned covariance is not positive definite") from exc


def sample(law: IncrementLaw, n_samples: int, seed: int, *, chunk: int = rng.DEFAULT_CHUNK,
           workers: int = 1) -> np.ndarray:
    """Draw ``n_samples`` increments from the conditioned Gaussian, shape (n, 4)."""
    L = _cholesky(law)

    def draw(g, size):
        return g.standard_normal((size, 4)) @ L.T

    return np.concatenate(rng.map_chunks(draw, n_samples, seed, "increments.sample", chunk, workers))


def _analytic(law: IncrementLaw) -> MomentSet:
    cov = conditioned_covariance(law)
    f = law.frame
    return MomentSet(
        M_nn=float(f.p_n @ cov @ f.p_n),
        M_tt=float(f.p_t @ cov @ f.p_t),
        M_nt=float(f.p_n @ cov @ f.p_t),
        method="analytic",
        degenerate=f.degenerate,
    )


def _mc(law: IncrementLaw, n_samples: int, seed: int, chunk: int, workers: int) -> MomentSet:
    L = _cholesky(law)
    f = law.frame
    proj = np.stack([f.p_n, f.p_t])  # rows: p_n, p_t

    def partial(g, size):
        dp = g.standard_normal((size, 4)) @ L.T
        x = dp @ proj.T
        prods = np.stack([x[:, 0] ** 2, x[:, 1] ** 2, x[:, 0] * x[:, 1]], axis=1)
        return prods.sum(axis=0), (prods**2).sum(axis=0)

    parts = rng.map_chunks(partial, n_samples, seed, "increments.moments", chunk, workers)
    s1 = np.zeros(3)
    s2 = np.zeros(3)
    for a, b in parts:
        s1 += a
        s2 += b
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    se = np.sqrt(var / max(n_samples - 1, 1))
    return MomentSet(
        M_nn=float(mean[0]), M_tt=float(mean[1]), M_nt=float(mean[2]),
        se_nn=float(se[0]), se_tt=float(se[1]), se_nt=float(se[2]),
        method="montecarlo",
        degenerate=f.degenerate,
    )


def moments(law: IncrementLaw, method: str = "analytic", n_samples: int = 100_000,
            seed: int = 0, *, chunk: int = rng.DEFAULT_CHUNK, workers: int = 1) -> MomentSet:
    """Second moments of the increment law along the frame split of ``p_ref``.

    ``method`` is ``"analytic"`` (closed-form covariance) or ``"montecarlo"``
    (sample averages with standard errors).  A degenerate frame (``p_t = 0``)
    is flagged on the result, not rejected.
    """
    if method == "analytic":
        return _analytic(law)
    if method == "montecarlo":
        return _mc(law, n_samples, seed, chunk, workers)
    raise ValueError(f"unknown moment method {method!r}")


def mc_gamma(law: IncrementLaw, kappa: float, n_samples: int, seed: int, *,
             chunk: int = rng.DEFAULT_CHUNK, workers: int = 1) -> tuple[float, float]:
    """Monte Carlo mean and standard error of ``(kappa/2) * contrast^2``."""
    L = _cholesky(law)
    n = law.normal

    def partial(g, size):
        dp = g.standard_normal((size, 4)) @ L.T
        vals = 0.5 * kappa * (dp @ n) ** 2
        return vals.sum(), (vals**2).sum()

    parts = rng.map_chunks(partial, n_samples, seed, "increments.gamma", chunk, workers)
    s1 = sum(a for a, _ in parts)
    s2 = sum(b for _, b in parts)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean**2, 0.0)
    return float(mean), float(np.sqrt(var / max(n_samples - 1, 1)))
