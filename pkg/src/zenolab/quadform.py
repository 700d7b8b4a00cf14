"""Quadratic forms on four-dimensional Euclidean momentum space.

A form ``Q`` defines the monitored observable ``C_Q(p) = p^T Q p``.  The local
frame splits momentum space into a distinguished axis ``u`` and its
three-dimensional orthogonal complement; the isotropic two-eigenvalue family
``q_n * Pi_n + q_tan * Pi_tan`` is built and decomposed with respect to it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

DIM = 4
UNIT_TOL = 1e-12
DEFAULT_SIG_TOL = 1e-10

__all__ = [
    "QuadForm",
    "LocalFrame",
    "Signature",
    "evaluate",
    "normal_vector",
    "make_frame",
    "gradient_frame",
    "assemble",
    "decompose",
    "signature",
    "isometry_residual",
    "boost",
    "scaled_boost",
    "tangential_rotation",
]


def _as_vector(p) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.shape != (DIM,):
        raise ValueError(f"expected a 4-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class QuadForm:
    """Real symmetric 4x4 matrix.

    The constructor symmetrizes its input explicitly, so the stored entries
    are exactly symmetric; non-finite entries are rejected.
    """

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape != (DIM, DIM):
            raise ValueError(f"quadratic form must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("quadratic form has non-finite entries")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def diag(cls, *values) -> "QuadForm":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def identity(cls) -> "QuadForm":
        return cls(np.eye(DIM))

    def __mul__(self, alpha: float) -> "QuadForm":
        return QuadForm(alpha * self.entries)

    __rmul__ = __mul__

    def __add__(self, other: "QuadForm") -> "QuadForm":
        return QuadForm(self.entries + other.entries)

    def __sub__(self, other: "QuadForm") -> "QuadForm":
        return QuadForm(self.entries - other.entries)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)

    def __eq__(self, other):
        if not isinstance(other, QuadForm):
            return NotImplemented
        return bool(np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"QuadForm({np.array2string(self.entries, precision=6)})"


@dataclass(frozen=True)
class LocalFrame:
    """Reference momentum with its normal/tangential split along axis ``u``.

    ``degenerate`` is set when ``p_ref`` is parallel to ``u``; tangential
    moments vanish identically in that case.
    """

    p_ref: np.ndarray
    u: np.ndarray
    pi_n: np.ndarray = field(repr=False)
    pi_tan: np.ndarray = field(repr=False)
    p_n: np.ndarray
    p_t: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        for name in ("p_ref", "u", "pi_n", "pi_tan", "p_n", "p_t"):
            getattr(self, name).setflags(write=False)


class Signature(NamedTuple):
    n_pos: int
    n_neg: int
    n_zero: int

    def __str__(self):
        return f"({self.n_pos},{self.n_neg},{self.n_zero})"


def evaluate(Q: QuadForm, p) -> float:
    p = _as_vector(p)
    return float(p @ Q.entries @ p)


def normal_vector(Q: QuadForm, p) -> np.ndarray:
    """Gradient ``2 Q p`` of the monitored observable at ``p``."""
    return 2.0 * Q.entries @ _as_vector(p)


def make_frame(p_ref, u=(1.0, 0.0, 0.0, 0.0), degenerate_tol: float = 1e-14) -> LocalFrame:
    """Build the fixed-axis frame at ``p_ref``.

    Raises
    ------
    ValueError
        If ``p_ref`` is zero or ``u`` is not a unit vector within 1e-12.
    """
    p_ref = _as_vector(p_ref).copy()
    u = _as_vector(u).copy()
    if not np.any(p_ref):
        raise ValueError("p_ref must be nonzero")
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError("frame axis u must be a unit vector")
    pi_n = np.outer(u, u)
    pi_tan = np.eye(DIM) - pi_n
    p_n = (u @ p_ref) * u
    # complement by subtraction keeps p_n + p_t == p_ref exact
    p_t = p_ref - p_n
    degenerate = bool(np.linalg.norm(p_t) <= degenerate_tol * np.linalg.norm(p_ref))
    return LocalFrame(p_ref, u, pi_n, pi_tan, p_n, p_t, degenerate)


def gradient_frame(Q: QuadForm, p_ref) -> LocalFrame:
    """Frame whose axis is the local normal ``Q p_ref / |Q p_ref|``.

    Alternative convention kept for comparison; p_ref is an eigenvector of Q
    exactly when this frame makes ``p_t`` vanish.
    """
    n = normal_vector(Q, p_ref)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise ValueError("Q p_ref vanishes; normal direction undefined")
    return make_frame(p_ref, n / norm, degenerate_tol=1e-12)


def assemble(q_n: float, q_tan: float, frame: LocalFrame) -> QuadForm:
    return QuadForm(q_n * frame.pi_n + q_tan * frame.pi_tan)


def decompose(Q: QuadForm, frame: LocalFrame) -> tuple[float, float, float]:
    """Project ``Q`` onto the two-eigenvalue family of ``frame``.

    Returns ``(q_n, q_tan, residual)`` with the residual being the Frobenius
    norm of what the family does not capture.
    """
    m = Q.entries
    q_n = float(frame.u @ m @ frame.u)
    q_tan = float(np.trace(frame.pi_tan @ m @ frame.pi_tan) / 3.0)
    rest = m - q_n * frame.pi_n - q_tan * frame.pi_tan
    return q_n, q_tan, float(np.linalg.norm(rest))


def signature(Q: QuadForm, tol: float = DEFAULT_SIG_TOL, relative: bool = True) -> Signature:
    """Count eigenvalues above ``+tol``, below ``-tol`` and in between.

    With ``relative=True`` the threshold is ``tol`` times the largest
    absolute eigenvalue (an absolute ``tol`` is used for the zero matrix).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ev = Q.eigvalsh()
    thresh = tol
    if relative:
        scale = np.max(np.abs(ev))
        thresh = tol * scale if scale > 0 else tol
    n_pos = int(np.sum(ev > thresh))
    n_neg = int(np.sum(ev < -thresh))
    return Signature(n_pos, n_neg, DIM - n_pos - n_neg)


def isometry_residual(Q: QuadForm, lam) -> float:
    lam = np.asarray(lam, dtype=float)
    return float(np.linalg.norm(lam.T @ Q.entries @ lam - Q.entries))


def boost(phi: float, axis: int = 1) -> np.ndarray:
    """Standard boost mixing coordinate 0 with spatial ``axis``."""
    lam = np.eye(DIM)
    c, s = np.cosh(phi), np.sinh(phi)
    lam[0, 0] = lam[axis, axis] = c
    lam[0, axis] = lam[axis, 0] = s
    return lam


def scaled_boost(phi: float, alpha: float, axis: int = 1) -> np.ndarray:
    """Boost preserving ``diag(1, -alpha, -alpha, -alpha)``.

    Conjugates the standard boost by ``S = diag(1, 1/sqrt(alpha), ...)``,
    which maps that form to the Minkowski one: ``S^T Q S = eta``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    s = np.diag([1.0] + [1.0 / np.sqrt(alpha)] * 3)
    return s @ boost(phi, axis) @ np.linalg.inv(s)


def tangential_rotation(frame: LocalFrame, angles=(0.3, -0.2, 0.5)) -> np.ndarray:
    """Rotation acting only on the tangential complement of ``frame.u``."""
    from scipy.linalg import expm, null_space

    basis = null_space(frame.u[None, :])  # 4x3 orthonormal
    a, b, c = angles
    gen = np.array([[0.0, -a, b], [a, 0.0, -c], [-b, c, 0.0]])
    rot3 = expm(gen)
    return np.outer(frame.u, frame.u) + basis @ rot3 @ basis.T
