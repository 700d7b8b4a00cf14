import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zenolab import robustness as rob


def test_constant_reparametrization():
    rep = rob.reparam_fixed_points(rob.ScalarFlowSpec(1.0, 2.0, lambda r: 3.0), (-5, 5))
    assert rep["r_plain"] == pytest.approx(-0.5, abs=1e-12)
    assert rep["r_rescaled"] == pytest.approx(-0.5, abs=1e-12)


@given(st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.1, 2), st.booleans())
def test_positive_reparametrization_keeps_fixed_point(A, B, c, flip):
    spec = rob.ScalarFlowSpec(A, -B if flip else B, lambda r: 1 + c * r * r)
    rep = rob.reparam_fixed_points(spec, (-10, 10))
    assert rep["difference"] <= 1e-10
    assert rep["same_stability"]


def test_no_finite_fixed_point():
    rep = rob.reparam_fixed_points(rob.ScalarFlowSpec(1.0, 0.0), (-5, 5))
    assert not rep["finite_fixed_point"]


def test_fixed_point_path_continuous():
    coarse = rob.fixed_point_path(lambda c: 1 + 0.3 * c, lambda c: 2 - 0.5 * c, np.linspace(0, 1, 11))
    fine = rob.fixed_point_path(lambda c: 1 + 0.3 * c, lambda c: 2 - 0.5 * c, np.linspace(0, 1, 101))
    assert fine["max_jump"] < coarse["max_jump"] / 5


def test_anisotropic_basis_orthonormal():
    m = rob.AnisoModel()
    b = m.aniso_basis
    assert b.shape == (8, 4, 4)
    gram = np.einsum("aij,bij->ab", b, b)
    assert np.allclose(gram, np.eye(8), atol=1e-13)
    for e in b:
        assert abs(np.sum(e * m.frame.pi_n)) < 1e-13
        assert abs(np.sum(e * m.frame.pi_tan)) < 1e-13


def test_pure_decay_closed_form():
    m = rob.AnisoModel(gamma_perp=1.0, coupling=0.0)
    eps = 0.01
    out = rob.aniso_evolve(rob.AnisoState(1.0, eps * m.aniso_basis[2]), m, 3.0)
    assert np.allclose(out["norm"], eps * np.exp(-out["lambda"]), rtol=1e-6)


def test_zero_anisotropy_matches_isotropic():
    m = rob.AnisoModel(coupling=0.2)
    out = rob.aniso_evolve(rob.AnisoState(1.0, np.zeros((4, 4))), m, 3.0)
    # same ODE; only the step controller sees the extra zero components
    assert np.max(np.abs(out["r"] - out["r_iso"])) <= 1e-9
    assert np.all(out["norm"] == 0)


@pytest.mark.parametrize("gamma_perp", [0.5, 1.0, 2.0])
def test_coupled_decay_and_linear_shift(gamma_perp):
    m = rob.AnisoModel(gamma_perp=gamma_perp, coupling=0.3)
    d = m.aniso_basis[0] + 0.5 * m.aniso_basis[3]
    shifts = []
    for eps in (0.01, 0.02):
        out = rob.aniso_evolve(rob.AnisoState(1.0, eps * d / np.linalg.norm(d)), m, 5.0)
        assert out["decay_slope"] <= -gamma_perp / 2
        assert out["strictly_decreasing"]
        shifts.append(out["endpoint_shift"])
    assert shifts[1] / shifts[0] == pytest.approx(2.0, rel=0.1)


def test_sweep_csv(tmp_path):
    rows = [{"epsilon_aniso": 0.01, "gamma_perp": 1.0, "decay_slope": -1.0, "endpoint_shift": 1e-4}]
    path = tmp_path / "s.csv"
    rob.write_sweep_csv(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(rob.SWEEP_COLUMNS)
