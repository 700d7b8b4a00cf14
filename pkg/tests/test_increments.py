import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zenolab import increments as inc
from zenolab import quadform as qf


def _law(s=1.0, kappa=1.0, p=(1.0, 1.0, 0, 0), r=1.0):
    f = qf.make_frame(np.asarray(p, dtype=float))
    return inc.IncrementLaw(s, kappa, qf.assemble(1.0, r, f), f)


def test_sherman_morrison_hand_value():
    # s=1, kappa=1, n=(2,0,0,0): diag(1 - 4/5, 1, 1, 1)
    f = qf.make_frame([1.0, 0, 0, 0])
    law = inc.IncrementLaw(1.0, 1.0, qf.QuadForm.identity(), f)
    assert np.allclose(law.normal, [2, 0, 0, 0])
    assert np.allclose(inc.conditioned_covariance(law), np.diag([0.2, 1, 1, 1]), atol=1e-15)


@given(st.floats(0.1, 3), st.floats(0, 10), st.floats(-2, 2))
def test_covariance_matches_inverse(s, kappa, r):
    law = _law(s, kappa, r=r)
    n = law.normal
    direct = np.linalg.inv(np.eye(4) / s**2 + kappa * np.outer(n, n))
    assert np.allclose(inc.conditioned_covariance(law), direct, rtol=1e-12, atol=1e-14)


@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12))
def test_contrast_midpoint_identity(xs):
    x = np.array(xs)
    Q = qf.QuadForm(np.outer(x[:4], x[4:8]))
    p, d = x[4:8], x[8:12]
    hi, lo = qf.evaluate(Q, p + d / 2), qf.evaluate(Q, p - d / 2)
    # roundoff scales with the absolute summands, not with their difference
    aq = np.abs(Q.entries)
    scale = np.abs(p + d / 2) @ aq @ np.abs(p + d / 2) + np.abs(p - d / 2) @ aq @ np.abs(p - d / 2)
    assert abs((hi - lo) - inc.contrast(Q, p, d)) <= 1e-12 * max(1.0, scale)


def test_bare_law_ignores_form():
    a = inc.moments(_law(kappa=0.0, r=1.0))
    b = inc.moments(_law(kappa=0.0, r=-3.0))
    assert a == b


def test_moments_cauchy_schwarz():
    M = inc.moments(_law(kappa=2.0, r=-0.4))
    assert M.cauchy_schwarz_gap() >= -1e-14
    assert M.cauchy_schwarz_ok()


def test_degenerate_frame_moments():
    M = inc.moments(_law(p=(1.0, 0, 0, 0)))
    assert M.degenerate
    assert M.M_tt == 0.0 and M.M_nt == 0.0


@pytest.mark.parametrize("kappa", [0.0, 1.0, 5.0])
def test_mc_agrees_with_analytic(kappa):
    law = _law(kappa=kappa, r=0.3)
    a = inc.moments(law)
    m = inc.moments(law, "montecarlo", 100_000, seed=7)
    for key in ("nn", "tt", "nt"):
        z = abs(getattr(a, "M_" + key) - getattr(m, "M_" + key)) / getattr(m, "se_" + key)
        assert z < 4.0


def test_mc_gamma_matches_formula():
    from zenolab.zenoflow import gamma

    law = _law(kappa=1.0)
    mean, se = inc.mc_gamma(law, 1.0, 100_000, seed=3)
    expected = gamma(1.0, 1.0, 1.0, inc.moments(law))
    assert abs(mean - expected) < 4 * se


def test_sample_chunking_independent_of_workers():
    law = _law()
    a = inc.sample(law, 10_000, seed=1, chunk=1024, workers=1)
    b = inc.sample(law, 10_000, seed=1, chunk=1024, workers=4)
    assert np.array_equal(a, b)


def test_rejects_bad_law():
    f = qf.make_frame([1.0, 1, 0, 0])
    with pytest.raises(ValueError):
        inc.IncrementLaw(0.0, 1.0, qf.QuadForm.identity(), f)
    with pytest.raises(ValueError):
        inc.moments(_law(), method="quadrature")
