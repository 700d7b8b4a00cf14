"""Numerical laboratory for calibrated Zeno renormalization flows of quadratic
momentum-space observables.

Submodules
----------
quadform    quadratic forms on R^4, local frames, signatures, isometries
increments  Zeno-conditioned increment law and its second moments
zenoflow    calibrated projective flow of the tangential/normal ratio
schur       resolvent expansion, log-intensity tensor and the Sigma tensor
kinetics    detailed-balance jump process on the mass shell
robustness  reparametrization and weak-anisotropy checks of the reduced flow
cli         batch experiment runner
"""

__version__ = "0.1.0"
