"""Overflow-safe scalar helpers shared by the solvers and the closed forms.

Everything that involves e^{(T1-t)/(n-1)} runs through these: T1 grows like
g(gamma), so the exponent can reach thousands and the naive exponential is
useless. All identities are therefore written in terms of the exponent x
itself, softplus(x) = log(1+e^x) and sigma(x) = 1/(1+e^x)^-1.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

# np.exp overflows past ~709.78; anything above this is an error upstream.
EXP_ARG_MAX = 709.0


def softplus(x):
    """log(1 + e^x), valid for any magnitude of x."""
    return np.logaddexp(0.0, x)


def sigma(x):
    """Logistic function e^x / (1 + e^x)."""
    return expit(x)


def exp_checked(arg: float) -> float:
    """exp(arg) with an explicit overflow error instead of inf."""
    if arg > EXP_ARG_MAX:
        raise OverflowError(f"exponent {arg:.3g} exceeds representable range")
    return float(np.exp(arg))


def pow_frac(base: float, expo: float) -> float:
    """base**expo for base >= 0 via log space; 0**positive = 0."""
    if base < 0.0:
        raise ValueError(f"negative base {base!r} in fractional power")
    if base == 0.0:
        return 0.0
    return float(np.exp(expo * np.log(base)))
