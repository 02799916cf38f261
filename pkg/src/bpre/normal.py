"""Standard normal helpers that stay finite far into the tails."""

import math

import numpy as np
from scipy.special import erfcx, ndtr

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


def Phi(x):
    return ndtr(x)


def Phi_bar(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return ndtr(np.negative(x))


def mills(x):
    """exp(x^2/2) * (1 - Phi(x)); equals 1/(x*sqrt(2*pi)) asymptotically."""
    return 0.5 * erfcx(np.asarray(x, dtype=float) / SQRT2)
