"""Weight initialization rules shared by the layers."""

import numpy as np


def he_conv(rng, cout, cin, k):
    """Fan-in scaled normal for a [cout, cin, k, k] conv kernel."""
    return rng.normal(size=(cout, cin, k, k)) * np.sqrt(2.0 / (cin * k * k))


def he_linear(rng, nin, nout):
    return rng.normal(size=(nin, nout)) * np.sqrt(2.0 / nin)


def near_identity(rng, n, noise=0.01):
    """Identity channel-mixing matrix with a small symmetric perturbation."""
    return np.eye(n) + noise * rng.normal(size=(n, n))
