"""Activity-dependent channel modulation.

The stage keeps a per-channel excitability trace eta that is not learned
by gradient descent: during training it is refreshed from the batch it is
about to process, using the diagonal of the channel co-activation matrix

    eta <- alpha * diag(C_bar),    diag(C_bar)[c] = mean over batch and
                                   space of x_c^2

(or an exponential moving average toward that value when `ema` is set).
The forward pass then scales each channel by omega * (1 + eta), mixes
channels through a learned matrix, and finishes with a 3x3 convolution:

    F_out = Conv3x3( T_mix( X * omega * (1 + eta) ) )

eta is a buffer: it rides along in checkpoints, participates in the
forward pass as a constant, and is skipped by the optimizer.
"""

import numpy as np

from .init import he_conv, near_identity
from .ops import conv2d
from .tensor import Tensor, matmul, mul, permute, reshape


class SynapticPlasticity:
    def __init__(self, c, rng, alpha=0.1, ema=False, ema_beta=0.1):
        self.c = c
        self.alpha = float(alpha)
        self.ema = bool(ema)
        self.ema_beta = float(ema_beta)
        self.eta = Tensor(np.zeros(c))  # buffer, not trained
        self.omega = Tensor(np.ones(c), requires_grad=True)
        self.T = Tensor(near_identity(rng, c), requires_grad=True)
        self.W = Tensor(he_conv(rng, c, c, 3), requires_grad=True)

    def params(self):
        return {"eta": self.eta, "omega": self.omega, "T": self.T, "W": self.W}

    def trainable(self):
        return [self.omega, self.T, self.W]

    def update_trace(self, x_data):
        """Refresh eta from raw activations (outside any tape)."""
        diag = np.mean(x_data * x_data, axis=(0, 2, 3))
        target = self.alpha * diag
        if self.ema:
            self.eta.data = self.eta.data + self.ema_beta * (target - self.eta.data)
        else:
            self.eta.data = target

    def __call__(self, x, train=False):
        if train:
            self.update_trace(x.data)
        b, c, hh, ww = x.shape
        scaled = mul(x, reshape(mul(self.omega, Tensor(1.0 + self.eta.data)), (1, c, 1, 1)))
        flat = permute(reshape(scaled, (b, c, hh * ww)), (0, 2, 1))
        mixed = reshape(permute(matmul(flat, self.T), (0, 2, 1)), (b, c, hh, ww))
        return conv2d(mixed, self.W, padding=1)
