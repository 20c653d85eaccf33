"""Each network stage standalone on one small batch.

Shapes go in, shapes come out; parameter counts show where the capacity
lives. Nothing here trains, it's a map of the pieces.
"""

import numpy as np

from hansnet.attention import AdaptiveAttention
from hansnet.hyperbolic import HyperbolicConvBlock
from hansnet.implicit import ImplicitField
from hansnet.plasticity import SynapticPlasticity
from hansnet.rng import generator
from hansnet.tensor import Tensor
from hansnet.uncertainty import UncertaintyHead
from hansnet.wavelet import WaveletDecomposition

rng = np.random.default_rng(7)
x = Tensor(rng.standard_normal((2, 16, 32, 32)) * 0.1)


def show(name, layer, out):
    n = sum(t.data.size for t in layer.params().values())
    print(f"{name:<22} {tuple(x.shape)} -> {tuple(out.shape)}   {n:>6} params")


wdm = WaveletDecomposition(16, 16, generator(0, 1))
show("frequency split", wdm, wdm(x))

hc = HyperbolicConvBlock(16, 16, generator(0, 2), kappa=-1.0)
show("hyperbolic conv", hc, hc(x))

ata = AdaptiveAttention(16, generator(0, 3))
show("adaptive attention", ata, ata(x))

spm = SynapticPlasticity(16, generator(0, 4))
show("plasticity", spm, spm(x))
print(f"{'':<22} eta before a training call:",
      np.round(spm.eta.data[:4], 4), "...")
spm(x, train=True)
print(f"{'':<22} eta refreshed from batch:  ",
      np.round(spm.eta.data[:4], 4), "...")

inr = ImplicitField(16, generator(0, 5), levels=4, hidden=32)
grid = inr.logits_grid(x, (32, 32))
show("implicit field", inr, grid)

ue = UncertaintyHead(16, generator(0, 6), p=0.2)
show("uncertainty head", ue, ue(x, None))
