"""Full segmentation network.

The pipeline, for a [B, 1, H, W] input with H and W divisible by 8:

    stem conv (tanh)                 -> 16 channels at H x W
    frequency decomposition          -> 16 at H x W
    3 x (hyperbolic block + pool)    -> 16, 32, 64 at H/2, H/4, H/8
    gated attention                  -> 64 at H/8
    plasticity stage                 -> 64 at H/8
    implicit field decoder           -> 2 logit maps at H x W
    uncertainty head                 -> 2 logit maps at H x W

Every named stage can be switched off independently. A disabled
decomposition or hyperbolic block is replaced by a plain conv + tanh of
the same channel signature so the trunk stays trainable; disabled
attention/plasticity stages become identity; a disabled field decoder
becomes bilinear upsampling plus a conv head; a disabled uncertainty head
leaves the decoder logits as the output and makes prediction
deterministic.

Logit channel 0 is the organ, channel 1 the lesion; both are independent
sigmoid channels (the lesion sits inside the organ, so the masks nest).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .attention import AdaptiveAttention
from .errors import ContractError, DimensionError
from .hyperbolic import HyperbolicConvBlock
from .implicit import ImplicitField
from .init import he_conv
from .ops import bilinear_upsample, conv2d, maxpool2d
from .plasticity import SynapticPlasticity
from .rng import STREAM_INIT, STREAM_MC, generator
from .tensor import Tensor, concat, tanh
from .uncertainty import UncertaintyHead, mc_predict
from .wavelet import WaveletDecomposition


@dataclass
class ModelConfig:
    use_wdm: bool = True
    use_hc: bool = True
    use_ata: bool = True
    use_spm: bool = True
    use_inr: bool = True
    use_ue: bool = True
    learnable_curvature: bool = False
    kappa: float = -1.0
    pe_levels: int = 6
    inr_hidden: int = 64
    mc_passes: int = 10
    dropout_p: float = 0.2
    plasticity_alpha: float = 0.1
    plasticity_ema: bool = False
    base_channels: int = 16


class _PlainBlock:
    """Stand-in conv + tanh used when a structured stage is toggled off."""

    def __init__(self, cin, cout, rng):
        self.W = Tensor(he_conv(rng, cout, cin, 3), requires_grad=True)

    def params(self):
        return {"W": self.W}

    def trainable(self):
        return [self.W]

    def __call__(self, x):
        return tanh(conv2d(x, self.W, padding=1))


class HansNet:
    def __init__(self, cfg=None, master_seed=0):
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        rng = generator(master_seed, STREAM_INIT)
        c1 = cfg.base_channels
        c2, c3 = 2 * c1, 4 * c1
        self.c_feat = c3

        self.stem_w = Tensor(he_conv(rng, c1, 1, 3), requires_grad=True)
        self.stem_b = Tensor(np.zeros(c1), requires_grad=True)

        self.wdm = (
            WaveletDecomposition(c1, c1, rng) if cfg.use_wdm else _PlainBlock(c1, c1, rng)
        )
        chans = [(c1, c1), (c1, c2), (c2, c3)]
        if cfg.use_hc:
            self.blocks = [
                HyperbolicConvBlock(
                    a, b, rng, kappa=cfg.kappa, learnable_curvature=cfg.learnable_curvature
                )
                for a, b in chans
            ]
        else:
            self.blocks = [_PlainBlock(a, b, rng) for a, b in chans]

        self.ata = AdaptiveAttention(c3, rng) if cfg.use_ata else None
        self.spm = (
            SynapticPlasticity(c3, rng, alpha=cfg.plasticity_alpha, ema=cfg.plasticity_ema)
            if cfg.use_spm
            else None
        )

        if cfg.use_inr:
            self.inr = ImplicitField(c3, rng, levels=cfg.pe_levels, hidden=cfg.inr_hidden)
            self.head_w = self.head_b = None
        else:
            self.inr = None
            self.head_w = Tensor(he_conv(rng, 2, c3, 3), requires_grad=True)
            self.head_b = Tensor(np.zeros(2), requires_grad=True)

        self.ue = UncertaintyHead(2 + c3, rng, p=cfg.dropout_p) if cfg.use_ue else None

    # ---- parameter plumbing ----

    def state(self):
        """Ordered name -> Tensor map, buffers included (checkpoint layout)."""
        out = {"stem.w": self.stem_w, "stem.b": self.stem_b}
        if self.cfg.use_wdm:
            for k, v in self.wdm.params().items():
                out[f"wavelet.{k}"] = v
        else:
            out["block0.W"] = self.wdm.W
        for i, blk in enumerate(self.blocks, start=1):
            if self.cfg.use_hc:
                for k, v in blk.params().items():
                    out[f"hconv{i}.{k}"] = v
            else:
                out[f"block{i}.W"] = blk.W
        if self.ata is not None:
            for k, v in self.ata.params().items():
                out[f"ata.{k}"] = v
        if self.spm is not None:
            for k, v in self.spm.params().items():
                out[f"spm.{k}"] = v
        if self.inr is not None:
            for k, v in self.inr.params().items():
                out[f"inr.{k}"] = v
        else:
            out["head.w"] = self.head_w
            out["head.b"] = self.head_b
        if self.ue is not None:
            for k, v in self.ue.params().items():
                out[f"ue.{k}"] = v
        return out

    def trainable(self):
        skip = {"spm.eta"}
        if self.cfg.use_hc and not self.cfg.learnable_curvature:
            skip |= {f"hconv{i}.kappa" for i in (1, 2, 3)}
        return [t for name, t in self.state().items() if name not in skip]

    def load_state(self, arrays):
        """Install checkpointed arrays; names and shapes must match exactly."""
        state = self.state()
        missing = set(state) - set(arrays)
        extra = set(arrays) - set(state)
        if missing or extra:
            raise ContractError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, tensor in state.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise ContractError(
                    f"{name}: shape {arr.shape} does not match {tensor.data.shape}"
                )
            tensor.data = arr.copy()

    # ---- forward paths ----

    def _check_input(self, x):
        if x.data.ndim != 4 or x.shape[1] != 1:
            raise DimensionError(f"model input must be [B, 1, H, W], got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise DimensionError(
                f"spatial dims must be divisible by 8, got {x.shape[2]}x{x.shape[3]}"
            )

    def features(self, x, train=False):
        """Trunk output: [B, 64, H/8, W/8]."""
        self._check_input(x)
        h = tanh(conv2d(x, self.stem_w, self.stem_b, padding=1))
        h = self.wdm(h)
        for blk in self.blocks:
            h = maxpool2d(blk(h))
        if self.ata is not None:
            h = self.ata(h)
        if self.spm is not None:
            h = self.spm(h, train=train)
        return h

    def _decode(self, feats, out_hw):
        if self.inr is not None:
            return self.inr.logits_grid(feats, out_hw)
        up = bilinear_upsample(feats, out_hw)
        return conv2d(up, self.head_w, self.head_b, padding=1)

    def logits(self, x, train=False, dropout_rng=None):
        """Single-pass logits [B, 2, H, W].

        During training the uncertainty head runs with live dropout (it
        only learns under the same noise it predicts with later); without
        it, or at evaluation, the pass is deterministic.
        """
        self._check_input(x)
        out_hw = (x.shape[2], x.shape[3])
        feats = self.features(x, train=train)
        z = self._decode(feats, out_hw)
        if self.ue is not None:
            fused = concat([z, bilinear_upsample(feats, out_hw)], axis=1)
            rng = dropout_rng if train else None
            z = self.ue(fused, rng)
        return z

    def predict(self, x, master_seed=0):
        """Evaluation-mode probabilities and per-voxel uncertainty.

        Returns (mean, variance) float64 arrays of shape [B, 2, H, W].
        The trunk runs once; only the stochastic head repeats.
        """
        self._check_input(x)
        out_hw = (x.shape[2], x.shape[3])
        feats = self.features(x, train=False)
        z = self._decode(feats, out_hw)
        if self.ue is None:
            probs = expit(z.data)
            return probs, np.zeros_like(probs)
        fused = concat([z, bilinear_upsample(feats, out_hw)], axis=1)
        return mc_predict(
            self.ue, fused, self.cfg.mc_passes, generator(master_seed, STREAM_MC)
        )


def predicted_labels(mean_probs):
    """Collapse two-channel probabilities to a label map (lesion wins)."""
    organ = mean_probs[:, 0] >= 0.5
    lesion = mean_probs[:, 1] >= 0.5
    out = np.zeros(organ.shape, dtype=np.uint8)
    out[organ] = 1
    out[lesion] = 2
    return out
