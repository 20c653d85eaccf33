"""End-to-end training at toy scale, in about a minute.

Generates a small phantom slice set, trains for a few epochs, then
scores the model on held-out volumes exactly as the CLI would. Expect
rough numbers: the point is watching the whole pipeline move.
"""

import numpy as np

from hansnet.data import build_slice_splits, generate_volumes
from hansnet.metrics import dice
from hansnet.model import HansNet, ModelConfig, predicted_labels
from hansnet.phantom import PhantomConfig
from hansnet.preprocess import window_normalize
from hansnet.tensor import Tensor
from hansnet.train import TrainConfig, train_loop

SEED = 42
phantom = PhantomConfig(size=32, min_depth=4, max_depth=6,
                        min_tumor_radius=3.0, max_tumor_radius=6.0)
model_cfg = ModelConfig(base_channels=8, pe_levels=3, inr_hidden=16, mc_passes=4)

train, val, _ = build_slice_splits(SEED, counts=(48, 12, 4), cfg=phantom)
print(f"slices: {len(train)} train / {len(val)} val at {phantom.size}x{phantom.size}")

model = HansNet(model_cfg, master_seed=SEED)
history = train_loop(model, train, val, TrainConfig(epochs=6, batch_size=8, seed=SEED))

print("\nepoch  loss    val organ  val lesion")
for h in history:
    print(f"{h['epoch']:>5}  {h['loss']:.4f}  {h['val_dice_liver']:>9.3f}"
          f"  {h['val_dice_tumor']:>10.3f}")

# volume-level scoring on fresh phantoms the training never saw
image, labels, _ = generate_volumes(SEED + 1, 1, phantom)[0]
norm = window_normalize(image.astype(np.float64))
mean, _ = model.predict(Tensor(norm[:, None]), master_seed=SEED)
pred = predicted_labels(mean)
print(f"\nheld-out volume {labels.shape}:")
print(f"  organ dice  {dice(pred >= 1, labels >= 1):.3f}")
print(f"  lesion dice {dice(pred == 2, labels == 2):.3f}")
