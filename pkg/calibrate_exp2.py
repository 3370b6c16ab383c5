"""Calibration: exp2 shortcut analog (combined 3-domain corpus, standard loss)."""
import time

from partseg.experiments import make_domain_data
from partseg.losses import LossConfig
from partseg.metrics import evaluate
from partseg.model import UNetConfig
from partseg.synth import AugmentConfig, preset_domain
from partseg.train import TrainConfig, train
from partseg.types import ClassVocabulary

vocab = ClassVocabulary()
N = 140
per = {name: make_domain_data(preset_domain(name), N, seed=0) for name in ("camus_like", "unity_like", "echonet_like")}
train_set = [s for d in per.values() for s in d.train]
val_set = [s for d in per.values() for s in d.val]
print(f"train {len(train_set)} val {len(val_set)}")

cfg = TrainConfig(epochs=20, batch_size=16, initial_lr=0.1, loss=LossConfig("standard"),
                  augment=AugmentConfig(), seed=0,
                  model=UNetConfig(depth=3, base_channels=8, out_channels=4, seed=0))
t0 = time.perf_counter()
model, manifest = train(cfg, train_set, val_set)
print(f"trained in {time.perf_counter()-t0:.0f} s, best ep {manifest.best_epoch} val {manifest.best_val_dice:.3f}")

for name, d in per.items():
    rep = evaluate(model, list(d.test), vocab)
    vals = {c: rep.mean_std(class_name=c)[0] for c in vocab.names}
    print(f"test {name}: LV {vals['LV']:.3f} LVM {vals['LVM']:.3f} LA {vals['LA']:.3f}")
print("CHECK echonet: LV > 0.8, LVM < 0.1, LA < 0.1")
