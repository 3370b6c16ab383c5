"""Calibration: exp4 analog (dropout sweep, two domains, LA removed from second)."""
import sys
import time

import numpy as np

from partseg.dropout import DropoutConfig, partially_labelled_classes
from partseg.experiments import make_domain_data
from partseg.losses import LossConfig
from partseg.metrics import evaluate
from partseg.model import UNetConfig
from partseg.synth import AugmentConfig, apply_label_removal, preset_domain
from partseg.train import TrainConfig, train
from partseg.types import ClassVocabulary

probs = [float(x) for x in sys.argv[1].split(",")] if len(sys.argv) > 1 else [0.0, 0.1, 0.5, 0.9, 1.0]
seeds = [int(x) for x in sys.argv[2].split(",")] if len(sys.argv) > 2 else [0, 1]
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 20
n = int(sys.argv[4]) if len(sys.argv) > 4 else 150

vocab = ClassVocabulary()
first = make_domain_data(preset_domain("camus_like"), n, seed=0)
second = make_domain_data(preset_domain("unity_like"), n, seed=0)
second_train = apply_label_removal(list(second.train), 2, 1.0, seed=0)
train_set = list(first.train) + second_train
val_set = list(first.val) + list(second.val)
test_set = list(second.test)
eligible = partially_labelled_classes(train_set)
print(f"train {len(train_set)} val {len(val_set)} unity-test {len(test_set)} eligible {sorted(eligible)}")

means = {}
for p in probs:
    per_seed = []
    for seed in seeds:
        cfg = TrainConfig(epochs=epochs, batch_size=16, initial_lr=0.1, loss=LossConfig("adaptive"),
                          dropout=DropoutConfig(p, eligible), augment=AugmentConfig(), seed=seed,
                          model=UNetConfig(depth=3, base_channels=8, out_channels=4, seed=seed))
        t0 = time.perf_counter()
        model, manifest = train(cfg, train_set, val_set)
        rep = evaluate(model, test_set, vocab)
        la = rep.mean_std(class_name="LA")[0]
        lv = rep.mean_std(class_name="LV")[0]
        lvm = rep.mean_std(class_name="LVM")[0]
        per_seed.append(la)
        print(f"p={p:.1f} seed {seed}: unity LA {la:.3f} (LV {lv:.3f} LVM {lvm:.3f})"
              f"  [{time.perf_counter()-t0:.0f} s, best ep {manifest.best_epoch}]", flush=True)
    means[p] = float(np.mean(per_seed))

print()
for p in probs:
    delta = means[p] - means[probs[0]] if probs[0] == 0.0 else float("nan")
    print(f"p={p:.1f}: mean LA {means[p]:.3f}  improvement {delta:+.3f}")
