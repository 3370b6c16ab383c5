"""Exp4 probe C: overlapping cone-angle ranges so the domain cue is only
moderately informative; intensity profiles aligned."""
import sys
import time

import numpy as np

from partseg.dropout import DropoutConfig, partially_labelled_classes
from partseg.experiments import make_domain_data
from partseg.losses import LossConfig
from partseg.metrics import evaluate
from partseg.model import UNetConfig
from partseg.synth import (
    AugmentConfig, DomainSpec, IntensityProfile, apply_label_removal, preset_domain,
)
from partseg.train import TrainConfig, train
from partseg.types import ClassVocabulary

lo = float(sys.argv[1]) if len(sys.argv) > 1 else 58.0
hi = float(sys.argv[2]) if len(sys.argv) > 2 else 72.0
epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 30
probs = [float(x) for x in sys.argv[4].split(",")] if len(sys.argv) > 4 else [0.0, 0.1, 0.5]
seeds = [int(x) for x in sys.argv[5].split(",")] if len(sys.argv) > 5 else [0, 1]

unity = DomainSpec(
    domain_id="unity_like",
    cone_angle_range=(lo, hi),
    cone_apex_jitter=0.02,
    intensity_profile=IntensityProfile(0.30, (-0.16, 0.26, -0.12), 1.0),
    noise_sigma=0.018,
    speckle_strength=0.05,
)
vocab = ClassVocabulary()
first = make_domain_data(preset_domain("camus_like"), 200, seed=0)
second = make_domain_data(unity, 120, seed=0)
second_train = apply_label_removal(list(second.train), 2, 1.0, seed=0)
train_set = list(first.train) + second_train
val_set = list(first.val) + list(second.val)
test_set = list(second.test)
eligible = partially_labelled_classes(train_set)
print(f"cone ({lo},{hi}) epochs={epochs}; train {len(train_set)} test {len(test_set)}")

for p in probs:
    for seed in seeds:
        cfg = TrainConfig(epochs=epochs, batch_size=16, initial_lr=0.1, loss=LossConfig("adaptive"),
                          dropout=DropoutConfig(p, eligible), augment=AugmentConfig(), seed=seed,
                          model=UNetConfig(depth=3, base_channels=8, out_channels=4, seed=seed))
        t0 = time.perf_counter()
        model, manifest = train(cfg, train_set, val_set)
        rep = evaluate(model, test_set, vocab)
        rep_first = evaluate(model, list(first.test), vocab)
        la = rep.mean_std(class_name="LA")[0]
        la_first = rep_first.mean_std(class_name="LA")[0]
        print(f"p={p:.1f} seed {seed}: unity LA {la:.3f} (camus LA {la_first:.3f})"
              f"  [{time.perf_counter()-t0:.0f} s]", flush=True)
