"""Exp4 probe with realigned unity preset: local appearance close to camus,
domain cue carried by cone geometry and noise texture."""
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

bg = float(sys.argv[1]) if len(sys.argv) > 1 else 0.32
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 30
n_first = int(sys.argv[3]) if len(sys.argv) > 3 else 200
n_second = int(sys.argv[4]) if len(sys.argv) > 4 else 120
probs = [float(x) for x in sys.argv[5].split(",")] if len(sys.argv) > 5 else [0.0, 0.1, 0.5]
seeds = [int(x) for x in sys.argv[6].split(",")] if len(sys.argv) > 6 else [0, 1]

unity = DomainSpec(
    domain_id="unity_like",
    cone_angle_range=(50.0, 58.0),
    cone_apex_jitter=0.015,
    intensity_profile=IntensityProfile(bg, (-0.16, 0.26, -0.12), 1.0),
    noise_sigma=0.012,
    speckle_strength=0.03,
)
vocab = ClassVocabulary()
first = make_domain_data(preset_domain("camus_like"), n_first, seed=0)
second = make_domain_data(unity, n_second, seed=0)
second_train = apply_label_removal(list(second.train), 2, 1.0, seed=0)
train_set = list(first.train) + second_train
val_set = list(first.val) + list(second.val)
test_set = list(second.test)
eligible = partially_labelled_classes(train_set)
print(f"unity bg={bg} epochs={epochs} n={n_first}/{n_second}; train {len(train_set)} test {len(test_set)}")

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
