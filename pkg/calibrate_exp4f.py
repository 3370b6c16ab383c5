"""Exp4 probe F: preset-C domains, denser LA supervision (bigger first
domain + more epochs) to survive the p=0.9 corner."""
import sys
import time

from partseg.dropout import DropoutConfig, partially_labelled_classes
from partseg.experiments import make_domain_data
from partseg.losses import LossConfig
from partseg.metrics import evaluate
from partseg.model import UNetConfig
from partseg.synth import AugmentConfig, apply_label_removal, preset_domain
from partseg.train import TrainConfig, train
from partseg.types import ClassVocabulary

epochs = int(sys.argv[1])
n_first, n_second = int(sys.argv[2]), int(sys.argv[3])
probs = [float(x) for x in sys.argv[4].split(",")]
seeds = [int(x) for x in sys.argv[5].split(",")]

vocab = ClassVocabulary()
first = make_domain_data(preset_domain("camus_like"), n_first, seed=0)
second = make_domain_data(preset_domain("unity_like"), n_second, seed=0)
second_train = apply_label_removal(list(second.train), 2, 1.0, seed=0)
train_set = list(first.train) + second_train
val_set = list(first.val) + list(second.val)
test_set = list(second.test)
eligible = partially_labelled_classes(train_set)
print(f"epochs={epochs} n={n_first}/{n_second}; train {len(train_set)} test {len(test_set)}", flush=True)

for p in probs:
    for seed in seeds:
        cfg = TrainConfig(epochs=epochs, batch_size=16, initial_lr=0.1, loss=LossConfig("adaptive"),
                          dropout=DropoutConfig(p, eligible), augment=AugmentConfig(), seed=seed,
                          model=UNetConfig(depth=3, base_channels=8, out_channels=4, seed=seed))
        t0 = time.perf_counter()
        model, manifest = train(cfg, train_set, val_set)
        la = evaluate(model, test_set, vocab).mean_std(class_name="LA")[0]
        la_first = evaluate(model, list(first.test), vocab).mean_std(class_name="LA")[0]
        print(f"p={p:.1f} seed {seed}: unity LA {la:.3f} (camus LA {la_first:.3f})"
              f"  [{time.perf_counter()-t0:.0f} s]", flush=True)
