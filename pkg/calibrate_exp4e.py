"""Exp4 probe E: wide second-domain angle range overlapping the first at one
end; most samples separable (shortcut target), overlap bridges transfer."""
import sys
import time

from partseg.dropout import DropoutConfig, partially_labelled_classes
from partseg.experiments import make_domain_data
from partseg.losses import LossConfig
from partseg.metrics import evaluate
from partseg.model import UNetConfig
from partseg.synth import AugmentConfig, DomainSpec, IntensityProfile, apply_label_removal, preset_domain
from partseg.train import TrainConfig, train
from partseg.types import ClassVocabulary

lo, hi = float(sys.argv[1]), float(sys.argv[2])
epochs = int(sys.argv[3])
n_first, n_second = int(sys.argv[4]), int(sys.argv[5])
probs = [float(x) for x in sys.argv[6].split(",")]
seeds = [int(x) for x in sys.argv[7].split(",")]

unity = DomainSpec(
    domain_id="unity_like",
    cone_angle_range=(lo, hi),
    cone_apex_jitter=0.02,
    intensity_profile=IntensityProfile(0.30, (-0.16, 0.26, -0.12), 1.0),
    noise_sigma=0.018,
    speckle_strength=0.05,
)
vocab = ClassVocabulary()
first = make_domain_data(preset_domain("camus_like"), n_first, seed=0)
second = make_domain_data(unity, n_second, seed=0)
second_train = apply_label_removal(list(second.train), 2, 1.0, seed=0)
train_set = list(first.train) + second_train
val_set = list(first.val) + list(second.val)
test_set = list(second.test)
eligible = partially_labelled_classes(train_set)
print(f"unity cone ({lo},{hi}) epochs={epochs} n={n_first}/{n_second}; "
      f"train {len(train_set)} test {len(test_set)}", flush=True)

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
