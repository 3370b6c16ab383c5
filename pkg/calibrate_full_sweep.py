"""Full exp4 validation through the real harness with the candidate config."""
import sys
import time

from partseg.experiments import ExperimentConfig, run_exp4

out = sys.argv[1]
epochs = int(sys.argv[2])
batch = int(sys.argv[3])
lr = float(sys.argv[4])
n_first = int(sys.argv[5])
n_second = int(sys.argv[6])

t0 = time.perf_counter()
cfg = ExperimentConfig(experiment="exp4", out_dir=out, image_size=64,
                       n_per_domain=n_first, n_second_domain=n_second,
                       epochs=epochs, batch_size=batch, initial_lr=lr,
                       depth=3, base_channels=8, seed=0, seeds=(0, 1, 2),
                       domains=("camus_like", "unity_like"))
res = run_exp4(cfg)
print(f"total {(time.perf_counter()-t0)/60:.1f} min")
print(f"benchmark {res.benchmark_mean:.3f}")
for p in res.probs:
    print(f"p={p:.1f}: {res.chamber_mean[p]:.3f} +- {res.chamber_std[p]:.3f}"
          f"  improvement {res.chamber_mean[p]-res.chamber_mean[0.0]:+.3f}")
inner = [round(0.1*i, 1) for i in range(1, 10)]
plateau = [res.chamber_mean[p] for p in inner]
print(f"plateau spread {max(plateau)-min(plateau):.3f}")
print(f"improve>=0.05 all: {all(res.chamber_mean[p]-res.chamber_mean[0.0] >= 0.05 for p in inner)}")
if res.wilcoxon:
    print(f"wilcoxon p0-vs-p0.5: W={res.wilcoxon.statistic:.1f} p={res.wilcoxon.p_value:.3g} ({res.wilcoxon.method})")
