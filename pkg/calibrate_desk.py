"""Validate the desk-scale exp2 orderings and the final-experiment dropout
recovery with the calibrated presets."""
import time

from partseg.experiments import ExperimentConfig, run_exp2, run_final

t0 = time.perf_counter()
cfg2 = ExperimentConfig(experiment="exp2", out_dir="/tmp/deskval", seed=0)
res2 = run_exp2(cfg2)
for name, rep in res2.reports.items():
    row = {c: rep.mean_std("echonet_like", c)[0] for c in ("LV", "LVM", "LA")}
    fg = {d: rep.mean_foreground(d) for d in rep.domains()}
    print(f"exp2 {name:15s} echonet LV {row['LV']:.3f} LVM {row['LVM']:.3f} LA {row['LA']:.3f} | fg {fg}")
print(f"exp2 took {(time.perf_counter()-t0)/60:.1f} min", flush=True)

t1 = time.perf_counter()
cfgf = ExperimentConfig(experiment="final", out_dir="/tmp/deskval", seed=0)
resf = run_final(cfgf)
for model, row in resf.table.items():
    print(f"final {model:18s} LV {row['LV']:.3f} LVM {row['LVM']:.3f} LA {row['LA']:.3f}")
for cname, w in resf.wilcoxon.items():
    print(f"final wilcoxon {cname}: W={w.statistic:.1f} p={w.p_value:.4g} ({w.method}, n={w.n})")
print(f"final took {(time.perf_counter()-t1)/60:.1f} min")
