"""Calibration for generalization and ablation-direction criteria (throwaway)."""
import sys, time
sys.path.insert(0, "src")

from aibnet.config import Config, set_key
from aibnet.data import KernelRanges, load_pairs, make_dataset, make_synthetic_sharp
from aibnet.evaluate import baseline_psnr, evaluate_model
from aibnet.network import build_model
from aibnet.training import StageTrainer
from aibnet.sweep import run_sweep, format_table
from pathlib import Path
import shutil

RANGES = KernelRanges(length=(3, 9), kernel_size=15, curvature=(-1.0, 1.0),
                      noise_sigma=(0.0, 0.002))

def cfg_with(**kw):
    cfg = Config()
    for k, v in kw.items():
        set_key(cfg, k, v)
    return cfg

root = Path("/tmp/calib_gen")
shutil.rmtree(root, ignore_errors=True)
root.mkdir(parents=True)

# --- criterion 6 scale: 200 pairs, held-out improvement ---
make_synthetic_sharp(root / "src", 24, size=64, seed=1)
make_dataset(root / "src", root / "ds", count=200, ranges=RANGES, seed=1)
train = load_pairs(root / "ds", "train")
test = load_pairs(root / "ds", "test")
print(f"pairs: {len(train)} train, {len(test)} test", flush=True)
base = baseline_psnr(test)
print("baseline held-out PSNR:", base, flush=True)

cfg = cfg_with(base_channels=16, blocks_per_level=2, sub_decoders=2, enc_blocks_per_level=1,
               batch=4, patch=64, total_iters=850, lr_init=4e-4, lr_final=1e-6,
               ckpt_every=10**9, log_every=50, seed=1)
budgets = [100, 400, 350]
model = build_model(cfg.model, cfg.train.seed)
t0 = time.time()
for stage in (0, 1, 2):
    ts = time.time()
    StageTrainer(model, cfg, stage, train, root / "run", budget=budgets[stage]).run()
    print(f"stage {stage} done in {time.time()-ts:.0f}s", flush=True)
    if stage >= 1:
        s = evaluate_model(model, test, stage=stage, split="test")
        print(f"  held-out PSNR (stage {stage}): {s['mean_psnr']:.2f} (+{s['mean_psnr']-base:.2f})", flush=True)
print(f"gen total {time.time()-t0:.0f}s", flush=True)

# --- criterion 7 scale: component direction + mask sweep ---
root2 = Path("/tmp/calib_abl")
shutil.rmtree(root2, ignore_errors=True)
root2.mkdir(parents=True)
make_synthetic_sharp(root2 / "src", 12, size=48, seed=2)
make_dataset(root2 / "src", root2 / "ds", count=24, ranges=KernelRanges(length=(3, 9), kernel_size=11, curvature=(-1, 1), noise_sigma=(0.0, 0.005)), seed=2)
tr2 = load_pairs(root2 / "ds", "train")
te2 = load_pairs(root2 / "ds", "test")
print("abl baseline held-out:", baseline_psnr(te2), flush=True)

cfg7 = cfg_with(base_channels=8, blocks_per_level=1, sub_decoders=1, enc_blocks_per_level=1,
                batch=4, patch=32, total_iters=450, lr_init=1e-3, lr_final=1e-6,
                ckpt_every=10**9, log_every=50, seed=2)
t0 = time.time()
rows = run_sweep("components", cfg7, tr2, te2, root2 / "components")
print(format_table(rows), flush=True)
print(f"components total {time.time()-t0:.0f}s", flush=True)
