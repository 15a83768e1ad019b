"""Ablation sweeps: mask-count and component on/off comparisons at toy scale.

Each variant gets the same data, seed and iteration budget; the report lists
held-out PSNR, the delta against the first row, and the config hash the row
was produced with. A bar figure is rendered next to the TSV report.
"""

import hashlib
import json
from dataclasses import replace
from pathlib import Path

from .config import Config, ConfigError
from .evaluate import evaluate_model
from .plotting import plot_sweep
from .training import train_all_stages

SWEEP_HEADER = "row\tlabel\tpsnr_db\tdelta_db\tconfig_hash"


def config_hash(cfg: Config) -> str:
    return hashlib.sha1(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:10]


def _variants(kind: str, cfg: Config):
    letters = "abcdef"
    if kind == "masks":
        for i, n in enumerate(range(6)):
            variant = Config(model=replace(cfg.model, n_masks=n),
                             train=replace(cfg.train), loss=replace(cfg.loss))
            yield f"({letters[i]})", f"n_m={n}", variant
    elif kind == "components":
        combos = [("baseline", False, False), ("+SFEM", True, False),
                  ("+HFSBlock", False, True), ("SFEM+HFSBlock", True, True)]
        for i, (label, sfem, hfs) in enumerate(combos):
            variant = Config(model=replace(cfg.model, enable_sfem=sfem, enable_hfs=hfs),
                             train=replace(cfg.train), loss=replace(cfg.loss))
            yield f"({letters[i]})", label, variant
    else:
        raise ConfigError(f"unknown sweep kind {kind!r} (use 'masks' or 'components')")


def run_sweep(kind: str, cfg: Config, train_pairs, eval_pairs, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for row_id, label, variant in _variants(kind, cfg):
        work = out_dir / f"{kind}_{label.replace('=', '').replace('+', 'plus')}"
        model, _ = train_all_stages(variant, train_pairs, work, eval_pairs=None)
        summary = evaluate_model(model, eval_pairs, stage=variant.model.sub_decoders)
        rows.append({
            "row": row_id,
            "label": label,
            "psnr_db": summary["mean_psnr"],
            "config_hash": config_hash(variant),
        })
    base = rows[0]["psnr_db"]
    for row in rows:
        row["delta_db"] = row["psnr_db"] - base

    report = out_dir / f"sweep_{kind}.tsv"
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(f"{row['row']}\t{row['label']}\t{row['psnr_db']:.4f}\t"
                     f"{row['delta_db']:+.4f}\t{row['config_hash']}")
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    plot_sweep(rows, out_dir / f"sweep_{kind}.png", f"{kind} sweep")
    return rows


def format_table(rows) -> str:
    width = max(len(r["label"]) for r in rows)
    out = [f"{'net':4s} {'variant':{width}s} {'PSNR':>8s} {'dPSNR':>8s}  hash"]
    for r in rows:
        out.append(f"{r['row']:4s} {r['label']:{width}s} {r['psnr_db']:8.4f} "
                   f"{r['delta_db']:+8.4f}  {r['config_hash']}")
    return "\n".join(out)
