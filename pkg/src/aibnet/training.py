"""Progressive stage-wise training.

Stage 0 pretrains the encoder end to end through a throwaway baseline
decoder; every later stage k trains exactly sub-decoder k while the encoder
and all earlier sub-decoders stay frozen (their bytes are verified identical
before and after the stage).
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, ConfigError, TrainConfig, validate
from .data import PairedSample, crop_pair, flip_pair
from .evaluate import evaluate_pairs
from .losses import total_loss
from .network import AIBNet, SubDecoder, build_model, build_pretrain_decoder

log = logging.getLogger(__name__)

TRAIN_LOG_NAME = "train_log.csv"
TRAIN_LOG_HEADER = "stage,iter,lr,loss,charbonnier,edge,frequency"
METRICS_NAME = "metrics.csv"


class TrainingAborted(RuntimeError):
    """Raised when the loss turns non-finite; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


def cosine_lr(iteration: int, cfg: TrainConfig) -> float:
    """Cosine annealing from lr_init at 0 to lr_final at total_iters."""
    if not 0 <= iteration <= cfg.total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {cfg.total_iters}]")
    span = cfg.lr_init - cfg.lr_final
    return cfg.lr_final + 0.5 * span * (1.0 + math.cos(math.pi * iteration / cfg.total_iters))


@dataclass
class StagePlan:
    """Per-stage iteration budgets; index 0 is encoder pretraining."""

    budgets: list

    @classmethod
    def from_config(cls, cfg: TrainConfig, sub_decoders: int) -> "StagePlan":
        pre = cfg.pretrain_iters or max(1, round(cfg.pretrain_fraction * cfg.total_iters))
        if cfg.iters_per_stage > 0:
            per = cfg.iters_per_stage
        else:
            per = max(1, (cfg.total_iters - pre) // sub_decoders)
        return cls([pre] + [per] * sub_decoders)


def sample_batch(pairs, patch: int, batch: int, seed: int, stage: int, iteration: int,
                 augment: bool = True):
    """Deterministic batch of aligned, flip-augmented crops as float32
    (B, 3, patch, patch) tensors. The draw depends only on (seed, stage,
    iteration), so resumed runs see the very same batches."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, stage, iteration]))
    blurs, sharps = [], []
    for _ in range(batch):
        pair = pairs[int(rng.integers(0, len(pairs)))]
        h, w = pair.sharp.shape[:2]
        if patch > min(h, w):
            raise ConfigError(f"patch {patch} larger than image {h}x{w}")
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        sample = crop_pair(pair, top, left, patch)
        if augment:
            sample = flip_pair(sample, rng.random() < 0.5, rng.random() < 0.5)
        blurs.append(sample.blurred)
        sharps.append(sample.sharp)
    to_tensor = lambda stack: torch.from_numpy(np.stack(stack)).permute(0, 3, 1, 2).contiguous()
    return to_tensor(blurs), to_tensor(sharps)


def named_param_bytes(named_params) -> dict:
    return {name: p.detach().cpu().numpy().tobytes() for name, p in named_params}


class StageTrainer:
    """Owns the model for one training stage (single writer)."""

    def __init__(self, model: AIBNet, cfg: Config, stage: int, train_pairs,
                 out_dir, eval_pairs=None, pretrain_decoder: SubDecoder | None = None,
                 budget: int | None = None):
        if stage < 0 or stage > len(model.sub_decoders):
            raise ConfigError(f"stage {stage} out of range for {len(model.sub_decoders)} sub-decoders")
        if not train_pairs:
            raise ConfigError("empty training dataset")
        self.model = model
        self.cfg = cfg
        self.stage = stage
        self.train_pairs = train_pairs
        self.eval_pairs = eval_pairs
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        plan = StagePlan.from_config(cfg.train, len(model.sub_decoders))
        self.budget = budget if budget is not None else plan.budgets[stage]
        # the cosine horizon is this stage's budget
        self.stage_cfg = replace(cfg.train, total_iters=self.budget)
        if stage == 0:
            if pretrain_decoder is None:
                pretrain_decoder = build_pretrain_decoder(cfg.model, cfg.train.seed + 1,
                                                          cfg.train.precision)
            self.pretrain_decoder = pretrain_decoder.to(next(model.parameters()).dtype)
        else:
            self.pretrain_decoder = None
        self.start_iteration = 0
        self._optim_state = None

    # --- parameter bookkeeping -------------------------------------------

    def trainable_named_params(self):
        if self.stage == 0:
            items = [(f"encoder.{n}", p) for n, p in self.model.encoder.named_parameters()]
            items += [(f"pretrain_decoder.{n}", p) for n, p in self.pretrain_decoder.named_parameters()]
            return items
        prefix = f"sub_decoders.{self.stage - 1}."
        return [(n, p) for n, p in self.model.named_parameters() if n.startswith(prefix)]

    def frozen_named_params(self):
        trainable = {id(p) for _, p in self.trainable_named_params()}
        return [(n, p) for n, p in self.model.named_parameters() if id(p) not in trainable]

    def checkpoint_tensors(self):
        tensors = dict(self.model.named_parameters())
        if self.pretrain_decoder is not None:
            tensors.update({f"pretrain_decoder.{n}": p
                            for n, p in self.pretrain_decoder.named_parameters()})
        return tensors

    # --- forward ----------------------------------------------------------

    def forward_batch(self, blur):
        if self.stage == 0:
            _, skips = self.model.encoder(blur)
            _, out = self.pretrain_decoder(skips, skips, blur)
            return out
        with torch.no_grad():
            _, skips = self.model.encoder(blur)
            prev = skips
            for sub in self.model.sub_decoders[:self.stage - 1]:
                prev, _ = sub(prev, skips, blur)
        _, out = self.model.sub_decoders[self.stage - 1](prev, skips, blur)
        return out

    def eval_forward(self, blur):
        if self.stage == 0:
            _, skips = self.model.encoder(blur)
            _, out = self.pretrain_decoder(skips, skips, blur)
            return out
        return self.model(blur)[self.stage - 1]

    # --- resume -----------------------------------------------------------

    def restore(self, ckpt_path) -> None:
        header, tensors = load_checkpoint(ckpt_path)
        if header["stage"] != self.stage:
            raise ConfigError(f"checkpoint {ckpt_path} is for stage {header['stage']}, "
                              f"not {self.stage}")
        load_tensors_into(self.checkpoint_tensors(), tensors)
        self._optim_state = {
            name: (tensors[f"optim.{name}.m"], tensors[f"optim.{name}.v"],
                   header["optim_steps"][name])
            for name, _ in self.trainable_named_params()
            if f"optim.{name}.m" in tensors
        }
        self.start_iteration = header["iteration"]

    # --- main loop ---------------------------------------------------------

    def run(self) -> Path:
        prev_threads = torch.get_num_threads()
        prev_det = torch.are_deterministic_algorithms_enabled()
        if self.cfg.train.deterministic:
            torch.set_num_threads(1)
            torch.use_deterministic_algorithms(True)
        try:
            return self._run()
        finally:
            torch.set_num_threads(prev_threads)
            torch.use_deterministic_algorithms(prev_det)

    def _run(self) -> Path:
        cfg = self.cfg
        for _, p in self.model.named_parameters():
            p.requires_grad_(False)
        trainable = self.trainable_named_params()
        for _, p in trainable:
            p.requires_grad_(True)
        names = [n for n, _ in trainable]
        params = [p for _, p in trainable]

        frozen_before = named_param_bytes(self.frozen_named_params())

        optimizer = torch.optim.Adam(params, lr=cfg.train.lr_init,
                                     betas=(cfg.train.adam_beta1, cfg.train.adam_beta2))
        if self._optim_state is not None:
            for name, param in zip(names, params):
                if name in self._optim_state:
                    m, v, step = self._optim_state[name]
                    optimizer.state[param] = {
                        "step": torch.tensor(float(step)),
                        "exp_avg": m.to(param.dtype).clone(),
                        "exp_avg_sq": v.to(param.dtype).clone(),
                    }

        log_path = self.out_dir / TRAIN_LOG_NAME
        if not log_path.exists():
            log_path.write_text(TRAIN_LOG_HEADER + "\n", encoding="utf-8")

        periodic = []
        loss_value = float("nan")
        for it in range(self.start_iteration, self.budget):
            lr = cosine_lr(it, self.stage_cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            blur, sharp = sample_batch(self.train_pairs, cfg.train.patch, cfg.train.batch,
                                       cfg.train.seed, self.stage, it,
                                       augment=cfg.train.augment)
            dtype = next(self.model.parameters()).dtype
            blur, sharp = blur.to(dtype), sharp.to(dtype)
            optimizer.zero_grad(set_to_none=True)
            pred = self.forward_batch(blur)
            loss, parts = total_loss(pred, sharp, cfg.loss)
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                log.error("non-finite loss at stage %d iteration %d", self.stage, it)
                raise TrainingAborted(f"non-finite loss at iteration {it}", iteration=it)
            loss.backward()
            if cfg.train.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(params, cfg.train.grad_clip)
            optimizer.step()

            done = it + 1
            if done % cfg.train.log_every == 0 or done == self.budget:
                with open(log_path, "a", encoding="utf-8") as fh:
                    fh.write(f"{self.stage},{it},{lr!r},{loss_value:.8e},"
                             f"{float(parts['charbonnier'].detach()):.8e},"
                             f"{float(parts['edge'].detach()):.8e},"
                             f"{float(parts['frequency'].detach()):.8e}\n")
            if done % cfg.train.ckpt_every == 0 and done < self.budget:
                path = self.out_dir / f"ckpt-stage{self.stage}-iter{done:07d}.ckpt"
                self._save(path, done, optimizer, names, params)
                periodic.append(path)
                while len(periodic) > 2:
                    periodic.pop(0).unlink(missing_ok=True)

        frozen_after = named_param_bytes(self.frozen_named_params())
        changed = [n for n in frozen_before if frozen_before[n] != frozen_after[n]]
        if changed:
            raise RuntimeError(f"frozen parameters changed during stage {self.stage}: {changed[:5]}")

        final = self.out_dir / f"stage{self.stage}.ckpt"
        self._save(final, self.budget, optimizer, names, params)
        if self.eval_pairs:
            evaluate_pairs(self.eval_forward, self.eval_pairs, stage=self.stage,
                           iteration=self.budget, split="test",
                           csv_path=self.out_dir / METRICS_NAME)
        log.info("stage %d finished after %d iterations (loss %.6g)",
                 self.stage, self.budget, loss_value)
        return final

    def _save(self, path, iteration, optimizer, names, params):
        tensors = {n: p.detach().clone() for n, p in self.checkpoint_tensors().items()}
        steps = {}
        for name, param in zip(names, params):
            state = optimizer.state.get(param)
            if not state:
                continue
            tensors[f"optim.{name}.m"] = state["exp_avg"].detach().clone()
            tensors[f"optim.{name}.v"] = state["exp_avg_sq"].detach().clone()
            steps[name] = int(state["step"])
        save_checkpoint(path, self.cfg.to_dict(), self.stage, iteration, tensors, steps)


def load_tensors_into(target: dict, tensors: dict) -> None:
    """Copy checkpoint tensors into live parameters by name."""
    for name, param in target.items():
        if name not in tensors:
            raise ConfigError(f"checkpoint is missing tensor '{name}'")
        if tuple(tensors[name].shape) != tuple(param.shape):
            raise ConfigError(f"checkpoint tensor '{name}' has shape "
                              f"{tuple(tensors[name].shape)}, expected {tuple(param.shape)}")
        with torch.no_grad():
            param.copy_(tensors[name].to(param.dtype))


def model_from_checkpoint(path, precision: str | None = None):
    """Rebuild the model a checkpoint was saved from and load its weights."""
    header, tensors = load_checkpoint(path)
    cfg = Config.from_dict(header["config"])
    validate(cfg)
    model = build_model(cfg.model, cfg.train.seed, precision or cfg.train.precision)
    load_tensors_into(dict(model.named_parameters()), tensors)
    return model, cfg, header, tensors


def train_stage(cfg: Config, stage: int, train_pairs, out_dir, eval_pairs=None,
                init_from=None, resume_from=None):
    """Build or load the model, run one stage, return (model, final ckpt path).

    Stages >= 1 require the previous stage's checkpoint (init_from); stage 0
    starts from the seeded initialization.
    """
    validate(cfg)
    if stage > 0:
        if init_from is None and resume_from is None:
            raise ConfigError(f"stage {stage} needs the stage {stage - 1} checkpoint")
        model, prev_cfg, header, _ = model_from_checkpoint(init_from or resume_from)
        if init_from is not None and header["stage"] != stage - 1:
            raise ConfigError(f"{init_from} holds stage {header['stage']}, "
                              f"expected stage {stage - 1}")
        cfg = replace_model_section(cfg, prev_cfg)
    else:
        model = build_model(cfg.model, cfg.train.seed, cfg.train.precision)
    trainer = StageTrainer(model, cfg, stage, train_pairs, out_dir, eval_pairs=eval_pairs)
    if resume_from is not None:
        trainer.restore(resume_from)
    final = trainer.run()
    return model, final


def replace_model_section(cfg: Config, prev: Config) -> Config:
    """Architecture must come from the checkpoint; training knobs may change."""
    out = Config(model=replace(prev.model), train=replace(cfg.train), loss=replace(cfg.loss))
    validate(out)
    return out


def train_all_stages(cfg: Config, train_pairs, out_dir, eval_pairs=None):
    """Run stage 0 through stage s in sequence (used by sweeps and tests)."""
    validate(cfg)
    model = build_model(cfg.model, cfg.train.seed, cfg.train.precision)
    final = None
    for stage in range(cfg.model.sub_decoders + 1):
        trainer = StageTrainer(model, cfg, stage, train_pairs, out_dir, eval_pairs=eval_pairs)
        final = trainer.run()
    return model, final
