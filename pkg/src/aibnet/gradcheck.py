"""Analytic-versus-numeric gradient verification.

Every check runs in double precision and compares backpropagated gradients
against central finite differences (step 1e-5) of the same scalar
objective. Parameters are randomly perturbed away from their init values
first so that degenerate points (zero scalars, zero biases) do not mask
wrong gradients.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from .blocks_frequency import Decoupler, HFSBlock
from .blocks_spatial import SFDHBlock, SFEM
from .config import Config, LossConfig, ModelConfig
from .losses import charbonnier, edge_loss, frequency_loss, total_loss
from .network import build_model

TARGETS = ("sfem", "sfdh", "hfs", "decoupler", "losses", "end2end")

FD_STEP = 1e-5
_REL_FLOOR = 1e-3
END2END_SAMPLES = 20


@dataclass
class GradReport:
    target: str
    groups: dict = field(default_factory=dict)  # parameter group -> max relative error

    @property
    def max_error(self) -> float:
        return max(self.groups.values()) if self.groups else 0.0

    def passed(self, tolerance: float) -> bool:
        return all(err < tolerance for err in self.groups.values())

    def lines(self, tolerance: float):
        out = []
        for name, err in sorted(self.groups.items()):
            verdict = "ok" if err < tolerance else "FAIL"
            out.append(f"{self.target:10s} {name:40s} {err:.3e}  {verdict}")
        return out


def _rel_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    diff = (analytic - numeric).abs()
    denom = torch.clamp(analytic.abs() + numeric.abs(), min=_REL_FLOOR)
    return float((diff / denom).max())


def _perturb_parameters(module: torch.nn.Module, rng: np.random.Generator) -> None:
    with torch.no_grad():
        for p in module.parameters():
            noise = torch.from_numpy(rng.uniform(-0.3, 0.3, size=tuple(p.shape)))
            p.add_(noise.to(p.dtype))


def _fd_entry(objective, param: torch.Tensor, index: int, step: float = FD_STEP) -> float:
    flat = param.data.reshape(-1)
    orig = flat[index].item()
    with torch.no_grad():
        flat[index] = orig + step
        plus = objective()
        flat[index] = orig - step
        minus = objective()
        flat[index] = orig
    return (plus - minus) / (2.0 * step)


def _check_module(module: torch.nn.Module, x: torch.Tensor, seed: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    projection = torch.from_numpy(rng.standard_normal(tuple(module(x).shape)))

    def objective() -> float:
        return float((module(x) * projection).sum())

    loss = (module(x) * projection).sum()
    module.zero_grad()
    loss.backward()

    groups = {}
    for name, param in module.named_parameters():
        numeric = torch.zeros_like(param).reshape(-1)
        for i in range(param.numel()):
            numeric[i] = _fd_entry(objective, param, i)
        groups[name] = _rel_error(param.grad.reshape(-1), numeric)
    return groups


def _check_losses(seed: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    pred = torch.from_numpy(rng.uniform(0.1, 0.9, size=(1, 3, 4, 4))).requires_grad_(True)
    target = torch.from_numpy(rng.uniform(0.1, 0.9, size=(1, 3, 4, 4)))
    cfg = LossConfig()
    cases = {
        "charbonnier": lambda p: charbonnier(p, target, cfg.epsilon),
        "edge": lambda p: edge_loss(p, target, cfg.epsilon),
        "frequency": lambda p: frequency_loss(p, target),
        "total": lambda p: total_loss(p, target, cfg)[0],
    }
    groups = {}
    for name, fn in cases.items():
        if pred.grad is not None:
            pred.grad = None
        fn(pred).backward()
        analytic = pred.grad.detach().clone().reshape(-1)

        def objective() -> float:
            with torch.no_grad():
                return float(fn(pred))

        numeric = torch.zeros_like(analytic)
        for i in range(pred.numel()):
            numeric[i] = _fd_entry(objective, pred, i)
        groups[name] = _rel_error(analytic, numeric)
    return groups


def _check_end2end(seed: int) -> dict:
    cfg = Config()
    cfg.model = ModelConfig(base_channels=4, blocks_per_level=1, sub_decoders=1,
                            enc_blocks_per_level=1)
    model = build_model(cfg.model, seed, precision="float64")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    _perturb_parameters(model, rng)
    x = torch.from_numpy(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)))
    target = torch.from_numpy(rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)))

    def objective() -> float:
        with torch.no_grad():
            return float(total_loss(model(x)[0], target, cfg.loss)[0])

    model.zero_grad()
    total_loss(model(x)[0], target, cfg.loss)[0].backward()

    named = [(n, p) for n, p in model.named_parameters()]
    picks = []
    for _ in range(END2END_SAMPLES):
        name, param = named[int(rng.integers(0, len(named)))]
        picks.append((name, param, int(rng.integers(0, param.numel()))))
    groups = {}
    for name, param, index in picks:
        numeric = _fd_entry(objective, param, index)
        analytic = 0.0 if param.grad is None else float(param.grad.reshape(-1)[index])
        err = abs(analytic - numeric) / max(_REL_FLOOR, abs(analytic) + abs(numeric))
        groups[name] = max(groups.get(name, 0.0), err)
    return groups


def grad_check(target: str, seed: int = 0) -> GradReport:
    if target not in TARGETS:
        raise ValueError(f"unknown gradcheck target {target!r}; choose from {TARGETS}")
    torch.manual_seed(seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    x = torch.from_numpy(rng.uniform(-1.0, 1.0, size=(1, 4, 3, 3)))

    if target == "losses":
        groups = _check_losses(seed)
    elif target == "end2end":
        groups = _check_end2end(seed)
    else:
        if target == "sfem":
            module = SFEM(4)
        elif target == "sfdh":
            module = SFDHBlock(4)
        elif target == "hfs":
            module = HFSBlock(4)
        else:
            module = Decoupler(4)
        module = module.double()
        _perturb_parameters(module, rng)
        groups = _check_module(module, x, seed)
    return GradReport(target, groups)
