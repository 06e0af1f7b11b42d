"""AdamW with decoupled weight decay and named parameter groups."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import torch
from torch import nn


@dataclass
class AdamWConfig:
    learning_rate: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-6

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.epsilon <= 0 or self.weight_decay < 0:
            raise ValueError("epsilon must be > 0 and weight_decay >= 0")


@dataclass
class ParamStore:
    """Named parameters and their same-shaped gradients."""

    params: dict[str, torch.Tensor]
    grads: dict[str, torch.Tensor] = field(default_factory=dict)

    def __post_init__(self):
        for name, g in self.grads.items():
            if name not in self.params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != self.params[name].shape:
                raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape for {name!r}")

    @classmethod
    def from_module(cls, module: nn.Module) -> "ParamStore":
        params = dict(module.named_parameters())
        grads = {n: p.grad for n, p in params.items() if p.grad is not None}
        return cls(params, grads)


def adamw_step(
    store: ParamStore,
    cfg: AdamWConfig,
    step_index: int,
    state: dict[str, dict[str, torch.Tensor]],
    lr: float | None = None,
) -> ParamStore:
    """Apply one AdamW update in place. ``state`` holds first/second moments per name."""
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    lr = cfg.learning_rate if lr is None else lr
    bc1 = 1.0 - cfg.beta1 ** step_index
    bc2 = 1.0 - cfg.beta2 ** step_index
    with torch.no_grad():
        for name, p in store.params.items():
            g = store.grads.get(name)
            if g is None:
                continue
            if not torch.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            slot = state.setdefault(name, {"m": torch.zeros_like(p), "v": torch.zeros_like(p)})
            m, v = slot["m"], slot["v"]
            # decoupled decay: acts on the parameter, never enters the moments
            if cfg.weight_decay:
                p.mul_(1.0 - lr * cfg.weight_decay)
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            denom = (v / bc2).sqrt_().add_(cfg.epsilon)
            p.addcdiv_(m / bc1, denom, value=-lr)
    return store


class AdamW:
    """Stateful wrapper over :func:`adamw_step` supporting per-group learning rates.

    ``groups`` maps a group name to ``(named_parameters, learning_rate)``.
    """

    def __init__(self, groups: dict[str, tuple[Iterable[tuple[str, torch.Tensor]], float]],
                 cfg: AdamWConfig | None = None):
        self.cfg = cfg or AdamWConfig()
        self.groups: dict[str, tuple[dict[str, torch.Tensor], float]] = {}
        seen: set[int] = set()
        for gname, (named, lr) in groups.items():
            params = {}
            for n, p in named:
                if not p.requires_grad or id(p) in seen:
                    continue
                seen.add(id(p))
                params[n] = p
            self.groups[gname] = (params, lr)
        self.state: dict[str, dict[str, torch.Tensor]] = {}
        self.step_count = 0

    @classmethod
    def for_module(cls, module: nn.Module, cfg: AdamWConfig | None = None) -> "AdamW":
        cfg = cfg or AdamWConfig()
        return cls({"all": (module.named_parameters(), cfg.learning_rate)}, cfg)

    def parameters(self) -> list[torch.Tensor]:
        return [p for params, _ in self.groups.values() for p in params.values()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        for gname, (params, lr) in self.groups.items():
            grads = {n: p.grad for n, p in params.items() if p.grad is not None}
            adamw_step(
                ParamStore({f"{gname}/{n}": p for n, p in params.items()},
                           {f"{gname}/{n}": g for n, g in grads.items()}),
                self.cfg, self.step_count, self.state, lr=lr,
            )

    def state_dict(self) -> dict:
        return {"step_count": self.step_count,
                "state": {n: {k: v.clone() for k, v in s.items()} for n, s in self.state.items()}}

    def load_state_dict(self, sd: dict) -> None:
        self.step_count = int(sd["step_count"])
        self.state = {n: {k: v.clone() for k, v in s.items()} for n, s in sd["state"].items()}


def clip_grad_norm(params: Iterable[torch.Tensor], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = torch.sqrt(sum((g.detach() ** 2).sum() for g in grads)).item()
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads:
            g.mul_(scale)
    return total
