"""Finite-difference audit of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np
import torch


def grad_check(
    function: Callable[[], torch.Tensor],
    params: dict[str, torch.Tensor],
    fd_epsilon: float = 1e-6,
    max_checks_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``function`` closes over ``params`` (leaf float64 tensors with
    ``requires_grad``) and returns a scalar. The relative error per element is
    ``|a - b| / max(|a|, |b|, 1e-8)``. ``max_checks_per_param`` subsamples
    elements of large tensors with a seeded draw.
    """
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise TypeError(f"grad_check needs float64 parameters; {name!r} is {p.dtype}")
    names = list(params)
    value = function()
    if value.numel() != 1:
        raise ValueError("function must return a scalar")
    if not torch.isfinite(value):
        raise FloatingPointError("function value is not finite")
    analytic = torch.autograd.grad(value, [params[n] for n in names], allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for name, grad in zip(names, analytic):
            p = params[name]
            flat = p.view(-1)
            grad = torch.zeros_like(p) if grad is None else grad
            gflat = grad.reshape(-1)
            idx = np.arange(flat.numel())
            if max_checks_per_param is not None and idx.size > max_checks_per_param:
                idx = rng.choice(idx, size=max_checks_per_param, replace=False)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + fd_epsilon
                plus = function().item()
                flat[i] = orig - fd_epsilon
                minus = function().item()
                flat[i] = orig
                if not (np.isfinite(plus) and np.isfinite(minus)):
                    raise FloatingPointError(f"non-finite function value perturbing {name}[{i}]")
                numeric = (plus - minus) / (2 * fd_epsilon)
                a = gflat[i].item()
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst
