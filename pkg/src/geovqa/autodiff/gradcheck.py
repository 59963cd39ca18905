"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import UsageError
from .tensor import Tensor


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-4) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    Returns the max over coordinates of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    The function is evaluated twice up front; a value mismatch flags a
    non-deterministic ``f``, which the comparison cannot handle.
    """
    v1 = f(x)
    v2 = f(x)
    if v1.data.size != 1:
        raise UsageError(f"grad_check needs a scalar-valued function, got shape {v1.shape}")
    if not np.array_equal(v1.data, v2.data):
        raise UsageError("grad_check: f is not deterministic (two evaluations disagree)")

    x.zero_grad()
    was_leaf_grad = x.requires_grad
    x.requires_grad = True
    try:
        loss = f(x)
        loss.backward()
        analytic = np.array(x.grad) if x.grad is not None else np.zeros_like(x.data)
    finally:
        x.requires_grad = was_leaf_grad
        x.zero_grad()

    worst = 0.0
    flat = x.data.reshape(-1)
    gflat = analytic.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x).item()
        flat[i] = orig - eps
        down = f(x).item()
        flat[i] = orig
        numeric = (up - down) / (2.0 * eps)
        denom = max(1e-8, abs(gflat[i]) + abs(numeric))
        worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
