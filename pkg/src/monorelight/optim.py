"""Adam-style optimizer over ParamStore groups with per-group learning rates.

Frozen groups are no-ops: values, moments and step counters stay untouched,
which is what the freeze contracts of the fitting schedules rely on.
"""

from __future__ import annotations

import numpy as np

from .params import ParamStore


class Adam:
    def __init__(self, store: ParamStore, lr: dict | float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.default_lr = float(lr) if not isinstance(lr, dict) else float(lr.get("default", 1e-3))
        self.lr = dict(lr) if isinstance(lr, dict) else {}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[tuple, np.ndarray] = {}
        self.v: dict[tuple, np.ndarray] = {}
        self.steps: dict[str, int] = {}

    def group_lr(self, group: str) -> float:
        return float(self.lr.get(group, self.default_lr))

    def set_lr(self, group: str, lr: float):
        self.lr[group] = float(lr)

    def step(self, grads: dict):
        """Apply one update from {"group/array": grad} (autodiff leaf names).

        Gradients for frozen or unknown groups are ignored.
        """
        by_group: dict[str, dict[str, np.ndarray]] = {}
        for leaf_name, g in grads.items():
            group, _, arr = leaf_name.rpartition("/")
            if not group or group not in self.store.groups:
                continue
            by_group.setdefault(group, {})[arr] = g

        for group in sorted(by_group):
            if self.store.is_frozen(group):
                continue
            self.steps[group] = self.steps.get(group, 0) + 1
            t = self.steps[group]
            lr = self.group_lr(group)
            bc1 = 1.0 - self.beta1 ** t
            bc2 = 1.0 - self.beta2 ** t
            for arr_name, g in by_group[group].items():
                target = self.store.groups[group][arr_name]
                if g.shape != target.shape:
                    g = g.reshape(target.shape)
                key = (group, arr_name)
                m = self.m.get(key)
                if m is None:
                    m = np.zeros_like(target)
                    self.m[key] = m
                    self.v[key] = np.zeros_like(target)
                v = self.v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                target -= lr * update
