"""Gradient-based optimizers over named parameter dictionaries.

State lives in plain dicts of arrays keyed like the parameters, so it
serializes into checkpoints and restores exactly.
"""

from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Optimizer:
    kind = "base"

    def __init__(self, learning_rate: float):
        if learning_rate < 0.0:
            raise ValueError("learning rate must be >= 0")
        self.learning_rate = float(learning_rate)

    def step(self, params: dict, grads: dict) -> None:
        raise NotImplementedError

    def state_arrays(self) -> dict:
        """Flat name -> array map for checkpointing."""
        return {}

    def load_state_arrays(self, arrays: dict) -> None:
        pass


class Sgd(Optimizer):
    kind = "sgd"

    def step(self, params, grads):
        for name, g in grads.items():
            params[name] -= self.learning_rate * g


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, learning_rate: float, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        super().__init__(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correct1 = 1.0 - b1 ** self.t
        correct2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            params[name] -= self.learning_rate * (m / correct1) / (
                np.sqrt(v / correct2) + self.eps
            )

    def state_arrays(self):
        out = {"t": np.array(self.t, dtype=np.int64)}
        for name, arr in self.m.items():
            out[f"m/{name}"] = arr
        for name, arr in self.v.items():
            out[f"v/{name}"] = arr
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["t"])
        self.m = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("m/")}
        self.v = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("v/")}


def make_optimizer(kind: str, learning_rate: float) -> Optimizer:
    if kind == "adam":
        return Adam(learning_rate)
    if kind == "sgd":
        return Sgd(learning_rate)
    raise ValueError(f"unknown optimizer {kind!r}")
