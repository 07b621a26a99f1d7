from collections import OrderedDict
from typing import Dict, Iterable, Tuple

import numpy as np

from engine.tensor import Tensor


class ModelParams(OrderedDict):
    """Named, ordered collection of parameter tensors"""

    @classmethod
    def from_named(cls, named: Iterable[Tuple[str, Tensor]]) -> "ModelParams":
        params = cls()
        for name, tensor in named:
            if name in params:
                raise KeyError(f"duplicate parameter name: {name}")
            params[name] = tensor
        return params

    def trainable(self) -> "ModelParams":
        return ModelParams((name, t) for name, t in self.items() if t.requires_grad)

    def count(self) -> int:
        """Total number of scalar values"""
        return sum(t.size for t in self.values())

    def zero_grad(self) -> None:
        for tensor in self.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: t.grad for name, t in self.items() if t.grad is not None}

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copies of every value, e.g. to compare before/after an update"""
        return {name: t.data.copy() for name, t in self.items()}
