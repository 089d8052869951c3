"""Minimal parameter-container base class.

Modules register child modules and parameters in attribute order, which
fixes a deterministic traversal for naming, checkpointing and the
optimizer.  Construction mutates; after that a module is frozen during
forward passes and only `Parameter.grad` changes while training.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .tensor import Parameter


class Module:
    def __init__(self):
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, (Module, Parameter)):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register(self, name: str, child):
        """Attach a child under an explicit name (for dynamic layouts)."""
        setattr(self, name, child)
        return child

    def named_parameters(self, prefix: str = ""):
        for name, child in self._children.items():
            path = f"{prefix}.{name}" if prefix else name
            if isinstance(child, Parameter):
                yield path, child
            else:
                yield from child.named_parameters(path)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def bind_names(self, prefix: str = ""):
        """Stamp each parameter's `name` with its dotted path."""
        seen = set()
        for path, p in self.named_parameters(prefix):
            if path in seen:
                raise DataError(f"duplicate parameter name {path!r}")
            seen.add(path)
            p.name = path
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise DataError(
                f"state mismatch: missing {missing[:4]}, unexpected {extra[:4]}"
            )
        for name, p in own.items():
            arr = np.asarray(state[name])
            if tuple(arr.shape) != tuple(p.data.shape):
                raise DataError(
                    f"shape mismatch for {name}: checkpoint {tuple(arr.shape)} "
                    f"vs model {tuple(p.data.shape)}"
                )
            p.data = np.ascontiguousarray(arr.astype(p.data.dtype))

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError
