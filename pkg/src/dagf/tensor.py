"""Dense tensors with reverse-mode differentiation.

A `Tensor` wraps a numpy array (float32 storage by default, float64 when
a caller promotes the whole computation, e.g. for gradient checks).
Every differentiable op records its parents and a backward closure on the
output tensor; `Tensor.backward()` walks that implicit graph once in
reverse topological order, accumulating gradients additively at fan-out
nodes.  Ops are pure: they never mutate their inputs, and identical
inputs produce bitwise-identical outputs.

Image-like data uses the NCHW convention throughout (batch, channels,
rows, columns).
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import GraphError

# Recording state is per-thread: concurrent inference workers each toggle
# their own flag, so one thread's no_grad cannot poison another's.
_tls = threading.local()


def grad_enabled() -> bool:
    return getattr(_tls, "grad_enabled", True)


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        self._prev = grad_enabled()
        _tls.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _tls.grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, np.ndarray):
            arr = data
            if dtype is not None and arr.dtype != dtype:
                arr = arr.astype(dtype)
            elif arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(np.float32)
        else:
            arr = np.asarray(data, dtype=dtype or np.float32)
        self.data = np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, dtype=np.float32):
        return Tensor(np.zeros(shape, dtype=dtype))

    @staticmethod
    def ones(shape, dtype=np.float32):
        return Tensor(np.ones(shape, dtype=dtype))

    @staticmethod
    def from_numpy(arr):
        return Tensor(np.asarray(arr))

    # -- inspection -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        """The underlying array (a defensive copy)."""
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name})"

    # -- graph ----------------------------------------------------------------

    def detach(self):
        return Tensor(self.data)

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def backward(self):
        """Fill leaf gradients with d(self)/d(leaf).

        Requires a scalar (single-element) tensor.  The reverse walk
        visits each recorded node exactly once; gradients meeting at
        fan-out nodes add.  Intermediate gradients live only for the
        duration of the walk; leaves (parameters and grad-requiring
        inputs) accumulate into `.grad`, so repeated backward calls sum,
        as do two disjoint forward passes sharing a parameter.
        """
        if self.data.size != 1:
            raise GraphError(
                f"backward requires a scalar loss, got shape {tuple(self.shape)}"
            )
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        flowing = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    accumulate(node, g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._backward is None:
                    accumulate(parent, pg)
                elif id(parent) in flowing:
                    flowing[id(parent)] = flowing[id(parent)] + pg
                else:
                    flowing[id(parent)] = pg

    # -- operator sugar (strict same-shape semantics) ---------------------------

    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.mul_scalar(self, float(other))

    def __rmul__(self, other):
        from . import ops

        return ops.mul_scalar(self, float(other))

    def __neg__(self):
        from . import ops

        return ops.mul_scalar(self, -1.0)


class Parameter(Tensor):
    """A named trainable tensor with a persistently allocated gradient.

    `name` is stamped by `Module.bind_names` as a dotted path unique
    within a model.  `decay` marks whether decoupled weight decay applies
    (False for biases and norm scalars).
    """

    __slots__ = ("name", "decay")

    def __init__(self, data, name="", decay=True):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.decay = decay
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name or '<unnamed>'}, shape={tuple(self.shape)})"


def record(out: Tensor, parents, backward_fn):
    """Attach graph metadata to a freshly created op output.

    `backward_fn(g)` receives the output gradient and returns one
    gradient array per parent (None for parents that don't need one).
    Recording is skipped entirely when grad mode is off or no parent
    requires grad, leaving `out` a plain constant tensor.
    """
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def accumulate(t: Tensor, g: np.ndarray):
    """Add a gradient contribution into `t.grad`, matching t's dtype."""
    if not t.requires_grad:
        return
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    t._ensure_grad()
    t.grad += g.reshape(t.data.shape)
