"""
Dense 4-D tensors and the gradient tape that records operations on them.

A Function computes its forward pass on raw numpy arrays. When a GradientTape is
active on the current thread and any input requires a gradient, the call is
recorded on the tape; `backward` replays the tape in reverse order.
"""
import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Type, Union

import numpy as np

from config.config import DEFAULT_DTYPE
from utils.errors import NonScalarLossError, ShapeMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)

ArrayLike = Union[np.ndarray, Sequence, float, int]

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_local = threading.local()


class Tensor:
    """Dense (batch, channel, height, width) array with an optional gradient buffer"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Union[str, np.dtype]] = None,
        name: Optional[str] = None,
    ):
        if dtype is None and not isinstance(data, np.ndarray):
            dtype = DEFAULT_DTYPE
        array = np.asarray(data, dtype=dtype)
        if array.dtype not in _FLOAT_DTYPES:
            array = array.astype(DEFAULT_DTYPE)
        if array.ndim != 4:
            raise ShapeMismatchError("Tensor", "rank", 4, array.ndim)
        self.data = np.ascontiguousarray(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = True
        self.name = name

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """Copy of the values"""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError("Tensor.item", "size", 1, self.data.size)
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add `grad` into the gradient buffer, creating it on first use"""
        if grad.shape != self.data.shape:
            raise ShapeMismatchError("accumulate_grad", "shape", None, None,
                                     f"{grad.shape} vs {self.data.shape}")
        grad = grad.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    @classmethod
    def zeros(cls, shape: Sequence[int], dtype: str = DEFAULT_DTYPE, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(tuple(shape), dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def ones(cls, shape: Sequence[int], dtype: str = DEFAULT_DTYPE, requires_grad: bool = False) -> "Tensor":
        return cls(np.ones(tuple(shape), dtype=dtype), requires_grad=requires_grad)

    @classmethod
    def scalar(cls, value: float, dtype: str = DEFAULT_DTYPE) -> "Tensor":
        return cls(np.full((1, 1, 1, 1), value, dtype=dtype))

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"


class Context:
    """Scratch space a Function shares between its forward and backward passes"""

    def __init__(self):
        self.saved: Tuple[Any, ...] = ()

    def save_for_backward(self, *values: Any) -> None:
        self.saved = values


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward(ctx, *arrays, **kwargs)` returning a numpy array and
    `backward(ctx, grad)` returning one gradient (or None) per tensor input.
    """

    @staticmethod
    def forward(ctx: Context, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs: Any) -> Tensor:
        """Run the forward pass and record it on the active tape when gradients are needed"""
        ctx = Context()
        out_data = cls.forward(ctx, *(t.data for t in tensors), **kwargs)
        tape = current_tape()
        requires_grad = tape is not None and any(t.requires_grad for t in tensors)
        out = Tensor(out_data, requires_grad=requires_grad)
        if requires_grad:
            out.is_leaf = False
            tape.record(cls, ctx, tensors, out)
        return out


class TapeEntry(NamedTuple):
    function: Type[Function]
    ctx: Context
    inputs: Tuple[Tensor, ...]
    output: Tensor


class GradientTape:
    """Ordered record of executed operations, confined to the thread that opened it"""

    def __init__(self):
        self.entries: List[TapeEntry] = []

    def record(self, function: Type[Function], ctx: Context, inputs: Sequence[Tensor], output: Tensor) -> None:
        self.entries.append(TapeEntry(function, ctx, tuple(inputs), output))

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> "GradientTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _tape_stack().pop()


def _tape_stack() -> List[Optional[GradientTape]]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def current_tape() -> Optional[GradientTape]:
    """The innermost active tape of this thread, or None"""
    stack = _tape_stack()
    return stack[-1] if stack else None


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording inside an active tape"""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def backward(loss: Tensor, tape: GradientTape) -> None:
    """
    Populate `grad` of every requires_grad leaf reachable from `loss`

    Args:
        loss: Scalar (1x1x1x1) tensor produced under `tape`
        tape: Tape that recorded the computation
    """
    if loss.shape != (1, 1, 1, 1):
        raise NonScalarLossError(f"backward needs a 1x1x1x1 loss, got {loss.shape}")
    if not loss.requires_grad:
        logger.debug("backward on a loss without gradient: nothing to do")
        return

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.accumulate_grad(seed)
        return

    pending = {id(loss): seed}
    for entry in reversed(tape.entries):
        grad_out = pending.pop(id(entry.output), None)
        if grad_out is None:
            continue
        input_grads = entry.function.backward(entry.ctx, grad_out)
        for tensor, grad in zip(entry.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.accumulate_grad(grad)
            elif id(tensor) in pending:
                pending[id(tensor)] = pending[id(tensor)] + grad
            else:
                pending[id(tensor)] = grad
