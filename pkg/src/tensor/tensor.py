# src/tensor/tensor.py
import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.domain.errors import ClipMambaError, DTypeError, ShapeError, TapeError
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

MAX_RANK = 5
DTYPES = {"f32": np.float32, "f64": np.float64}
_NUMPY_TO_NAME = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

Scalar = Union[int, float]


def dtype_name(array: np.ndarray) -> str:
    """Return the f32/f64 name of a numpy array's dtype."""
    try:
        return _NUMPY_TO_NAME[array.dtype]
    except KeyError:
        raise DTypeError(f"unsupported dtype {array.dtype}")


class Tensor:
    """Dense row-major array, optionally recorded on a gradient tape."""

    __slots__ = ("data", "tape", "tape_id")

    def __init__(self, data: Any, dtype: Optional[str] = None, tape: Optional["Tape"] = None,
                 tape_id: Optional[int] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            if dtype not in DTYPES:
                raise DTypeError(f"unknown dtype '{dtype}'")
            array = np.asarray(data, dtype=DTYPES[dtype])
        else:
            array = np.asarray(data)
            if array.dtype not in _NUMPY_TO_NAME:
                array = array.astype(np.float64)
        if array.ndim > MAX_RANK:
            raise ShapeError(f"rank {array.ndim} exceeds {MAX_RANK}")
        if any(d < 1 for d in array.shape):
            raise ShapeError(f"zero-sized dimension in shape {array.shape}")
        self.data = array
        self.tape = tape
        self.tape_id = tape_id

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> str:
        return _NUMPY_TO_NAME[self.data.dtype]

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def is_recorded(self) -> bool:
        return self.tape is not None

    def __repr__(self) -> str:
        taped = f", tape_id={self.tape_id}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{taped})"

    def __add__(self, other):
        return apply_primitive("add", [self, other])

    def __radd__(self, other):
        return apply_primitive("add", [other, self])

    def __sub__(self, other):
        return apply_primitive("sub", [self, other])

    def __rsub__(self, other):
        return apply_primitive("sub", [other, self])

    def __mul__(self, other):
        return apply_primitive("mul", [self, other])

    def __rmul__(self, other):
        return apply_primitive("mul", [other, self])

    def __truediv__(self, other):
        return apply_primitive("div", [self, other])

    def __rtruediv__(self, other):
        return apply_primitive("div", [other, self])

    def __neg__(self):
        return apply_primitive("mul", [self, -1.0])

    def __matmul__(self, other):
        return apply_primitive("matmul", [self, other])

    def __pow__(self, exponent: Scalar):
        return apply_primitive("power", [self], exponent=float(exponent))


@dataclass
class Node:
    """One tape entry: a primitive applied to recorded or constant inputs."""
    index: int
    primitive: str
    inputs: Tuple[Tensor, ...]
    attrs: Dict[str, Any]
    output: Tensor


class Tape:
    """Ordered record of primitive applications; execution order is topological order."""

    _ids = itertools.count()

    def __init__(self):
        self.id = next(Tape._ids)
        self.nodes: List[Node] = []
        self.released = False
        self._owner = threading.get_ident()

    def __len__(self) -> int:
        return len(self.nodes)

    def _check_thread(self) -> None:
        if threading.get_ident() != self._owner:
            raise TapeError(f"tape {self.id} mutated from a foreign thread")
        if self.released:
            raise TapeError(f"tape {self.id}", code=codes.TAPE_RELEASED)

    def watch(self, tensor: Tensor) -> Tensor:
        """Register a leaf value on this tape and return the recorded handle."""
        self._check_thread()
        leaf = Tensor(tensor.data, tape=self, tape_id=len(self.nodes))
        self.nodes.append(Node(len(self.nodes), "leaf", (), {}, leaf))
        return leaf

    def record(self, primitive: str, inputs: Sequence[Tensor], attrs: Dict[str, Any],
               data: np.ndarray) -> Tensor:
        self._check_thread()
        out = Tensor(data, tape=self, tape_id=len(self.nodes))
        self.nodes.append(Node(len(self.nodes), primitive, tuple(inputs), attrs, out))
        return out

    def release(self) -> None:
        """Drop every recorded node; tensors still pointing here keep their data but no history."""
        self.nodes = []
        self.released = True

    def replay(self) -> List[np.ndarray]:
        """Recompute every node from its leaves; returns the outputs in tape order."""
        env: Dict[int, np.ndarray] = {}
        outputs = []
        for node in self.nodes:
            if node.primitive == "leaf":
                env[node.index] = node.output.data
            else:
                arrays = [env[t.tape_id] if t.tape is self else t.data for t in node.inputs]
                env[node.index] = PRIMITIVES[node.primitive].forward(*arrays, **node.attrs)
            outputs.append(env[node.index])
        return outputs


@dataclass
class Primitive:
    """Forward kernel plus a vector-Jacobian rule written in terms of other primitives."""
    name: str
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., List[Optional[Tensor]]]


PRIMITIVES: Dict[str, Primitive] = {}


def register_primitive(name: str, forward: Callable, vjp: Callable) -> None:
    PRIMITIVES[name] = Primitive(name, forward, vjp)


def as_tensor(value: Any, dtype: str) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=DTYPES[dtype]))


def apply_primitive(name: str, inputs: Sequence[Any], **attrs) -> Tensor:
    """Run a primitive; the result is recorded when any input lives on a tape."""
    primitive = PRIMITIVES.get(name)
    if primitive is None:
        raise ClipMambaError(name, code=codes.UNKNOWN_PRIMITIVE)

    dtypes = {t.dtype for t in inputs if isinstance(t, Tensor)}
    if len(dtypes) > 1:
        raise DTypeError(f"{name} received {sorted(dtypes)}")
    dtype = dtypes.pop() if dtypes else "f64"
    tensors = [as_tensor(t, dtype) for t in inputs]

    tapes = {id(t.tape): t.tape for t in tensors if t.tape is not None}
    if len(tapes) > 1:
        raise TapeError(f"{name} mixes tapes {sorted(tp.id for tp in tapes.values())}")

    data = primitive.forward(*[t.data for t in tensors], **attrs)
    if tapes:
        tape = next(iter(tapes.values()))
        return tape.record(name, tensors, attrs, data)
    return Tensor(data)
