# src/tensor/autodiff.py
import logging
from collections import OrderedDict
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import ClipMambaError, ShapeError, TapeError
from src.tensor import ops
from src.tensor.tensor import PRIMITIVES, Tape, Tensor
from src.util import error_translator as codes

logger = logging.getLogger(__name__)


class ParamSet(Mapping):
    """Ordered, uniquely named collection of parameter tensors."""

    def __init__(self, entries: Optional[Mapping[str, Tensor]] = None):
        self._entries: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in (entries or {}).items():
            self[name] = value

    def __setitem__(self, name: str, value) -> None:
        if name in self._entries:
            raise ClipMambaError(name, code=codes.DUPLICATE_PARAMETER)
        self._entries[name] = value if isinstance(value, Tensor) else Tensor(value)

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def flat_dim(self) -> int:
        return sum(t.size for t in self._entries.values())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._entries.items()}

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0)
        return np.concatenate([t.data.reshape(-1) for t in self._entries.values()])

    def unflatten(self, vector: np.ndarray) -> "ParamSet":
        vector = np.asarray(vector)
        if vector.shape != (self.flat_dim,):
            raise ClipMambaError(f"expected {self.flat_dim} entries, got {vector.shape}",
                                 code=codes.DIMENSION_MISMATCH)
        out, offset = ParamSet(), 0
        for name, t in self._entries.items():
            chunk = vector[offset:offset + t.size].reshape(t.shape).astype(t.data.dtype)
            out[name] = Tensor(chunk)
            offset += t.size
        return out

    def detach(self) -> "ParamSet":
        return ParamSet({name: t.detach() for name, t in self._entries.items()})

    def copy(self) -> "ParamSet":
        return ParamSet({name: Tensor(t.data.copy()) for name, t in self._entries.items()})

    def watch(self, tape: Tape) -> "ParamSet":
        return ParamSet({name: tape.watch(t) for name, t in self._entries.items()})

    def select(self, names: Sequence[str]) -> "ParamSet":
        return ParamSet({name: self._entries[name] for name in names})

    def merged(self, overrides: Mapping[str, Tensor]) -> "ParamSet":
        return ParamSet({name: overrides.get(name, t) for name, t in self._entries.items()})


def grad(loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> List[Tensor]:
    """Reverse sweep over the loss's tape.

    Tensors in `wrt` that the loss does not depend on, or that live on another tape,
    receive exact zeros. With create_graph the sweep itself is recorded.
    """
    if loss.shape != ():
        raise ShapeError(f"loss has shape {loss.shape}", code=codes.NON_SCALAR_LOSS)
    tape = loss.tape
    if tape is None:
        return [ops.zeros(t.shape, t.dtype) for t in wrt]
    if tape.released:
        raise TapeError(f"tape {tape.id}", code=codes.TAPE_RELEASED)

    cotangents: Dict[int, Tensor] = {loss.tape_id: ops.ones((), loss.dtype)}
    requested = {t.tape_id for t in wrt if t.tape is tape}
    for index in range(loss.tape_id, -1, -1):
        node = tape.nodes[index]
        if node.primitive == "leaf":
            continue
        # consumed cotangents of inner nodes are freed as the sweep moves down the tape
        g = cotangents.get(index) if index in requested else cotangents.pop(index, None)
        if g is None:
            continue
        if create_graph:
            inputs, output = list(node.inputs), node.output
        else:
            inputs, output = [t.detach() for t in node.inputs], node.output.detach()
            g = g.detach()
        input_grads = PRIMITIVES[node.primitive].vjp(inputs, output, g, **node.attrs)
        for source, contribution in zip(node.inputs, input_grads):
            if contribution is None or source.tape is not tape:
                continue
            previous = cotangents.get(source.tape_id)
            cotangents[source.tape_id] = contribution if previous is None else ops.add(previous, contribution)

    results = []
    for t in wrt:
        g = cotangents.get(t.tape_id) if t.tape is tape else None
        if g is None:
            g = ops.zeros(t.shape, t.dtype)
        elif not create_graph:
            g = g.detach()
        results.append(g)
    return results


def backward(loss: Tensor, params: ParamSet, create_graph: bool = False) -> Dict[str, Tensor]:
    """dLoss/dParam for every entry of a (tape-watched) ParamSet."""
    names = list(params.keys())
    grads = grad(loss, [params[n] for n in names], create_graph=create_graph)
    return OrderedDict(zip(names, grads))


def value_and_grad(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet) -> Tuple[float, Dict[str, Tensor]]:
    """Loss value and detached gradients; the tape is released before returning."""
    tape = Tape()
    try:
        watched = params.watch(tape)
        loss = loss_fn(watched)
        return loss.item(), backward(loss, watched)
    finally:
        tape.release()


def hvp(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product as the gradient of <grad L, v>."""
    v = np.asarray(v)
    if v.shape != (params.flat_dim,):
        raise ClipMambaError(f"v has shape {v.shape}, parameters have {params.flat_dim} entries",
                             code=codes.DIMENSION_MISMATCH)
    directions = params.unflatten(v.copy())
    tape = Tape()
    try:
        watched = params.watch(tape)
        loss = loss_fn(watched)
        grads = grad(loss, list(watched.values()), create_graph=True)

        inner = None
        for g, direction in zip(grads, directions.values()):
            term = ops.reduce_sum(ops.mul(g, direction))
            inner = term if inner is None else ops.add(inner, term)
        if inner is None:
            return np.zeros(0)
        second = grad(inner, list(watched.values()))
        return np.concatenate([g.data.reshape(-1) for g in second])
    finally:
        tape.release()


def flat_grad(loss_fn: Callable[[ParamSet], Tensor], params: ParamSet) -> np.ndarray:
    _, grads = value_and_grad(loss_fn, params)
    return np.concatenate([g.data.reshape(-1) for g in grads.values()])
