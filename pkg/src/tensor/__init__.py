from src.tensor import primitives  # noqa: F401  registers the primitive table
from src.tensor.tensor import Tape, Tensor, apply_primitive
from src.tensor.autodiff import ParamSet, backward, grad, hvp, value_and_grad

__all__ = ["Tape", "Tensor", "apply_primitive", "ParamSet", "backward", "grad", "hvp", "value_and_grad"]
