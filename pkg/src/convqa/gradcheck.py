"""Central finite-difference gradient checking.

The numeric side only ever calls the forward function, so it stays an
independent oracle for the reverse-mode engine.  Checks should run in
float64; float32 round-off swamps the 1e-4 tolerance.
"""

import numpy as np

from .autodiff import Graph, backward, zero_grads

DEFAULT_STEP = 1e-6
DEFAULT_TOL = 1e-4


def relative_error(got, want):
    """|got - want| / max(1, |want|)."""
    return abs(got - want) / max(1.0, abs(want))


def numeric_gradient(fn, tensor, index, step=DEFAULT_STEP):
    """Central difference of the scalar fn() w.r.t. one tensor coordinate."""
    original = tensor.data[index]
    tensor.data[index] = original + step
    upper = fn().item()
    tensor.data[index] = original - step
    lower = fn().item()
    tensor.data[index] = original
    return (upper - lower) / (2.0 * step)


def check_gradients(fn, tensors, step=DEFAULT_STEP, tol=DEFAULT_TOL,
                    sample=None, rng=None):
    """Compare reverse-mode gradients of fn() against central differences.

    fn must rebuild the same scalar-valued computation on every call (any
    internal randomness re-seeded).  tensors are the requires_grad leaves to
    check; with ``sample`` set, only that many random coordinates per tensor
    are probed (all coordinates otherwise).  Returns a list of
    (tensor_position, index, analytic, numeric, error) tuples for failures;
    empty means the check passed.
    """
    zero_grads(tensors)
    with Graph():
        loss = fn()
        backward(loss)
    if sample is not None and rng is None:
        rng = np.random.default_rng(0)
    failures = []
    for pos, tensor in enumerate(tensors):
        size = tensor.data.size
        if sample is None or sample >= size:
            flat_indices = range(size)
        else:
            flat_indices = rng.choice(size, size=sample, replace=False)
        for flat in flat_indices:
            index = np.unravel_index(flat, tensor.data.shape)
            numeric = numeric_gradient(fn, tensor, index, step)
            analytic = 0.0 if tensor.grad is None else float(tensor.grad[index])
            err = relative_error(analytic, numeric)
            if err > tol:
                failures.append((pos, index, analytic, numeric, err))
    return failures
