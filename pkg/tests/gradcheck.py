"""Central finite-difference gradient oracle shared by the test suite.

Perturbs every scalar parameter in place and re-evaluates the loss, so it
is independent of the backward pass it checks.
"""

import numpy as np

from dialret.encoder import loss_and_gradients


def finite_difference_gradients(model, batch, step=1e-5):
    grads = {}
    for name, tensor in model.trainable_tensors().items():
        grad = np.zeros_like(tensor)
        flat = tensor.ravel()
        grad_flat = grad.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            loss_plus = loss_and_gradients(model, batch)[0]
            flat[i] = original - step
            loss_minus = loss_and_gradients(model, batch)[0]
            flat[i] = original
            grad_flat[i] = (loss_plus - loss_minus) / (2.0 * step)
        grads[name] = grad
    return grads


def max_relative_error(analytic, numeric, floor=1e-5):
    """Worst-case |a - n| / max(|a|, |n|, floor) over all tensors."""
    worst = 0.0
    for name in analytic:
        diff = np.abs(analytic[name] - numeric[name])
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric[name])), floor)
        worst = max(worst, float((diff / denom).max()))
    return worst
