"""Central finite-difference checks of autograd gradients."""

import logging
from dataclasses import dataclass, field

import torch

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-3
KINK_TOLERANCE = 1e-2


@dataclass
class GradientReport:
    """
    ``worst`` is (parameter index, flat coordinate) of the largest relative
    error. ``excluded`` lists coordinates where the one-sided differences
    disagree, i.e. a hinge or a min/max switch lies within one step.
    """
    max_relative_error: float
    worst: tuple
    checked: int
    excluded: list = field(default_factory=list)

    def passed(self, tolerance=1e-4):
        return self.max_relative_error <= tolerance


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), SCALE_FLOOR)


def gradient_check(loss_fn, parameters, eps=1e-5):
    """
    Compare autograd against central differences with step ``eps``.

    ``loss_fn`` takes no arguments and returns a scalar tensor computed
    from ``parameters`` (float64 leaf tensors with ``requires_grad``).
    """
    parameters = list(parameters)
    for param in parameters:
        if param.dtype != torch.float64:
            raise ValueError('gradient checks need float64 parameters')
    loss = loss_fn()
    analytic = torch.autograd.grad(loss, parameters, allow_unused=True)
    base = float(loss)

    worst, worst_at, checked, excluded = 0.0, None, 0, []
    with torch.no_grad():
        for index, (param, grad) in enumerate(zip(parameters, analytic)):
            grad = torch.zeros_like(param) if grad is None else grad
            flat, flat_grad = param.view(-1), grad.reshape(-1)
            for k in range(flat.numel()):
                original = float(flat[k])
                flat[k] = original + eps
                plus = float(loss_fn())
                flat[k] = original - eps
                minus = float(loss_fn())
                flat[k] = original
                forward, backward = (plus - base) / eps, (base - minus) / eps
                numeric = (plus - minus) / (2 * eps)
                if abs(forward - backward) > KINK_TOLERANCE * max(1.0, abs(forward), abs(backward)):
                    excluded.append((index, k))
                    continue
                error = relative_error(float(flat_grad[k]), numeric)
                checked += 1
                if worst_at is None or error > worst:
                    worst, worst_at = error, (index, k)
    if excluded:
        logger.debug('gradient check skipped %d coordinate(s) at non-differentiable points', len(excluded))
    return GradientReport(worst, worst_at, checked, excluded)
