"""Float64 finite-difference checks for every op and the composed model paths."""

from __future__ import annotations

import numpy as np

from . import objective
from .diffcore import Tensor, check_gradients, ops
from .diffcore.suite import op_errors
from .model import ModelBundle
from .saliency import selected_logit

TOLERANCE = 1e-4


def _max(errs: dict) -> float:
    return max(errs.values())


def composed_errors(seed: int = 0, max_coords: int = 8) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    model = ModelBundle.create(seed=seed, dtype=np.float64)
    out = {}

    params = model.set_trainable(("encoder.", "lstm.", "attn.", "critic."))
    w = rng.standard_normal((3, 4, model.channels, model.window.win_len))

    def milc_loss():
        z, c, _ = model.embed(w)
        return objective.infonce_loss(objective.critic_scores(model.phi(z), c), z.shape[1])

    out["milc_loss"] = _max(check_gradients(milc_loss, params, max_coords=max_coords, rng=rng))

    params = model.set_trainable(("encoder.", "lstm.", "attn.", "head."))
    x = rng.standard_normal((2, model.channels, 50))
    wx, y = model.windows(x), np.array([0, 1])
    out["classifier_loss"] = _max(check_gradients(lambda: ops.cross_entropy(model.logits(wx), y), params, max_coords=max_coords, rng=rng))

    model.set_trainable(())
    xs = Tensor(rng.standard_normal((model.channels, 47)), requires_grad=True)
    out["saliency_logit"] = _max(check_gradients(lambda: selected_logit(model, xs, 1)[0], [xs], max_coords=4 * max_coords, rng=rng))
    return out


def full_suite(seed: int = 0) -> dict[str, float]:
    """Max relative error per op, then per composed path."""
    return {**op_errors(seed), **composed_errors(seed)}
