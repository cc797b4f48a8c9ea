"""One optimisation step of each training method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffmath as dm
from .. import ot
from ..mi import mi_surrogate
from .config import TrainConfig
from .losses import classification_loss, reconstruction_loss
from .model import Model


class StepError(ValueError):
    pass


@dataclass(frozen=True)
class StepRecord:
    L_c: float
    L_wb: float = float("nan")
    L_aux: float = float("nan")  # L_r for WBAE, the MI surrogate for WBMI
    bary_iters: int = 0


def _values(batches):
    return [np.asarray(b, dtype=np.float64) for b in batches]


def compute_barycenter(model: Model, batches, config: TrainConfig, seed) -> ot.BarycenterResult:
    """Barycenter of the current (detached) features of every domain.

    With equal batch sizes the support update uses exact assignment plans;
    otherwise entropic plans at ``config.bary_eps``.
    """
    feats = [model.features(b) for b in batches]
    sizes = {f.shape[0] for f in feats}
    k = min(sizes)
    eps = None if len(sizes) == 1 else config.bary_eps
    return ot.free_support_barycenter(feats, k=k, eps=eps, seed=seed)


def _wb_term(model, batches, feats, config, seed):
    bary = compute_barycenter(model, batches, config, seed)
    loss = ot.barycenter_loss(
        feats, bary.measure, config.epsilon, n_iter=config.unroll, bindings=model.params,
        tol=config.sinkhorn_tol, max_iter=config.sinkhorn_max_iter,
    )
    return loss, len(bary.objective_trace)


def _grads(node: dm.Node, model: Model, ids) -> dict:
    _, g = dm.value_and_grad(node, model.params)
    return {k: g[k] if k in g else np.zeros_like(model.params[k]) for k in ids}


def _apply(model: Model, optimizer, grads: dict) -> None:
    model.params = optimizer.step(model.params, grads)


def erm_step(model: Model, optimizer, batches, labels, config: TrainConfig, seed=0) -> StepRecord:
    batches = _values(batches)
    feats = [model.encode(b) for b in batches]
    lc = classification_loss(model, batches, labels, feats)
    value, g = dm.value_and_grad(lc, model.params)
    ids = model.group("encoder") + model.group("classifier")
    _apply(model, optimizer, {k: g[k] for k in ids})
    return StepRecord(float(value))


def wbae_step(model: Model, optimizer, batches, labels, config: TrainConfig, seed=0) -> StepRecord:
    """Classifier on grad L_c, decoder on grad L_r, encoder on grad of the full objective."""
    if not model.has_decoder:
        raise StepError("wbae needs a model with a decoder")
    batches = _values(batches)
    feats = [model.encode(b) for b in batches]
    lc = classification_loss(model, batches, labels, feats)
    lr_ = reconstruction_loss(model, batches, feats)
    total, lwb_val, iters = lc, float("nan"), 0
    if config.alpha > 0:
        lwb, iters = _wb_term(model, batches, feats, config, seed)
        total = total + config.alpha * lwb
        lwb_val = float(dm.evaluate(lwb, model.params))
    if config.beta > 0:
        total = total + config.beta * lr_
    grads = {}
    grads.update(_grads(lc, model, model.group("classifier")))
    grads.update(_grads(lr_, model, model.group("decoder")))
    grads.update(_grads(total, model, model.group("encoder")))
    lc_val = float(dm.evaluate(lc, model.params))
    lr_val = float(dm.evaluate(lr_, model.params))
    _apply(model, optimizer, grads)
    return StepRecord(lc_val, lwb_val, lr_val, iters)


def wbmi_step(model: Model, optimizer, batches, labels, config: TrainConfig, seed=0) -> StepRecord:
    """Classifier on grad L_c; encoder per ``config.encoder_update``.

    ``objective`` descends L_c + alpha L_wb + beta L_i; ``algorithm1``
    drops L_c from the encoder update.
    """
    if not config.delta > 0:
        raise StepError("wbmi needs delta > 0; MI of a noiseless encoder diverges")
    batches = _values(batches)
    ss = np.random.SeedSequence(int(seed)).spawn(2)
    feats = [model.encode(b) for b in batches]
    lc = classification_loss(model, batches, labels, feats)
    terms, lwb_val, li_val, iters = [], float("nan"), float("nan"), 0
    if config.encoder_update == "objective":
        terms.append(lc)
    if config.alpha > 0:
        lwb, iters = _wb_term(model, batches, feats, config, int(ss[0].generate_state(1)[0]))
        terms.append(config.alpha * lwb)
        lwb_val = float(dm.evaluate(lwb, model.params))
    if config.beta > 0:
        li = mi_surrogate(feats, config.delta, ss[1], config.num_eigen, bindings=model.params)
        terms.append(config.beta * li)
        li_val = float(dm.evaluate(li, model.params))
    grads = _grads(lc, model, model.group("classifier"))
    enc = model.group("encoder")
    if terms:
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        grads.update(_grads(total, model, enc))
    else:
        grads.update({k: np.zeros_like(model.params[k]) for k in enc})
    lc_val = float(dm.evaluate(lc, model.params))
    _apply(model, optimizer, grads)
    return StepRecord(lc_val, lwb_val, li_val, iters)


STEPS = {"erm": erm_step, "wbae": wbae_step, "wbmi": wbmi_step}
