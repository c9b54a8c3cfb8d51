"""Finite-difference verification of the reverse-mode gradients.

The check perturbs every scalar parameter by +-eps, re-evaluates the loss
forward-only, and compares the central difference against the recorded
gradient. Relative error uses a small absolute floor so near-zero
gradients do not blow up the ratio.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .dataset import generate_base_samples
from .errors import GradCheckFailed
from .models import (
    ModelParams,
    default_config,
    deepset_forward,
    gcn_forward,
    init_params,
    make_graph_batch,
    make_seq_batch,
    polymp_forward,
    veercnn_forward,
)


def finite_difference_check(loss_fn, params: ModelParams, eps: float = 1e-5,
                            floor: float = 1e-6) -> dict:
    """Max relative error per parameter tensor between analytic and central
    finite-difference gradients of the scalar `loss_fn()`."""
    params.zero_grads()
    loss = loss_fn()
    T.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.named.items()}
    params.zero_grads()

    report = {}
    with T.no_grad():
        for name, p in params.named.items():
            flat = p.data.ravel()
            an = analytic[name].ravel()
            worst = 0.0
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(loss_fn().data)
                flat[i] = orig - eps
                f_minus = float(loss_fn().data)
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(fd), abs(an[i]), floor)
                err = abs(fd - an[i]) / denom
                if err > worst:
                    worst = err
            report[name] = worst
    return report


def _check_batch(seed: int):
    """Two jittered polygons, one with a hole; irregular shapes keep the loss
    away from relu/abs/max kinks under parameter perturbation."""
    ds = generate_base_samples(["L", "O"], per_class=1, seed=seed)
    graphs = [s.graph for s in ds.samples]
    labels = np.array([s.label for s in ds.samples], dtype=np.int64)
    return graphs, labels


def model_gradcheck(arch: str, seed: int = 0, eps: float = 1e-5,
                    n_classes: int = 26, **config_overrides) -> dict:
    """Finite-difference report for every parameter tensor of `arch` on a
    2-graph batch."""
    graphs, labels = _check_batch(seed)
    cfg = default_config(arch, n_classes=n_classes, **config_overrides)
    params = init_params(cfg, seed=seed + 1)

    if arch == "veercnn":
        max_len = max(g.n for g in graphs)
        max_len += (-max_len) % 8
        seqs, _, _ = make_seq_batch(graphs, max_len)

        def loss_fn():
            return T.softmax_cross_entropy(veercnn_forward(params, seqs), labels)
    else:
        batch = make_graph_batch(graphs)
        forward = {
            "polymp": lambda: polymp_forward(params, batch)[0],
            "deepset": lambda: deepset_forward(params, batch),
            "gcn": lambda: gcn_forward(params, batch),
        }[arch]

        def loss_fn():
            return T.softmax_cross_entropy(forward(), labels)

    return finite_difference_check(loss_fn, params, eps=eps)


def assert_gradcheck(arch: str, seed: int = 0, tol: float = 1e-4, **kw) -> dict:
    report = model_gradcheck(arch, seed=seed, **kw)
    worst_name = max(report, key=report.get)
    if report[worst_name] >= tol:
        raise GradCheckFailed(
            f"{arch}: worst tensor {worst_name} rel err {report[worst_name]:.3g} >= {tol}",
            worst_name=worst_name, worst_err=report[worst_name],
        )
    return report
