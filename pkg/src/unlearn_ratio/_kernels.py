"""Compiled inner loop for the synthetic Rademacher losses.

Mirrors ``optim.run_iterative`` + closed-form excess step for step; the generic
runner is the reference and ``tests/test_kernels.py`` pins the two together.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _excess(kind, avg, mu, lip, opt_c):
    d = avg.shape[0]
    s = 0.0
    if kind == 0:
        for i in range(d):
            x = avg[i] - opt_c if i == 0 else avg[i]
            s += x * x
        return 0.5 * mu * s
    h = d // 2
    quad = 0.0
    for i in range(h):
        x = avg[i] - opt_c
        quad += x * x
    absum = 0.0
    for i in range(h, d):
        quad += avg[i] * avg[i]
        absum += abs(avg[i])
    return 0.5 * mu * quad + 0.25 * lip * absum


@njit(cache=True, nogil=True)
def _step_size(rule, t, mu, step_const, decay, decay_every):
    if rule == 0:
        return 2.0 / (mu * (t + 2))
    if rule == 1:
        return 2.0 / (mu * (t + 2))
    if rule == 2:
        return step_const
    return step_const * decay ** (t // decay_every)


@njit(cache=True, nogil=True)
def synthetic_run(
    kind,
    theta0,
    uniforms,
    p_plus,
    mu,
    lip,
    radius,
    rule,
    step_const,
    decay,
    decay_every,
    opt_c,
    thresholds,
    curve,
    record_curve,
    project,
):
    """Run ``len(uniforms)`` SGD steps and return first-passage steps per threshold.

    ``kind`` 0 is the quadratic hard instance, 1 the experimental loss. The
    retain draw at step t is +1 iff ``uniforms[t] < p_plus``. Entries of the
    result are -1 for thresholds never reached. When ``record_curve`` is set the
    excess of the averaged iterate at every step is added into ``curve``.
    Returns ``(passage, diverged_at)`` with ``diverged_at`` = -1 on success.
    """
    d = theta0.shape[0]
    n_thr = thresholds.shape[0]
    steps = uniforms.shape[0]
    passage = np.full(n_thr, -1, dtype=np.int64)
    theta = theta0.copy()
    memory = theta0.copy()
    weight = 1.0
    avg = np.empty(d)
    half = d // 2
    ptr = 0

    ex = _excess(kind, theta, mu, lip, opt_c)
    if record_curve:
        curve[0] += ex
    while ptr < n_thr and ex <= thresholds[ptr]:
        passage[ptr] = 0
        ptr += 1

    for t in range(steps):
        if ptr == n_thr and not record_curve:
            break
        g = 1.0 if uniforms[t] < p_plus else -1.0
        eta = _step_size(rule, t, mu, step_const, decay, decay_every)
        if kind == 0:
            for i in range(d):
                grad = mu * theta[i]
                if i == 0:
                    grad -= 0.5 * lip * g
                theta[i] = theta[i] - eta * grad
        else:
            for i in range(d):
                grad = mu * theta[i]
                if i < half:
                    grad -= 0.25 * lip * g
                else:
                    x = theta[i]
                    if x > 0:
                        grad += 0.25 * lip
                    elif x < 0:
                        grad -= 0.25 * lip
                theta[i] = theta[i] - eta * grad
        if project:
            nrm2 = 0.0
            for i in range(d):
                nrm2 += theta[i] * theta[i]
            nrm = math.sqrt(nrm2)
            if nrm > radius:
                scale = radius / nrm
                for i in range(d):
                    theta[i] = theta[i] * scale
        w = t + 2.0
        finite = True
        for i in range(d):
            memory[i] += w * theta[i]
            if not math.isfinite(theta[i]):
                finite = False
        if not finite:
            return passage, t + 1
        weight += w
        for i in range(d):
            avg[i] = memory[i] / weight
        ex = _excess(kind, avg, mu, lip, opt_c)
        if record_curve:
            curve[t + 1] += ex
        while ptr < n_thr and ex <= thresholds[ptr]:
            passage[ptr] = t + 1
            ptr += 1
    return passage, -1
