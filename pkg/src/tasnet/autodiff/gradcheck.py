from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tape import Node, Tape


def _bind(tape: Tape, params):
    if isinstance(params, np.ndarray):
        return tape.variable(params)
    return {name: tape.variable(v) for name, v in params.items()}


def gradient_errors(
    build: Callable[[Tape, object], Node],
    params: Mapping[str, np.ndarray] | np.ndarray,
    eps: float = 1e-5,
) -> dict[str, float]:
    """Per-parameter max relative error of tape gradients vs central differences.

    ``build(tape, bound)`` must construct a scalar loss from the bound
    parameters (a dict of nodes, or a single node when ``params`` is an array)
    and be deterministic.  Everything runs at 64-bit.
    """
    named, analytic, evaluate = _prepare(build, params)

    def compare(a, cd, f0):
        return abs(a - cd) / max(abs(a), abs(cd), 1e-12)

    return _scan(named, analytic, evaluate, eps, compare)


def _prepare(build, params):
    single = isinstance(params, np.ndarray)
    named = {"theta": np.asarray(params, dtype=np.float64)} if single else {
        k: np.asarray(v, dtype=np.float64) for k, v in params.items()
    }

    tape = Tape(np.float64)
    bound = _bind(tape, named["theta"] if single else named)
    loss = build(tape, bound)
    grads = tape.backward(loss)
    analytic = {k: grads[bound if single else bound[k]] for k in named}

    def evaluate(values) -> float:
        t = Tape(np.float64, record=False)
        b = _bind(t, values["theta"] if single else values)
        return float(build(t, b).value)

    return named, analytic, evaluate


def _scan(named, analytic, evaluate, eps, compare) -> dict[str, float]:
    f0 = evaluate(named)
    errors = {}
    for name, value in named.items():
        worst = 0.0
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + eps
            up = evaluate(named)
            value[idx] = orig - eps
            down = evaluate(named)
            value[idx] = orig
            cd = (up - down) / (2 * eps)
            worst = max(worst, compare(float(analytic[name][idx]), cd, f0))
        errors[name] = worst
    return errors


def gradient_check(build, params, eps: float = 1e-5) -> float:
    """Max relative error over every coordinate; see :func:`gradient_errors`."""
    return max(gradient_errors(build, params, eps).values())


def gradient_budget_ratio(build, params, eps: float = 1e-5, rtol: float = 1e-4) -> float:
    """Largest ``|analytic - cd|`` as a fraction of an explicit error budget.

    The budget is ``rtol * max(|analytic|, |cd|)`` plus the roundoff floor of
    the difference quotient, ``4 * u * |f| / eps`` (u = 64-bit unit roundoff).
    A result <= 1 means every coordinate agrees to ``rtol`` or to within what
    64-bit arithmetic can resolve at this step size.
    """
    named, analytic, evaluate = _prepare(build, params)
    u = np.finfo(np.float64).eps

    def compare(a, cd, f0):
        return abs(a - cd) / (rtol * max(abs(a), abs(cd)) + 4 * u * abs(f0) / eps)

    return max(_scan(named, analytic, evaluate, eps, compare).values())
