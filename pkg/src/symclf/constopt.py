"""Derivative-free fitting of an expression's constant slots.

The classification reward is piecewise constant in the constants (the
threshold makes it a step function), so gradient methods are useless
here; a Nelder-Mead direct search with a hard budget on reward
evaluations is used instead.  The initial constants are always part of
the search, so the fitted reward can never drop below the starting one.
"""

from dataclasses import dataclass

import numpy as np

from .classify import reward_f1
from .expr import ExprTree


@dataclass
class ConstFitReport:
    initial_reward: float
    final_reward: float
    iterations_used: int  # objective evaluations consumed
    converged: bool


def nelder_mead_max(f, x0, budget: int, spread: float = 0.5,
                    xtol: float = 1e-9, ftol: float = 1e-12):
    """Maximize f by simplex search, spending at most ``budget`` evaluations.

    Returns (best_x, best_f, evals_used, converged). Deterministic.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = len(x0)
    evals = 0
    best = {"x": x0.copy(), "f": -np.inf}

    def ev(x):
        nonlocal evals
        evals += 1
        val = f(x)
        if val > best["f"]:
            best["x"], best["f"] = x.copy(), val
        return -val  # simplex machinery minimizes

    if budget <= 0 or n == 0:
        return x0.copy(), f(x0) if n == 0 else np.nan, 0, n == 0

    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += spread
        simplex.append(v)
    values = []
    for v in simplex:
        if evals >= budget:
            return best["x"], best["f"], evals, False
        values.append(ev(v))

    alpha, gamma, rho, sig = 1.0, 2.0, 0.5, 0.5
    converged = False
    while evals < budget:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if (max(values) - min(values) < ftol
                and max(np.max(np.abs(v - simplex[0])) for v in simplex[1:]) < xtol):
            converged = True
            break
        centroid = np.mean(simplex[:-1], axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = ev(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        elif fr < values[0]:
            if evals >= budget:
                break
            xe = centroid + gamma * (xr - centroid)
            fe = ev(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
        else:
            if evals >= budget:
                break
            xc = centroid + rho * (simplex[-1] - centroid)
            fc = ev(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
            else:  # shrink toward the best vertex
                for i in range(1, len(simplex)):
                    if evals >= budget:
                        break
                    simplex[i] = simplex[0] + sig * (simplex[i] - simplex[0])
                    values[i] = ev(simplex[i])
    return best["x"], best["f"], evals, converged


def fit_constants(tree: ExprTree, objective, budget: int):
    """Fit tree constants against objective(tree) -> float.

    Returns (fitted tree, ConstFitReport); the report's final reward is
    never below its initial one.
    """
    if tree.n_constants == 0:
        r = objective(tree)
        return tree, ConstFitReport(r, r, 0, True)
    initial = objective(tree)
    if budget <= 0:
        return tree, ConstFitReport(initial, initial, 0, False)

    def f(c):
        return objective(tree.with_constants(c))

    best_x, best_f, used, converged = nelder_mead_max(f, np.array(tree.constants), budget)
    if best_f > initial:
        return tree.with_constants(best_x), ConstFitReport(initial, best_f, used, converged)
    return tree, ConstFitReport(initial, initial, used, converged)


def optimize_constants(tree: ExprTree, X, y, reward=reward_f1, t: float = 0.5,
                       budget: int = 200):
    """Spec-level wrapper: fit constants to maximize reward(tree, X, y, t)."""
    return fit_constants(tree, lambda tr: reward(tr, X, y, t), budget)
