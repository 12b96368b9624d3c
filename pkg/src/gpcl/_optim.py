"""Shared box-constrained maximizer for the likelihood-type objectives.

Parameters are optimized on transformed coordinates (log for positive
parameters, scaled logit for interval parameters), with a derivative-free
simplex stage, a quasi-Newton refinement on central finite-difference
gradients, and a final tiny-simplex polish that certifies the step-size
criterion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

__all__ = ["ParamDef", "OptResult", "clamp_to_box", "maximize"]

_FD_REL_STEP = 1e-5
_STEP_TOL = 1e-8
_PENALTY = 1e4


@dataclass(frozen=True)
class ParamDef:
    """One free parameter: its box and the transform used inside the optimizer."""

    name: str
    lo: float
    hi: float
    scale: str  # "log" or "logit"

    def to_internal(self, x: float) -> float:
        if self.scale == "log":
            return math.log(x)
        span = (x - self.lo) / (self.hi - self.lo)
        span = min(max(span, 1e-12), 1 - 1e-12)
        return math.log(span / (1.0 - span))

    def to_natural(self, t: float) -> float:
        if self.scale == "log":
            # Clip far outside the box so exp never overflows; the box
            # penalty already dominates out there.
            t = min(max(t, math.log(self.lo) - 60.0), math.log(self.hi) + 60.0)
            return math.exp(t)
        return self.lo + (self.hi - self.lo) * float(expit(t))

    def clamp(self, x: float) -> float:
        eps = 1e-9 * (self.hi - self.lo) if self.scale == "logit" else 0.0
        return min(max(x, self.lo + eps), self.hi - eps)

    def box_excess(self, t: float) -> float:
        if self.scale == "log":
            lo_t, hi_t = math.log(self.lo), math.log(self.hi)
            return max(0.0, t - hi_t) + max(0.0, lo_t - t)
        return 0.0  # logit never leaves the box


@dataclass
class OptResult:
    x: np.ndarray
    fval: float
    nfev: int
    step_converged: bool
    message: str


def clamp_to_box(x0, defs: list[ParamDef]) -> tuple[np.ndarray, bool]:
    """Clamp a start vector into the box interior; report whether it moved."""
    arr = np.asarray(x0, dtype=float).copy()
    moved = False
    for i, d in enumerate(defs):
        c = d.clamp(arr[i]) if math.isfinite(arr[i]) else 0.5 * (d.lo + d.hi)
        if c != arr[i]:
            moved = True
        arr[i] = c
    return arr, moved


def maximize(fun, defs: list[ParamDef], x0, max_iters: int = 500) -> OptResult:
    """Maximize ``fun(theta)`` over the box described by ``defs``.

    ``fun`` receives natural-scale parameter vectors and may return -inf
    for unusable points.  The returned ``step_converged`` records whether
    the final polish contracted its simplex below the step tolerance.
    """
    p = len(defs)
    nfev = 0

    def g(t_vec: np.ndarray) -> float:
        nonlocal nfev
        nfev += 1
        theta = np.array([d.to_natural(t) for d, t in zip(defs, t_vec)])
        pen = sum(d.box_excess(t) ** 2 for d, t in zip(defs, t_vec))
        val = fun(theta)
        if not math.isfinite(val):
            return 1e12 + _PENALTY * pen
        return -val + _PENALTY * pen

    def g_grad(t_vec: np.ndarray) -> np.ndarray:
        out = np.empty(p)
        for i in range(p):
            h = _FD_REL_STEP * max(1.0, abs(t_vec[i]))
            up, dn = t_vec.copy(), t_vec.copy()
            up[i] += h
            dn[i] -= h
            out[i] = (g(up) - g(dn)) / (2 * h)
        return out

    t0 = np.array([d.to_internal(x) for d, x in zip(defs, x0)])

    stage1 = minimize(
        g,
        t0,
        method="Nelder-Mead",
        options={"maxiter": max_iters, "xatol": 1e-6, "fatol": 1e-9, "disp": False},
    )
    t_best, f_best = stage1.x, stage1.fun

    stage2 = minimize(
        g,
        t_best,
        method="BFGS",
        jac=g_grad,
        options={"gtol": 1e-7, "maxiter": max_iters, "disp": False},
    )
    if stage2.fun <= f_best:
        t_best, f_best = stage2.x, stage2.fun

    # Polish: a simplex started at 1e-6 scale must contract below the step
    # tolerance; termination on xatol certifies the final step size.
    sim = np.repeat(t_best[None, :], p + 1, axis=0)
    for i in range(p):
        sim[i + 1, i] += 1e-6 * max(1.0, abs(t_best[i]))
    stage3 = minimize(
        g,
        t_best,
        method="Nelder-Mead",
        options={
            "maxiter": max(200, 60 * p),
            "xatol": 0.1 * _STEP_TOL,
            "fatol": np.inf,
            "initial_simplex": sim,
            "disp": False,
        },
    )
    step_converged = bool(stage3.success)
    if stage3.fun <= f_best:
        t_best, f_best = stage3.x, stage3.fun

    x_hat = np.array([d.to_natural(t) for d, t in zip(defs, t_best)])
    return OptResult(
        x=x_hat,
        fval=-f_best,
        nfev=nfev,
        step_converged=step_converged,
        message=str(stage3.message),
    )
