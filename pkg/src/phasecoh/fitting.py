"""Parameter recovery by nonlinear least squares.

:func:`least_squares_fit` is a small Levenberg-Marquardt solver with a
central-difference Jacobian. Bounds are handled by mapping each parameter
onto an unconstrained internal coordinate (sine map for two-sided bounds,
square-root map for one-sided ones), so every trial point is feasible.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .laws import SurfaceParams, r_phenomenological, r_predicted

_LAMBDA_MAX = 1e16
STALL_GRADIENT = 1e-6


@dataclass
class FitResult:
    parameter_estimates: dict
    residual_norm: float
    iterations: int
    converged: bool
    covariance_proxy: np.ndarray | None = None
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.parameter_estimates[name]

    def standard_errors(self):
        if self.covariance_proxy is None:
            return None
        diag = np.clip(np.diag(self.covariance_proxy), 0, None)
        return dict(zip(self.parameter_estimates, np.sqrt(diag)))

    def to_dict(self):
        cov = None if self.covariance_proxy is None else self.covariance_proxy.tolist()
        return {
            "parameters": {k: float(v) for k, v in self.parameter_estimates.items()},
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "covariance_proxy": cov,
            "flags": list(self.flags),
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


class _BoundMap:
    """Map between bounded external and unconstrained internal coordinates."""

    def __init__(self, bounds, n):
        if bounds is None:
            bounds = [(-np.inf, np.inf)] * n
        if len(bounds) != n:
            raise DomainError("one (low, high) pair per parameter required")
        self.lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds], float)
        self.hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds], float)
        if np.any(self.lo >= self.hi):
            raise DomainError("empty parameter interval")

    def to_external(self, u):
        x = np.array(u, dtype=float)
        for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            if np.isfinite(lo) and np.isfinite(hi):
                x[i] = lo + (hi - lo) * (math.sin(u[i]) + 1.0) / 2.0
            elif np.isfinite(lo):
                x[i] = lo - 1.0 + math.sqrt(u[i] * u[i] + 1.0)
            elif np.isfinite(hi):
                x[i] = hi + 1.0 - math.sqrt(u[i] * u[i] + 1.0)
        return x

    def to_internal(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise DomainError("initial parameters outside bounds")
        u = x.copy()
        for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            if np.isfinite(lo) and np.isfinite(hi):
                u[i] = math.asin(min(max(2.0 * (x[i] - lo) / (hi - lo) - 1.0, -1.0), 1.0))
            elif np.isfinite(lo):
                u[i] = math.sqrt((x[i] - lo + 1.0) ** 2 - 1.0)
            elif np.isfinite(hi):
                u[i] = math.sqrt((hi - x[i] + 1.0) ** 2 - 1.0)
        return u


def _jacobian(fun, u, r0, rel_step=1e-6):
    J = np.empty((r0.size, u.size))
    for i in range(u.size):
        h = rel_step * max(abs(u[i]), 1.0)
        up, dn = u.copy(), u.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (fun(up) - fun(dn)) / (2.0 * h)
    return J


def least_squares_fit(model, xdata, ydata, init, bounds=None, names=None,
                      max_iter=500, xtol=1e-10, gtol=1e-10, sigma=None) -> FitResult:
    """Fit ``model(xdata, params) ~ ydata`` by damped Gauss-Newton.

    Parameters
    ----------
    model : callable
        ``model(xdata, params)`` with ``params`` a 1-D array; returns an
        array broadcastable to ``ydata``.
    init : sequence of float
        Starting point, inside ``bounds``.
    bounds : sequence of (low, high), optional
        Per-parameter interval; use ``None`` or ``inf`` for open sides.
    names : sequence of str, optional
        Keys for ``FitResult.parameter_estimates``.

    Iteration stops when the internal step norm falls below ``xtol`` (relative
    to the parameter norm), the scaled gradient (largest cosine between the
    residual vector and a Jacobian column) below ``gtol``, or after
    ``max_iter`` iterations. An accepted step never increases the residual.
    A step-size stop only counts as converged when the final scaled gradient
    is below ``STALL_GRADIENT`` or the residual is negligible next to the
    data; otherwise the fit is reported as stalled.
    """
    ydata = np.asarray(ydata, dtype=float).ravel()
    if ydata.size == 0:
        raise DomainError("no data to fit")
    init = np.asarray(init, dtype=float)
    names = list(names) if names is not None else [f"p{i}" for i in range(init.size)]
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, dtype=float).ravel()
    bmap = _BoundMap(bounds, init.size)

    def resid(u):
        pred = np.asarray(model(xdata, bmap.to_external(u)), dtype=float).ravel()
        return (pred - ydata) * w

    u = bmap.to_internal(init)
    r = resid(u)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = 1e-3
    scale_max = None
    converged = False
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        if not np.isfinite(cost):
            reason = "non-finite residual"
            break
        if cost == 0.0:
            converged, reason = True, "zero residual"
            break
        J = _jacobian(resid, u, r)
        g = J.T @ r
        gnorm = _scaled_gradient(J, r, g, scale_max)
        if gnorm < gtol:
            converged, reason = True, "gradient"
            break
        A = J.T @ J
        # running maximum of the column scales (as in MINPACK): a column that
        # vanishes near a bound keeps its damping instead of taking wild steps
        scale = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        scale = scale if scale_max is None else np.maximum(scale, scale_max)
        scale_max = scale
        accepted = False
        step = np.zeros_like(u)
        while lam <= _LAMBDA_MAX:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            u_new = u + step
            r_new = resid(u_new)
            with np.errstate(over="ignore", invalid="ignore"):
                # an overshooting trial step is simply rejected
                cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            if np.linalg.norm(step) < xtol * (np.linalg.norm(u) + xtol):
                break
            lam *= 10.0
        if not accepted:
            small = np.linalg.norm(step) < xtol * (np.linalg.norm(u) + xtol)
            converged = bool(small)
            reason = "step" if small else "damping exhausted"
            break
        u, r = u_new, r_new
        cost = cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-15)
        if np.linalg.norm(step) < xtol * (np.linalg.norm(u) + xtol):
            converged, reason = True, "step"
            break

    x = bmap.to_external(u)
    J = _jacobian(resid, u, r)
    gnorm = _scaled_gradient(J, r, J.T @ r, scale_max)
    negligible = np.sqrt(2.0 * cost) <= 1e-10 * (np.linalg.norm(ydata * w) + 1e-300)
    if converged and reason == "step" and gnorm > STALL_GRADIENT and not negligible:
        # tiny steps far from a stationary point: stalled, not converged
        # (at round-off level residuals the gradient cosine is pure noise)
        converged, reason = False, "stalled"
    cov = _covariance(model, xdata, ydata, x, w)
    return FitResult(
        parameter_estimates=dict(zip(names, (float(v) for v in x))),
        residual_norm=float(np.sqrt(2.0 * cost)),
        iterations=it,
        converged=converged,
        covariance_proxy=cov,
        diagnostics={"termination": reason, "cost_history": history, "gradient_norm": gnorm},
    )


def _scaled_gradient(J, r, g, col_scale=None):
    # largest cosine between the residual and a Jacobian column (scale free);
    # columns are measured against their running maximum so that a column
    # flattened by an active bound reads as a vanishing gradient
    norms = np.linalg.norm(J, axis=0)
    if col_scale is not None:
        norms = np.maximum(norms, np.sqrt(col_scale))
    denom = norms * np.linalg.norm(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, np.abs(g) / denom, 0.0)
    return float(np.max(cos)) if cos.size else 0.0


def _covariance(model, xdata, ydata, x, w):
    def f(p):
        return np.asarray(model(xdata, p), dtype=float).ravel() * w
    try:
        r0 = f(x) - ydata * w
        J = _jacobian(lambda p: f(p) - ydata * w, x, r0)
        dof = max(ydata.size - x.size, 1)
        s2 = float(r0 @ r0) / dof
        return np.linalg.pinv(J.T @ J) * s2
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        return None


def _rm_collapsed(M, params):
    return np.array([r_predicted(int(m), 1.0, params[0]) for m in M])


def _rm_two_param(M, params):
    return np.array([r_predicted(int(m), params[0], params[1]) for m in M])


def fit_r_vs_m(M_values, R_values, two_parameter=False) -> FitResult:
    """Fit the binomially averaged R(M) law to measured R values.

    By default the fit has a single parameter ``p_eta`` (the emission
    probability is pinned to one), since p and eta are practically
    degenerate at low single-shot SNR. ``two_parameter=True`` frees both
    and reports their product as well.
    """
    M = np.asarray(M_values, dtype=float)
    R = np.asarray(R_values, dtype=float)
    if M.shape != R.shape:
        raise DomainError("M and R must have the same length")
    if np.any(M < 1) or np.any(M != np.round(M)):
        raise DomainError("M values must be positive integers")
    if len(np.unique(M)) < 4:
        raise DomainError("at least four distinct M values required")
    ok = np.isfinite(R) & (R >= 0) & (R <= 1)
    rejected = [(int(m), float(r)) for m, r in zip(M[~ok], R[~ok])]
    M, R = M[ok], R[ok]
    if len(np.unique(M)) < 4:
        raise DomainError("fewer than four distinct M values left after rejection")

    grid = np.geomspace(1e-4, 30.0, 61)
    sse = [np.sum((_rm_collapsed(M, [g]) - R) ** 2) for g in grid]
    pe0 = float(grid[int(np.argmin(sse))])
    if two_parameter:
        res = least_squares_fit(_rm_two_param, M, R, [0.5, min(2 * pe0, 1e6)],
                                bounds=[(0.0, 1.0), (0.0, None)], names=["p", "eta"])
        res.parameter_estimates["p_eta"] = res["p"] * res["eta"]
    else:
        res = least_squares_fit(_rm_collapsed, M, R, [pe0], bounds=[(0.0, None)], names=["p_eta"])
    if res["p_eta"] < 1e-8:
        res.flags.append("p_eta_at_boundary")
    res.diagnostics["rejected_points"] = rejected
    pred = (_rm_two_param if two_parameter else _rm_collapsed)(
        M, [res[n] for n in (["p", "eta"] if two_parameter else ["p_eta"])])
    res.diagnostics["relative_residual"] = float(
        np.linalg.norm(pred - R) / max(np.linalg.norm(R), 1e-300))
    return res


SURFACE_NAMES = ("A", "tau1", "beta", "tau2", "C")
TAU_MAX = 1e6


def _surface_model(x, params):
    ts, T = x
    return r_phenomenological(ts, T, SurfaceParams(*params))


def _linear_part(shape, y):
    """Least-squares A, C for ``A * shape + C ~ y`` with A >= 0 and 0 <= C <= 1."""
    design = np.column_stack([shape, np.ones_like(shape)])
    (A, C), *_ = np.linalg.lstsq(design, y, rcond=None)
    if A >= 0 and 0 <= C <= 1:
        return float(A), float(C)
    # the constrained optimum lies on an edge of the feasible strip
    ss = float(shape @ shape)
    cands = [(0.0, min(max(float(y.mean()), 0.0), 1.0))]
    if ss > 0:
        cands += [(max(float(shape @ (y - c)) / ss, 0.0), c) for c in (0.0, 1.0)]
    return min(cands, key=lambda ac: float(np.sum((ac[0] * shape + ac[1] - y) ** 2)))


_LOG_K = (math.log(1.0 / 1e6), math.log(1e3))


def _surface_shape(x, v1, beta, v2):
    k1 = math.exp(min(max(v1, _LOG_K[0]), _LOG_K[1]))
    k2 = math.exp(min(max(v2, _LOG_K[0]), _LOG_K[1]))
    ts, T = x
    return np.exp(-ts * k1) * T ** beta * np.exp(-T * k2)


def surface_starts(t_starts, windows, n_tau1=4, n_tau2=2):
    """Multi-start (tau1, tau2) pairs, log-spaced around the grid's time scales."""
    span = max(float(np.max(windows)), float(np.ptp(t_starts)), 1.0)
    tau1s = np.geomspace(span / 10.0, span * 10.0, n_tau1)
    tau2s = np.geomspace(span / 3.0, span * 3.0, n_tau2)
    return list(itertools.product(tau1s, tau2s))


def fit_surface(t_starts, windows, R_grid, starts=None) -> FitResult:
    """Global fit of the phenomenological R(t_start, T) surface.

    The amplitude A and offset C enter linearly and are solved exactly (with
    A >= 0, 0 <= C <= 1) inside every model evaluation, leaving a three
    parameter nonlinear fit over log(1/tau1), beta and log(1/tau2). Each
    start sets (tau1, tau2) with beta = 0.5. The lowest residual over all
    starts wins (ties go to the earlier start); the result carries a
    ``not_converged`` flag when that start hit the iteration limit. Decay
    times are capped at ``TAU_MAX`` ns, which a surface with no decay along
    an axis will run into.
    """
    t_starts = np.asarray(t_starts, dtype=float)
    windows = np.asarray(windows, dtype=float)
    R_grid = np.asarray(R_grid, dtype=float)
    if R_grid.shape != (len(t_starts), len(windows)):
        raise DomainError("R grid shape must be (len(t_starts), len(windows))")
    if R_grid.shape[0] < 4 or R_grid.shape[1] < 4:
        raise DomainError("surface fit needs at least a 4x4 grid")
    tt, TT = np.meshgrid(t_starts, windows, indexing="ij")
    x = (tt.ravel(), TT.ravel())
    y = R_grid.ravel()
    starts = starts if starts is not None else surface_starts(t_starts, windows)

    # variable projection: A and C are solved exactly for every (log k1, beta, log k2)
    def projected(xd, q):
        shape = _surface_shape(xd, *q)
        A, C = _linear_part(shape, y)
        return A * shape + C

    best, best_q = None, None
    for idx, (tau1, tau2) in enumerate(starts):
        init = [-math.log(tau1), 0.5, -math.log(tau2)]
        res = least_squares_fit(projected, x, y, init, bounds=[(None, None), (0.0, 1.0), (None, None)],
                                names=("log_k1", "beta", "log_k2"))
        res.diagnostics["start_index"] = idx
        if best is None or res.residual_norm < best.residual_norm:
            best, best_q = res, [res[n] for n in ("log_k1", "beta", "log_k2")]

    v1, beta, v2 = (min(max(v, _LOG_K[0]), _LOG_K[1]) if i != 1 else v for i, v in enumerate(best_q))
    A, C = _linear_part(_surface_shape(x, v1, beta, v2), y)
    params = {"A": float(A), "tau1": math.exp(-v1), "beta": float(beta), "tau2": math.exp(-v2),
              "C": float(C)}
    best = FitResult(params, best.residual_norm, best.iterations, best.converged,
                     _covariance(_surface_model, x, y, np.array(list(params.values())), 1.0),
                     list(best.flags), dict(best.diagnostics))
    if not best.converged:
        best.flags.append("not_converged")
    for name in ("tau1", "tau2"):
        if best[name] > 0.999 * TAU_MAX:
            best.flags.append(f"{name}_at_upper_bound")
    A = best["A"]
    peak = float(np.max(x[1] ** best["beta"] * np.exp(-x[1] / best["tau2"])))
    if A * peak < 1e-9 * max(float(np.max(np.abs(y))), 1e-300):
        best.flags.extend(["tau1_not_identifiable", "tau2_not_identifiable",
                           "beta_not_identifiable"])
    best.diagnostics["n_starts"] = len(starts)
    best.diagnostics["svd_leading_fraction"] = svd_separability(R_grid)
    return best


def surface_params(result: FitResult) -> SurfaceParams:
    return SurfaceParams(*(result[n] for n in SURFACE_NAMES))


def svd_separability(grid) -> float:
    """Share of the grid's squared Frobenius norm carried by the leading singular value."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or min(grid.shape) < 2:
        raise DomainError("separability needs a 2-D grid of at least 2x2")
    peak = np.abs(grid).max()
    if peak == 0.0:
        raise DomainError("separability of an all-zero grid is undefined")
    # normalise first so tiny or huge grids do not under/overflow when squared
    s = np.linalg.svd(grid / peak, compute_uv=False)
    total = float(np.sum(s * s))
    return float(s[0] * s[0] / total)
