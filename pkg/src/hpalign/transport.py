"""Fused Gromov-Wasserstein costs and a KL-proximal Sinkhorn solver.

Plans are plain ``(C_s, C_t)`` arrays; marginals are probability vectors.
The relational cost between infectivity matrices uses the square-loss
decomposition, so one evaluation costs O(C^3) instead of O(C^4).
"""

from __future__ import annotations

import numpy as np

from .hawkes import HawkesParams

MARGINAL_SMOOTHING = 1e-3
FEASIBILITY_TOL = 1e-6


class SinkhornError(ArithmeticError):
    """Sinkhorn scaling broke down numerically."""


def empirical_marginal(sequences, num_types=None, smoothing=MARGINAL_SMOOTHING):
    """Smoothed histogram of event types over a corpus."""
    sequences = list(sequences)
    if num_types is None:
        if not sequences:
            raise ValueError("empty corpus")
        num_types = sequences[0].num_types
    counts = np.zeros(num_types)
    for s in sequences:
        counts += s.counts()
    return normalize_counts(counts, smoothing)


def normalize_counts(counts, smoothing=MARGINAL_SMOOTHING):
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("no events: cannot estimate an event-type distribution")
    return (counts + smoothing) / (total + len(counts) * smoothing)


def product_plan(u_s, u_t):
    return np.outer(u_s, u_t)


def check_feasible(T, u_s, u_t, tol=FEASIBILITY_TOL):
    """Raise ``ValueError`` unless ``T`` lies in the transport polytope (L1 tolerance)."""
    T = np.asarray(T)
    if T.shape != (len(u_s), len(u_t)):
        raise ValueError(f"plan shape {T.shape} does not match marginals ({len(u_s)}, {len(u_t)})")
    if np.any(T < 0):
        raise ValueError("plan has negative entries")
    err = marginal_error(T, u_s, u_t)
    if err > tol:
        raise ValueError(f"plan violates marginals: L1 error {err:.3g} > {tol:.3g}")


def marginal_error(T, u_s, u_t) -> float:
    return float(np.abs(T.sum(axis=1) - u_s).sum() + np.abs(T.sum(axis=0) - u_t).sum())


def round_to_marginals(T, u_s, u_t):
    """Map a nonnegative plan onto the transport polytope of ``(u_s, u_t)``.

    Rows and columns that carry too much mass are scaled down, and the
    remaining deficit is added back as a rank-one correction.  The result is
    feasible to rounding error and moves by at most twice the marginal error.
    """
    T = np.asarray(T, dtype=np.float64)
    T = T * np.minimum(u_s / np.maximum(T.sum(axis=1), 1e-300), 1.0)[:, None]
    T = T * np.minimum(u_t / np.maximum(T.sum(axis=0), 1e-300), 1.0)[None, :]
    err_r = np.maximum(u_s - T.sum(axis=1), 0.0)
    err_c = np.maximum(u_t - T.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        T = T + np.outer(err_r, err_c) / total
    return T


def feature_cost(mu_s, mu_t):
    """``L_mu[i, j] = (mu_s[i] - mu_t[j])**2``."""
    return (np.asarray(mu_s)[:, None] - np.asarray(mu_t)[None, :]) ** 2


def relational_cost(A_s, A_t, T, u_s=None, u_t=None, tol=FEASIBILITY_TOL):
    """``L_A(T)[j, j'] = sum_{i, i'} (A_s[i, j] - A_t[i', j'])**2 T[i, i']``.

    Expanded as ``(A_s**2).T u_s 1' + 1 ((A_t**2).T u_t)' - 2 A_s' T A_t``
    where ``u_s = T 1`` and ``u_t = T' 1``.  If marginals are passed they are
    checked against ``T`` first.
    """
    T = np.asarray(T, dtype=np.float64)
    if u_s is not None or u_t is not None:
        check_feasible(T, u_s, u_t, tol)
    rows, cols = T.sum(axis=1), T.sum(axis=0)
    return (
        ((A_s * A_s).T @ rows)[:, None]
        + ((A_t * A_t).T @ cols)[None, :]
        - 2.0 * A_s.T @ T @ A_t
    )


def _relational_cost_rows(A_s, A_t, T):
    # sum_{j, j'} (A_s[i, j] - A_t[i', j'])**2 T[j, j']; equals relational_cost for symmetric A
    rows, cols = T.sum(axis=1), T.sum(axis=0)
    return (
        ((A_s * A_s) @ rows)[:, None]
        + ((A_t * A_t) @ cols)[None, :]
        - 2.0 * A_s @ T @ A_t.T
    )


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def fused_cost(params_s: HawkesParams, params_t: HawkesParams, T, alpha):
    """``(1 - alpha) L_mu + alpha L_A(T)``."""
    _check_alpha(alpha)
    out = (1.0 - alpha) * feature_cost(params_s.mu, params_t.mu)
    if alpha > 0:
        out = out + alpha * relational_cost(params_s.A, params_t.A, T)
    return out


def fgw_discrepancy(params_s: HawkesParams, params_t: HawkesParams, T, alpha) -> float:
    """FGW objective ``<(1 - alpha) L_mu + alpha L_A(T), T>`` of a given plan."""
    _check_alpha(alpha)
    return fgw_value(params_s.mu, params_s.A, params_t.mu, params_t.A, T, alpha)


def fgw_value(mu_s, A_s, mu_t, A_t, T, alpha) -> float:
    """:func:`fgw_discrepancy` on raw arrays."""
    T = np.asarray(T, dtype=np.float64)
    val = (1.0 - alpha) * np.sum(feature_cost(mu_s, mu_t) * T)
    if alpha > 0:
        val += alpha * np.sum(relational_cost(A_s, A_t, T) * T)
    return float(val)


def fgw_plan_gradient(params_s: HawkesParams, params_t: HawkesParams, T, alpha):
    """Gradient of :func:`fgw_discrepancy` with respect to the plan."""
    _check_alpha(alpha)
    out = (1.0 - alpha) * feature_cost(params_s.mu, params_t.mu)
    if alpha > 0:
        A_s, A_t = params_s.A, params_t.A
        out = out + alpha * (relational_cost(A_s, A_t, T) + _relational_cost_rows(A_s, A_t, T))
    return out


def sinkhorn_prox_step(cost, prior, u_s, u_t, tau, max_iter=1000, tol=1e-8):
    """Solve ``min_T <cost, T> + tau KL(T || prior)`` over the transport polytope.

    Sinkhorn scaling of the kernel ``prior * exp(-cost / tau)``; switches to
    log-domain updates when any kernel entry drops below 1e-300.  Stops when
    the row-marginal L1 error (columns are exact after each sweep) is below
    ``tol`` or after ``max_iter`` sweeps.  The result is then rounded onto
    the marginals, so it is feasible even when the sweep cap was hit.
    """
    plan = _prox_sinkhorn(cost, prior, u_s, u_t, tau, max_iter, tol)[0]
    return round_to_marginals(plan, np.asarray(u_s, dtype=np.float64), np.asarray(u_t, dtype=np.float64))


def _prox_sinkhorn(cost, prior, u_s, u_t, tau, max_iter, tol, potential=None):
    """Proximal Sinkhorn step; also returns the column potential in cost units.

    Passing the potential of a previous, similar problem as ``potential``
    warm-starts the column scaling, which matters once successive proximal
    steps have nearly converged.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    cost = np.asarray(cost, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    u_s = np.asarray(u_s, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    psi = np.zeros_like(u_t) if potential is None else np.asarray(potential, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_kernel = np.log(prior) - (cost - psi[None, :]) / tau
    if not np.all(np.isfinite(log_kernel) | (prior == 0)):
        raise SinkhornError("non-finite cost or prior")
    # row shifts are absorbed by the row scaling
    row_max = log_kernel.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise SinkhornError("prior has an all-zero row")
    log_kernel = log_kernel - row_max
    kernel = np.exp(log_kernel)
    if kernel.min() < 1e-300:
        plan, log_v = _sinkhorn_log(log_kernel, u_s, u_t, max_iter, tol)
        return plan, psi + tau * log_v

    v = np.ones_like(u_t)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Kv = kernel @ v
        for _ in range(max_iter):
            u = u_s / Kv
            v = u_t / (kernel.T @ u)
            Kv = kernel @ v
            if np.abs(u * Kv - u_s).sum() < tol:
                break
        plan = u[:, None] * kernel * v[None, :]
    if not np.all(np.isfinite(plan)):
        raise SinkhornError("Sinkhorn scaling under/overflowed; increase tau")
    return plan, psi + tau * np.log(v)


def _lse(a, axis):
    m = a.max(axis=axis, keepdims=True)
    m[~np.isfinite(m)] = 0.0
    return np.log(np.exp(a - m).sum(axis=axis)) + m.squeeze(axis)


def _sinkhorn_log(log_kernel, u_s, u_t, max_iter, tol):
    log_us, log_ut = np.log(u_s), np.log(u_t)
    g = np.zeros_like(u_t)
    row_lse = _lse(log_kernel, axis=1)
    for _ in range(max_iter):
        f = log_us - row_lse
        g = log_ut - _lse(log_kernel + f[:, None], axis=0)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise SinkhornError("log-domain Sinkhorn diverged; increase tau")
        row_lse = _lse(log_kernel + g[None, :], axis=1)
        if np.abs(np.exp(row_lse + f) - u_s).sum() < tol:
            break
    return np.exp(log_kernel + f[:, None] + g[None, :]), g


def sinkhorn(cost, u_s, u_t, eps, max_iter=1000, tol=1e-8):
    """Plain entropic OT: the proximal step from the independence coupling."""
    return sinkhorn_prox_step(cost, product_plan(u_s, u_t), u_s, u_t, eps, max_iter, tol)


def default_tau(cost) -> float:
    """0.1 times the mean entry of ``cost``, floored at 1e-12.

    The floor matters when the cost is identically zero up to rounding,
    e.g. the relational cost between two uniform infectivity matrices.
    """
    return max(0.1 * float(np.mean(cost)), 1e-12)


def solve_transport(
    params_s: HawkesParams,
    params_t: HawkesParams,
    u_s,
    u_t,
    alpha=0.8,
    tau=None,
    init=None,
    max_iter=200,
    tol=1e-6,
    sinkhorn_max_iter=1000,
    sinkhorn_tol=1e-8,
    log=False,
):
    """Minimise the FGW objective over plans by KL-proximal point steps.

    Each outer step freezes the relational cost at the current plan and
    solves ``min_T <fused_cost(T_k), T> + tau KL(T || T_k)`` with Sinkhorn.  Every step is
    rounded exactly onto the marginals, so successive objective values are
    comparable and the plan stays feasible even when Sinkhorn stops at its
    sweep cap.  If a step would increase the objective (the quadratic
    relational term is not convex) it is retried with ``tau`` doubled, so
    the recorded objective never increases.

    Parameters
    ----------
    params_s, params_t : HawkesParams
        Source and target processes.
    u_s, u_t : array-like
        Strictly positive marginals.
    alpha : float
        Weight of the relational (Gromov) term.
    tau : float, optional
        Proximal strength. Defaults to ``0.1 * mean(fused_cost(init))``.
    init : array-like, optional
        Feasible, strictly positive starting plan; defaults to ``u_s u_t'``.
    max_iter, tol : int, float
        Outer stopping rule on ``||T_{k+1} - T_k||_1``.
    log : bool
        Also return a dict with the objective trace, the final tau, the tau
        of every accepted step and the number of outer iterations.

    Returns
    -------
    T : ndarray, shape (C_s, C_t)
    log : dict, optional
    """
    _check_alpha(alpha)
    u_s = np.asarray(u_s, dtype=np.float64)
    u_t = np.asarray(u_t, dtype=np.float64)
    if np.any(u_s <= 0) or np.any(u_t <= 0):
        raise ValueError("marginals must be strictly positive")
    T = product_plan(u_s, u_t) if init is None else np.array(init, dtype=np.float64)
    check_feasible(T, u_s, u_t)
    # objective values are only comparable between plans with equal marginals
    T = round_to_marginals(T, u_s, u_t)
    if tau is None:
        tau = default_tau(fused_cost(params_s, params_t, T, alpha))
    obj = fgw_discrepancy(params_s, params_t, T, alpha)
    trace = [obj]
    taus = []
    psi = None
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        cost = fused_cost(params_s, params_t, T, alpha)
        for _ in range(60):
            T_new, psi_new = _prox_sinkhorn(
                cost, T, u_s, u_t, tau, sinkhorn_max_iter, sinkhorn_tol, psi
            )
            # rounding makes the step feasible even if Sinkhorn hit its sweep cap
            T_new = round_to_marginals(T_new, u_s, u_t)
            obj_new = fgw_discrepancy(params_s, params_t, T_new, alpha)
            if obj_new <= obj + 1e-12 * max(1.0, abs(obj)):
                break
            tau *= 2.0
            psi = None
        else:
            raise SinkhornError("could not find a descent step")
        psi = psi_new
        step = np.abs(T_new - T).sum()
        T, obj = T_new, obj_new
        trace.append(obj_new)
        taus.append(tau)
        if step < tol:
            break
    if log:
        return T, {"objective": trace, "tau": tau, "taus": taus, "n_iter": n_iter}
    return T
