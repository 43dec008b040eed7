"""Alternating maximum likelihood / optimal transport alignment of two Hawkes processes.

Each outer round first re-solves the transport between the current models,
then takes projected gradient steps on

    NLL_s + NLL_t + gamma * <(1 - alpha) L_mu + alpha L_A(T), T>

with the plan ``T`` frozen.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .hawkes import MU_FLOOR, CorpusStats, HawkesParams
from .transport import fgw_discrepancy, fgw_value, normalize_counts, product_plan, solve_transport

log = logging.getLogger(__name__)


@dataclass
class SGDConfig:
    enabled: bool = False
    batch_size: int = 256
    history_window: int | None = 50


@dataclass
class AlignmentConfig:
    alpha: float = 0.8
    gamma: float | None = None  # None: 1e-2 * total event count
    tau: float | None = None  # None: 0.1 * mean initial fused cost, per transport solve
    outer_rounds: int = 10
    hp_steps: int = 200
    learning_rate: float = 1.0  # initial step (backtracking) or fixed step (SGD)
    sgd: SGDConfig = field(default_factory=SGDConfig)
    seed: int = 0
    beta: float = 1.0
    fit_infectivity: bool = True
    warm_start: bool = True
    ot_max_iter: int = 200
    ot_tol: float = 1e-6
    sinkhorn_max_iter: int = 1000
    sinkhorn_tol: float = 1e-8
    smoothing: float = 1e-3

    def __post_init__(self):
        if isinstance(self.sgd, dict):
            self.sgd = SGDConfig(**self.sgd)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.outer_rounds < 0 or self.hp_steps < 0:
            raise ValueError("outer_rounds and hp_steps must be nonnegative")
        if not self.learning_rate > 0 or not self.beta > 0:
            raise ValueError("learning_rate and beta must be positive")
        if self.sgd.enabled and self.sgd.batch_size < 1:
            raise ValueError("sgd.batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class TraceRecord:
    round: int
    nll_s: float
    nll_t: float
    fgw: float
    total: float


@dataclass
class JointState:
    params_s: HawkesParams
    params_t: HawkesParams
    plan: np.ndarray
    u_s: np.ndarray
    u_t: np.ndarray
    gamma: float
    trace: list = field(default_factory=list)
    # objective values of every inner HP step, one list per round
    hp_traces: list = field(default_factory=list)
    # FGW objective trace of every transport solve, one list per round
    ot_traces: list = field(default_factory=list)


def regularizer_gradients(params_s: HawkesParams, params_t: HawkesParams, plan, alpha):
    """Gradients of the FGW objective w.r.t. both models, plan held fixed.

    Returns ``(grad_mu_s, grad_A_s, grad_mu_t, grad_A_t)``.
    """
    return _regularizer_gradients(params_s.mu, params_s.A, params_t.mu, params_t.A, plan, alpha)


def _regularizer_gradients(mu_s, A_s, mu_t, A_t, plan, alpha):
    T = np.asarray(plan)
    u_s, u_t = T.sum(axis=1), T.sum(axis=0)
    w = 2.0 * (1.0 - alpha)
    grad_mu_s = w * (mu_s * u_s - T @ mu_t)
    grad_mu_t = w * (mu_t * u_t - T.T @ mu_s)
    if alpha == 0:
        return grad_mu_s, np.zeros_like(A_s), grad_mu_t, np.zeros_like(A_t)
    grad_A_s = 2.0 * alpha * (np.outer(u_s, u_s) * A_s - T @ A_t @ T.T)
    grad_A_t = 2.0 * alpha * (np.outer(u_t, u_t) * A_t - T.T @ A_s @ T)
    return grad_mu_s, grad_A_s, grad_mu_t, grad_A_t


def _as_stats(corpus, beta):
    if isinstance(corpus, CorpusStats):
        return corpus
    return CorpusStats.from_sequences(corpus, beta)


class _JointObjective:
    """Objective of the Hawkes step over the flat vector (mu_s, A_s, mu_t, A_t)."""

    def __init__(self, stats_s, stats_t, plan, alpha, gamma, beta):
        self.stats_s, self.stats_t = stats_s, stats_t
        self.plan, self.alpha, self.gamma, self.beta = plan, alpha, gamma, beta
        Cs, Ct = stats_s.num_types, stats_t.num_types
        sizes = [Cs, Cs * Cs, Ct, Ct * Ct]
        self.splits = np.cumsum(sizes)[:-1]
        self.shapes = [(Cs,), (Cs, Cs), (Ct,), (Ct, Ct)]
        self.lower = np.concatenate(
            [np.full(Cs, MU_FLOOR), np.zeros(Cs * Cs), np.full(Ct, MU_FLOOR), np.zeros(Ct * Ct)]
        )

    def unpack(self, x):
        return [p.reshape(s) for p, s in zip(np.split(x, self.splits), self.shapes)]

    def params(self, x):
        mu_s, A_s, mu_t, A_t = self.unpack(x)
        return HawkesParams(mu_s, A_s, self.beta), HawkesParams(mu_t, A_t, self.beta)

    def parts(self, x):
        mu_s, A_s, mu_t, A_t = self.unpack(x)
        fgw = fgw_value(mu_s, A_s, mu_t, A_t, self.plan, self.alpha) if self.gamma > 0 else 0.0
        return self.stats_s.nll(mu_s, A_s), self.stats_t.nll(mu_t, A_t), fgw

    def value(self, x):
        nll_s, nll_t, fgw = self.parts(x)
        return nll_s + nll_t + self.gamma * fgw

    def gradient(self, x, sgd=None, rng=None):
        mu_s, A_s, mu_t, A_t = self.unpack(x)
        if sgd is None:
            g_s = self.stats_s.gradients(mu_s, A_s)
            g_t = self.stats_t.gradients(mu_t, A_t)
        else:
            g_s = self.stats_s.stochastic_gradients(mu_s, A_s, sgd.batch_size, sgd.history_window, rng)
            g_t = self.stats_t.stochastic_gradients(mu_t, A_t, sgd.batch_size, sgd.history_window, rng)
        parts = [g_s[0], g_s[1], g_t[0], g_t[1]]
        if self.gamma > 0:
            reg = _regularizer_gradients(mu_s, A_s, mu_t, A_t, self.plan, self.alpha)
            parts = [p + self.gamma * r for p, r in zip(parts, reg)]
        return np.concatenate([p.ravel() for p in parts])

    def pack(self, ps, pt):
        return np.concatenate([ps.mu, ps.A.ravel(), pt.mu, pt.A.ravel()])


def _projected_descent(obj, x, steps, step0, free, trace):
    """Projected gradient descent with Armijo backtracking (monotone).

    Each step starts its line search at twice the previously accepted step.
    """
    f = obj.value(x)
    trace.append(f)
    step = step0
    for _ in range(steps):
        g = obj.gradient(x) * free
        while True:
            x_new = np.maximum(x - step * g, obj.lower)
            d = x_new - x
            if not np.any(d):
                return x
            f_new = obj.value(x_new)
            if f_new <= f + 1e-4 * np.dot(g, d):
                break
            step *= 0.5
            if step < 1e-30:
                return x
        x, f = x_new, f_new
        trace.append(f)
        step *= 2.0
    return x


def _sgd(obj, x, steps, lr, free, sgd, rng, trace):
    for _ in range(steps):
        g = obj.gradient(x, sgd, rng) * free
        x = np.maximum(x - lr * g, obj.lower)
        trace.append(obj.value(x))
    return x


def update_hawkes(state: JointState, config: AlignmentConfig, sequences_s, sequences_t, rng=None):
    """Run ``config.hp_steps`` projected gradient steps with the plan frozen.

    The corpora may be lists of sequences or prebuilt :class:`CorpusStats`.
    Returns a new state whose ``hp_traces`` gains the objective of every step.
    """
    stats_s = _as_stats(sequences_s, config.beta)
    stats_t = _as_stats(sequences_t, config.beta)
    obj = _JointObjective(stats_s, stats_t, state.plan, config.alpha, state.gamma, config.beta)
    x0 = np.maximum(obj.pack(state.params_s, state.params_t), obj.lower)
    free = np.ones_like(x0)
    if not config.fit_infectivity:
        for i, part in enumerate(obj.unpack(free)):
            if i % 2 == 1:
                part[...] = 0.0
    trace = []
    if config.sgd.enabled:
        rng = np.random.default_rng(config.seed if rng is None else rng)
        trace.append(obj.value(x0))
        x = _sgd(obj, x0, config.hp_steps, config.learning_rate, free, config.sgd, rng, trace)
    else:
        x = _projected_descent(obj, x0, config.hp_steps, config.learning_rate, free, trace)
    ps, pt = obj.params(x)
    return replace(state, params_s=ps, params_t=pt, hp_traces=state.hp_traces + [trace])


def initial_params(stats: CorpusStats, beta=1.0) -> HawkesParams:
    """Poisson MLE for the base rate and a small uniform infectivity."""
    C = stats.num_types
    mu = np.maximum(stats.counts / stats.total_horizon, MU_FLOOR)
    return HawkesParams(mu, np.full((C, C), 0.1 / C), beta)


def _record(state, stats_s, stats_t, alpha, round_):
    nll_s = stats_s.nll(state.params_s.mu, state.params_s.A)
    nll_t = stats_t.nll(state.params_t.mu, state.params_t.A)
    fgw = fgw_discrepancy(state.params_s, state.params_t, state.plan, alpha)
    state.trace.append(TraceRecord(round_, nll_s, nll_t, fgw, nll_s + nll_t + state.gamma * fgw))


def align(sequences_s, sequences_t, config: AlignmentConfig | None = None) -> JointState:
    """Jointly fit both Hawkes processes and the transport plan between their types."""
    config = config or AlignmentConfig()
    stats_s = _as_stats(sequences_s, config.beta)
    stats_t = _as_stats(sequences_t, config.beta)
    if stats_s.num_events == 0 or stats_t.num_events == 0:
        raise ValueError("both corpora must contain events")
    u_s = normalize_counts(stats_s.counts, config.smoothing)
    u_t = normalize_counts(stats_t.counts, config.smoothing)
    gamma = config.gamma
    if gamma is None:
        gamma = 1e-2 * (stats_s.num_events + stats_t.num_events)
    state = JointState(
        params_s=initial_params(stats_s, config.beta),
        params_t=initial_params(stats_t, config.beta),
        plan=product_plan(u_s, u_t),
        u_s=u_s,
        u_t=u_t,
        gamma=float(gamma),
    )
    _record(state, stats_s, stats_t, config.alpha, 0)
    rng = np.random.default_rng(config.seed)
    for r in range(1, config.outer_rounds + 1):
        init = state.plan if config.warm_start else product_plan(u_s, u_t)
        plan, info = solve_transport(
            state.params_s, state.params_t, u_s, u_t,
            alpha=config.alpha, tau=config.tau, init=init,
            max_iter=config.ot_max_iter, tol=config.ot_tol,
            sinkhorn_max_iter=config.sinkhorn_max_iter, sinkhorn_tol=config.sinkhorn_tol,
            log=True,
        )
        state = replace(state, plan=plan, ot_traces=state.ot_traces + [info["objective"]])
        state = update_hawkes(state, config, stats_s, stats_t, rng=rng)
        _record(state, stats_s, stats_t, config.alpha, r)
        rec = state.trace[-1]
        log.debug("round %d: nll_s=%.6g nll_t=%.6g fgw=%.6g total=%.6g", r, rec.nll_s, rec.nll_t, rec.fgw, rec.total)
    return state
