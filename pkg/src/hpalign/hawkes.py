"""Multivariate Hawkes processes with a shared exponential decay kernel.

The intensity of type ``c`` is

    lambda_c(t) = mu_c + sum_{i: t_i < t} A[c, c_i] * exp(-beta * (t - t_i))

Event sequences are stored as parallel ``times``/``types`` arrays.  Because
``beta`` is a fixed hyperparameter, all history-dependent quantities the
likelihood needs are linear in ``(mu, A)`` and can be precomputed once per
corpus (see :class:`CorpusStats`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MU_FLOOR = 1e-8


class InfeasibleParametersError(ValueError):
    """Raised when some event has zero intensity at its own time."""


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EventSequence:
    """Typed events on ``[0, horizon]`` with strictly increasing times."""

    times: np.ndarray
    types: np.ndarray
    horizon: float
    num_types: int

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64).reshape(-1)
        types = np.array(self.types, dtype=np.int64).reshape(-1)
        if times.shape != types.shape:
            raise ValueError("times and types must have the same length")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.num_types < 1:
            raise ValueError("num_types must be >= 1")
        if len(times):
            if times[0] < 0 or times[-1] > self.horizon:
                raise ValueError("event times must lie in [0, horizon]")
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if types.min() < 0 or types.max() >= self.num_types:
                raise ValueError(f"type ids must lie in [0, {self.num_types})")
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "types", _readonly(types))
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "num_types", int(self.num_types))

    @classmethod
    def from_events(cls, times, types, horizon, num_types) -> "EventSequence":
        """Build from unsorted data, breaking exact time ties.

        Tied times are pushed forward by one ulp (repeatedly if needed) and a
        warning is emitted.
        """
        times = np.asarray(times, dtype=np.float64).reshape(-1)
        types = np.asarray(types, dtype=np.int64).reshape(-1)
        order = np.argsort(times, kind="stable")
        times, types = times[order].copy(), types[order]
        n_ties = 0
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                times[i] = np.nextafter(times[i - 1], np.inf)
                n_ties += 1
        if n_ties:
            warnings.warn(f"broke {n_ties} tied event time(s) by one ulp", stacklevel=2)
        return cls(times, types, horizon, num_types)

    def __len__(self):
        return len(self.times)

    def counts(self) -> np.ndarray:
        return np.bincount(self.types, minlength=self.num_types)


@dataclass(frozen=True)
class HawkesParams:
    """Base intensity ``mu`` (C,), infectivity ``A`` (C, C) and decay ``beta``."""

    mu: np.ndarray
    A: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        A = np.array(self.A, dtype=np.float64)
        if A.shape != (len(mu), len(mu)):
            raise ValueError(f"A must have shape {(len(mu), len(mu))}, got {A.shape}")
        if np.any(mu < 0) or np.any(A < 0):
            raise ValueError("mu and A must be nonnegative")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def num_types(self) -> int:
        return len(self.mu)

    def branching_matrix(self) -> np.ndarray:
        # integral of exp(-beta t) over [0, inf) is 1/beta
        return self.A / self.beta

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.branching_matrix()))))

    def is_stable(self) -> bool:
        return self.spectral_radius() < 1.0

    def stationary_rate(self) -> np.ndarray:
        """Per-type stationary event rate ``(I - A/beta)^{-1} mu``."""
        G = self.branching_matrix()
        return np.linalg.solve(np.eye(self.num_types) - G, self.mu)


def _check_type(c, num_types):
    if not (isinstance(c, (int, np.integer)) and 0 <= c < num_types):
        raise ValueError(f"invalid type id {c!r}; expected integer in [0, {num_types})")


def intensity_at(params: HawkesParams, seq: EventSequence, c: int, t: float) -> float:
    """Intensity of type ``c`` at time ``t`` given the events strictly before ``t``."""
    _check_type(c, params.num_types)
    if not 0 <= t <= seq.horizon:
        raise ValueError(f"t={t} outside [0, {seq.horizon}]")
    past = seq.times < t
    decay = np.exp(-params.beta * (t - seq.times[past]))
    return float(params.mu[c] + np.dot(params.A[c, seq.types[past]], decay))


def compensator(params: HawkesParams, seq: EventSequence, c: int) -> float:
    """Closed-form integral of ``lambda_c`` over ``[0, horizon]``."""
    _check_type(c, params.num_types)
    b = params.beta
    mass = (1.0 - np.exp(-b * (seq.horizon - seq.times))) / b
    return float(params.mu[c] * seq.horizon + np.dot(params.A[c, seq.types], mass))


def history_features(seq: EventSequence, beta: float) -> np.ndarray:
    """Return ``R`` with ``R[i, c'] = sum_{j < i, c_j = c'} exp(-beta (t_i - t_j))``.

    With these, ``lambda_{c_i}(t_i) = mu[c_i] + A[c_i] @ R[i]``.
    """
    n, C = len(seq), seq.num_types
    R = np.zeros((n, C))
    if n == 0:
        return R
    decay = np.exp(-beta * np.diff(seq.times))
    row = np.zeros(C)
    types = seq.types
    for i in range(1, n):
        row[types[i - 1]] += 1.0
        row *= decay[i - 1]
        R[i] = row
    return R


@dataclass
class CorpusStats:
    """Sufficient statistics of a corpus for a fixed decay rate.

    ``nll`` and ``gradients`` are then O(#events * C) vectorised evaluations,
    which is what makes the many line-search evaluations in fitting cheap.
    """

    num_types: int
    beta: float
    times: np.ndarray  # (N,) concatenated event times
    types: np.ndarray  # (N,)
    seq_start: np.ndarray  # (N,) index of the first event of each event's sequence
    features: np.ndarray  # (N, C) history features, see history_features
    kernel_mass: np.ndarray  # (N,) integral of exp(-beta (s - t_i)) over [t_i, T_n]
    total_horizon: float
    counts: np.ndarray = field(init=False)
    mass_by_type: np.ndarray = field(init=False)
    onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        C = self.num_types
        self.counts = np.bincount(self.types, minlength=C).astype(np.float64)
        self.onehot = np.zeros((len(self.types), C))
        self.onehot[np.arange(len(self.types)), self.types] = 1.0
        self.mass_by_type = np.bincount(self.types, weights=self.kernel_mass, minlength=C)

    @classmethod
    def from_sequences(cls, sequences: Sequence[EventSequence], beta: float = 1.0) -> "CorpusStats":
        sequences = list(sequences)
        if not sequences:
            raise ValueError("corpus must contain at least one sequence")
        C = sequences[0].num_types
        if any(s.num_types != C for s in sequences):
            raise ValueError("all sequences must share num_types")
        times, types, starts, feats, mass = [], [], [], [], []
        offset = 0
        for s in sequences:
            times.append(s.times)
            types.append(s.types)
            starts.append(np.full(len(s), offset, dtype=np.int64))
            feats.append(history_features(s, beta))
            mass.append((1.0 - np.exp(-beta * (s.horizon - s.times))) / beta)
            offset += len(s)
        return cls(
            num_types=C,
            beta=float(beta),
            times=np.concatenate(times),
            types=np.concatenate(types),
            seq_start=np.concatenate(starts),
            features=np.vstack(feats),
            kernel_mass=np.concatenate(mass),
            total_horizon=float(sum(s.horizon for s in sequences)),
        )

    @property
    def num_events(self) -> int:
        return len(self.types)

    def event_intensities(self, mu, A) -> np.ndarray:
        return mu[self.types] + np.einsum("ij,ij->i", A[self.types], self.features)

    def nll(self, mu, A) -> float:
        lam = self.event_intensities(mu, A)
        if np.any(lam <= 0):
            raise InfeasibleParametersError(
                f"{int(np.sum(lam <= 0))} event(s) have zero intensity; keep mu > 0"
            )
        comp = mu.sum() * self.total_horizon + A.sum(axis=0) @ self.mass_by_type
        return float(comp - np.log(lam).sum())

    def gradients(self, mu, A):
        """Exact gradient of :meth:`nll` with respect to ``(mu, A)``."""
        C = self.num_types
        lam = self.event_intensities(mu, A)
        if np.any(lam <= 0):
            raise InfeasibleParametersError("zero intensity at an event; keep mu > 0")
        w = 1.0 / lam
        grad_mu = self.total_horizon - np.bincount(self.types, weights=w, minlength=C)
        grad_A = self.mass_by_type[None, :] - self.onehot.T @ (self.features * w[:, None])
        return grad_mu, grad_A

    def stochastic_gradients(self, mu, A, batch_size: int, history_window: int | None, rng):
        """Minibatch gradient estimate.

        Samples ``batch_size`` events without replacement; each event sees at
        most ``history_window`` preceding events of its own sequence (``None``
        means full history).  The compensator is split per event: every event
        carries ``total_horizon / N`` of the base-rate term and its own
        kernel mass.  Scaled by ``N / B`` so that ``B = N`` with full history
        reproduces :meth:`gradients`.
        """
        C, N = self.num_types, self.num_events
        B = min(int(batch_size), N)
        idx = np.sort(rng.choice(N, size=B, replace=False))
        if history_window is None:
            feats = self.features[idx]
        else:
            feats = self._truncated_features(idx, int(history_window))
        types = self.types[idx]
        lam = mu[types] + np.einsum("ij,ij->i", A[types], feats)
        if np.any(lam <= 0):
            raise InfeasibleParametersError("zero intensity at an event; keep mu > 0")
        w = 1.0 / lam
        scale = N / B
        grad_mu = np.full(C, self.total_horizon / N * B)
        grad_mu -= np.bincount(types, weights=w, minlength=C)
        grad_A = np.broadcast_to(
            np.bincount(types, weights=self.kernel_mass[idx], minlength=C), (C, C)
        ).copy()
        np.add.at(grad_A, types, -feats * w[:, None])
        return scale * grad_mu, scale * grad_A

    def _truncated_features(self, idx, K):
        out = np.zeros((len(idx), self.num_types))
        for row, i in enumerate(idx):
            lo = max(self.seq_start[i], i - K)
            if lo < i:
                decay = np.exp(-self.beta * (self.times[i] - self.times[lo:i]))
                np.add.at(out[row], self.types[lo:i], decay)
        return out


def neg_log_likelihood(params: HawkesParams, sequences: Iterable[EventSequence]) -> float:
    """Negative log-likelihood of a corpus under ``params``."""
    sequences = list(sequences)
    _check_corpus(params, sequences)
    stats = CorpusStats.from_sequences(sequences, params.beta)
    return stats.nll(params.mu, params.A)


def nll_gradients(
    params: HawkesParams,
    sequences,
    batch_size: int | None = None,
    history_window: int | None = None,
    rng=None,
):
    """Gradient ``(grad_mu, grad_A)`` of the negative log-likelihood.

    ``sequences`` may be a list of :class:`EventSequence` or a prebuilt
    :class:`CorpusStats`.  Passing ``batch_size`` switches to the minibatch
    estimator (see :meth:`CorpusStats.stochastic_gradients`).
    """
    if isinstance(sequences, CorpusStats):
        stats = sequences
    else:
        sequences = list(sequences)
        _check_corpus(params, sequences)
        stats = CorpusStats.from_sequences(sequences, params.beta)
    if batch_size is None:
        return stats.gradients(params.mu, params.A)
    rng = np.random.default_rng(rng)
    return stats.stochastic_gradients(params.mu, params.A, batch_size, history_window, rng)


def _check_corpus(params, sequences):
    for s in sequences:
        if s.num_types != params.num_types:
            raise ValueError(
                f"sequence has {s.num_types} types but params have {params.num_types}"
            )


def simulate(params: HawkesParams, horizon: float, seed=None) -> EventSequence:
    """Sample one sequence on ``[0, horizon]`` by Ogata's thinning.

    Between events the total intensity only decays, so the total intensity
    at the current candidate point bounds it until the next candidate.  The
    bound is refreshed after every candidate, accepted or not.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rho = params.spectral_radius()
    if rho >= 1.0:
        raise ValueError(f"unstable parameters: branching spectral radius {rho:.4g} >= 1")
    rng = np.random.default_rng(seed)
    mu, A, beta = params.mu, params.A, params.beta
    excitation = np.zeros(params.num_types)
    times, types = [], []
    t = 0.0
    while True:
        bound = mu.sum() + excitation.sum()
        if bound <= 0:
            break
        dt = rng.exponential(1.0 / bound)
        t += dt
        if t > horizon:
            break
        excitation *= np.exp(-beta * dt)
        lam = mu + excitation
        total = lam.sum()
        if rng.uniform() * bound <= total:
            c = int(rng.choice(len(lam), p=lam / total))
            times.append(t)
            types.append(c)
            excitation += A[:, c]
    return EventSequence(np.array(times), np.array(types, dtype=np.int64), horizon, params.num_types)
