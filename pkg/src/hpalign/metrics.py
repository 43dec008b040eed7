"""Alignment quality of a learned plan against a ground-truth correspondence."""

import numpy as np


def _pair(T_true, T_hat):
    T_true = np.asarray(T_true, dtype=np.float64)
    T_hat = np.asarray(T_hat, dtype=np.float64)
    if T_true.shape != T_hat.shape:
        raise ValueError(f"shape mismatch: truth {T_true.shape} vs plan {T_hat.shape}")
    return T_true, T_hat


def top_k(T_hat, k):
    """Binary matrix marking the ``k`` largest entries of each row (ties: lower column)."""
    T_hat = np.asarray(T_hat)
    if not 1 <= k <= T_hat.shape[1]:
        raise ValueError(f"k must lie in [1, {T_hat.shape[1]}], got {k}")
    idx = np.argsort(-T_hat, axis=1, kind="stable")[:, :k]
    out = np.zeros(T_hat.shape)
    np.put_along_axis(out, idx, 1.0, axis=1)
    return out


def top_k_accuracy(T_true, T_hat, k=1) -> float:
    """``<T_true, top_k(T_hat)> / C_s``; all-zero truth rows still count in ``C_s``."""
    T_true, T_hat = _pair(T_true, T_hat)
    return float(np.sum(T_true * top_k(T_hat, k)) / T_true.shape[0])


def cosine_similarity(T_true, T_hat) -> float:
    T_true, T_hat = _pair(T_true, T_hat)
    m_true, m_hat = np.abs(T_true).max(), np.abs(T_hat).max()
    if m_true == 0 or m_hat == 0:
        raise ValueError("cosine similarity undefined for an all-zero matrix")
    # rescale first: the value is scale-free and tiny entries would underflow when squared
    T_true, T_hat = T_true / m_true, T_hat / m_hat
    return float(np.sum(T_true * T_hat) / (np.linalg.norm(T_true) * np.linalg.norm(T_hat)))


def plan_entropy(T_hat) -> float:
    """``-sum T log T`` in nats, with ``0 log 0 = 0``."""
    T = np.asarray(T_hat, dtype=np.float64)
    if np.any(T < 0):
        raise ValueError("plan has negative entries")
    nz = T[T > 0]
    return float(-np.sum(nz * np.log(nz)))


def evaluate(T_true, T_hat, k=1) -> dict:
    return {
        "acc_k": top_k_accuracy(T_true, T_hat, k),
        "k": int(k),
        "sim": cosine_similarity(T_true, T_hat),
        "entropy": plan_entropy(T_hat),
    }
