"""Linear-chain CRF: partition function, likelihood gradients, Viterbi.

A label path ``y`` over ``L`` positions scores

    start[y_1] + sum_t emissions[t, y_t] + sum_t transitions[y_{t-1}, y_t] + end[y_L]

and the model distribution is ``exp(score(y) - log_partition)``. All
recursions run in log space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import SizeError

BRUTE_FORCE_LIMIT = 10 ** 6
MASK_PENALTY = -1e4


def logsumexp(a, axis=None):
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out.item() if axis is None else np.squeeze(out, axis=axis)


@dataclass
class CrfParams:
    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        self.end = np.asarray(self.end, dtype=np.float64)
        K = self.start.shape[0]
        if self.transitions.shape != (K, K) or self.end.shape != (K,):
            raise ValueError("inconsistent CRF shapes %s %s %s"
                             % (self.transitions.shape, self.start.shape, self.end.shape))

    @property
    def num_labels(self) -> int:
        return self.start.shape[0]

    @classmethod
    def zeros(cls, K: int) -> "CrfParams":
        return cls(np.zeros((K, K)), np.zeros(K), np.zeros(K))

    def masked(self, transition_mask, start_mask) -> "CrfParams":
        return CrfParams(self.transitions + transition_mask, self.start + start_mask, self.end)


def iob_masks(labels):
    """Penalties forbidding ``O -> I-X``, ``?-X -> I-Y`` (X != Y) and starting on ``I-X``."""
    K = len(labels)
    trans = np.zeros((K, K))
    start = np.zeros(K)
    for j, lj in enumerate(labels):
        if lj.tag != "I":
            continue
        start[j] = MASK_PENALTY
        for i, li in enumerate(labels):
            if li.tag == "O" or li.cls != lj.cls:
                trans[i, j] = MASK_PENALTY
    return trans, start


class DecodedPath(NamedTuple):
    labels: tuple
    score: float


def _check(emissions, crf):
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] == 0:
        raise ValueError("emissions must be a non-empty L x K matrix")
    if emissions.shape[1] != crf.num_labels:
        raise ValueError("emissions have %d labels, CRF has %d"
                         % (emissions.shape[1], crf.num_labels))
    return emissions


def path_score(emissions, crf: CrfParams, labels: Sequence[int]) -> float:
    emissions = _check(emissions, crf)
    y = np.asarray(labels)
    if y.shape != (emissions.shape[0],):
        raise ValueError("label sequence length %d does not match %d positions"
                         % (len(y), emissions.shape[0]))
    if y.min() < 0 or y.max() >= crf.num_labels:
        raise IndexError("label index out of range")
    s = crf.start[y[0]] + crf.end[y[-1]] + emissions[np.arange(len(y)), y].sum()
    return float(s + crf.transitions[y[:-1], y[1:]].sum())


def _forward(emissions, crf):
    L = emissions.shape[0]
    alpha = np.empty_like(emissions)
    alpha[0] = crf.start + emissions[0]
    for t in range(1, L):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + crf.transitions, axis=0) + emissions[t]
    return alpha


def _backward(emissions, crf):
    L = emissions.shape[0]
    beta = np.empty_like(emissions)
    beta[-1] = crf.end
    for t in range(L - 2, -1, -1):
        beta[t] = logsumexp(crf.transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(emissions, crf: CrfParams) -> float:
    emissions = _check(emissions, crf)
    alpha = _forward(emissions, crf)
    return float(logsumexp(alpha[-1] + crf.end))


def nll(emissions, crf: CrfParams, gold: Sequence[int]) -> float:
    """Negative log-likelihood of the gold path."""
    return log_partition(emissions, crf) - path_score(emissions, crf, gold)


class CrfGradients(NamedTuple):
    emissions: np.ndarray
    transitions: np.ndarray
    start: np.ndarray
    end: np.ndarray
    marginals: np.ndarray
    nll: float


def nll_gradients(emissions, crf: CrfParams, gold: Sequence[int]) -> CrfGradients:
    """Gradients of :func:`nll`: expected counts under the model minus gold counts."""
    emissions = _check(emissions, crf)
    gold_score = path_score(emissions, crf, gold)
    y = np.asarray(gold)
    L, K = emissions.shape
    alpha = _forward(emissions, crf)
    beta = _backward(emissions, crf)
    logz = logsumexp(alpha[-1] + crf.end)
    marg = np.exp(alpha + beta - logz)

    d_trans = np.zeros((K, K))
    for t in range(1, L):
        d_trans += np.exp(alpha[t - 1][:, None] + crf.transitions
                          + (emissions[t] + beta[t])[None, :] - logz)
    np.add.at(d_trans, (y[:-1], y[1:]), -1.0)

    d_emit = marg.copy()
    d_emit[np.arange(L), y] -= 1.0
    d_start = marg[0].copy()
    d_start[y[0]] -= 1.0
    d_end = marg[-1].copy()
    d_end[y[-1]] -= 1.0
    return CrfGradients(d_emit, d_trans, d_start, d_end, marg, float(logz - gold_score))


def viterbi(emissions, crf: CrfParams) -> DecodedPath:
    """Best path; ties resolve to the smallest label index at every step."""
    emissions = _check(emissions, crf)
    L, K = emissions.shape
    delta = crf.start + emissions[0]
    back = np.zeros((L, K), dtype=np.int64)
    for t in range(1, L):
        cand = delta[:, None] + crf.transitions
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + emissions[t]
    final = delta + crf.end
    best = int(np.argmax(final))
    path = [best]
    for t in range(L - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return DecodedPath(tuple(path), path_score(emissions, crf, path))


# ---------------------------------------------------------------- oracles

def _all_paths(emissions, crf):
    emissions = _check(emissions, crf)
    L, K = emissions.shape
    if K ** L > BRUTE_FORCE_LIMIT:
        raise SizeError("%d^%d paths exceed the enumeration limit of %d"
                        % (K, L, BRUTE_FORCE_LIMIT))
    # lexicographic order
    paths = np.array(list(itertools.product(range(K), repeat=L)), dtype=np.int64)
    scores = crf.start[paths[:, 0]] + crf.end[paths[:, -1]]
    scores = scores + emissions[np.arange(L), paths].sum(axis=1)
    if L > 1:
        scores = scores + crf.transitions[paths[:, :-1], paths[:, 1:]].sum(axis=1)
    return paths, scores


def brute_force_log_partition(emissions, crf: CrfParams) -> float:
    _, scores = _all_paths(emissions, crf)
    return float(logsumexp(scores))


def brute_force_best(emissions, crf: CrfParams) -> DecodedPath:
    """Exhaustive maximum; ties go to the lexicographically smallest path."""
    paths, scores = _all_paths(emissions, crf)
    i = int(np.argmax(scores))
    return DecodedPath(tuple(int(v) for v in paths[i]), float(scores[i]))
