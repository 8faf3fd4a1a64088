"""Explicit-duration hidden semi-Markov models built from labeled sequences.

States are numbered ``1..S`` at the API surface and stored 0-based in the
arrays. The transition matrix has a zero diagonal: leaving a state always
enters a different one, and how long a state lasts is governed by its
sojourn pmf over ``1..dmax``.
"""
from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, InvariantError

__all__ = [
    "RunSegment",
    "Hsmm",
    "HsmmConfig",
    "run_length_encode",
    "run_length_decode",
    "silverman_bandwidth",
    "kde_sojourn",
    "build_hsmm",
    "viterbi",
    "path_log_likelihood",
    "predict_next",
    "sample",
    "SIGMA_FLOOR",
]

SIGMA_FLOOR = 1e-4
_STOCH_TOL = 1e-9
_LOG_2PI = math.log(2.0 * math.pi)

RunSegment = namedtuple("RunSegment", ["state", "duration"])


def run_length_encode(states) -> list[RunSegment]:
    """Maximal runs of equal states.

    >>> run_length_encode([3, 3, 3, 3, 1, 1, 1])
    [RunSegment(state=3, duration=4), RunSegment(state=1, duration=3)]
    """
    s = np.asarray(states)
    if s.size == 0:
        raise DataError("cannot run-length encode an empty sequence")
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    lengths = np.diff(np.r_[starts, s.size])
    return [RunSegment(int(s[i]), int(d)) for i, d in zip(starts, lengths)]


def run_length_decode(segments) -> np.ndarray:
    return np.concatenate([np.full(d, st, dtype=int) for st, d in segments])


# ------------------------------------------------------------------ sojourn

def silverman_bandwidth(x) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n ** (-1/5)``, floored at 0.5."""
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = x.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    h = 0.9 * min(sd, (q75 - q25) / 1.34) * n ** (-0.2)
    return max(float(h), 0.5)


def kde_sojourn(durations, dmax, bandwidth=None) -> np.ndarray:
    """Gaussian-kernel density of ``durations`` on the grid ``1..dmax``.

    The density is evaluated at the integers and renormalized to a pmf.
    ``bandwidth=None`` uses :func:`silverman_bandwidth`.
    """
    d = np.asarray(durations, dtype=float)
    if d.size == 0:
        raise DataError("no durations to estimate a sojourn pmf from")
    if dmax < d.max():
        raise DataError(f"dmax={dmax} is below the longest duration {int(d.max())}")
    h = silverman_bandwidth(d) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise DataError("bandwidth must be positive")
    grid = np.arange(1, int(dmax) + 1, dtype=float)
    u = (grid[:, None] - d[None, :]) / h
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (d.size * h * math.sqrt(2 * math.pi))
    total = dens.sum()
    if total <= 0:
        raise DataError("sojourn density vanished on the grid; increase the bandwidth")
    return dens / total


# -------------------------------------------------------------------- model

@dataclass
class HsmmConfig:
    transition_smoothing: float = 0.5
    dmax: int | None = None
    dmax_factor: float = 1.2
    bandwidth: float | None = None
    sigma_floor: float = SIGMA_FLOOR

    def to_dict(self):
        return {"transition_smoothing": self.transition_smoothing, "dmax": self.dmax,
                "dmax_factor": self.dmax_factor, "bandwidth": self.bandwidth,
                "sigma_floor": self.sigma_floor}


@dataclass
class Hsmm:
    """Explicit-duration HSMM with univariate Gaussian emissions.

    Attributes
    ----------
    pi : (S,) initial state distribution
    A : (S, S) transition matrix, zero diagonal
    mu, sigma : (S,) emission mean and standard deviation
    sojourn : (S, dmax) duration pmfs; column ``d - 1`` is duration ``d``
    unvisited : (S,) bool, states filled with defaults at build time
    """

    pi: np.ndarray
    A: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    sojourn: np.ndarray
    unvisited: np.ndarray = None
    segment_counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.sojourn = np.atleast_2d(np.asarray(self.sojourn, dtype=float))
        if self.unvisited is None:
            self.unvisited = np.zeros(self.S, dtype=bool)
        self.unvisited = np.asarray(self.unvisited, dtype=bool)

    @property
    def S(self):
        return self.pi.size

    @property
    def dmax(self):
        return self.sojourn.shape[1]

    def validate(self):
        S = self.S
        if S == 0:
            raise InvariantError("model has no states")
        shapes = {"A": (S, S), "mu": (S,), "sigma": (S,), "unvisited": (S,)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise InvariantError(f"{name} has shape {getattr(self, name).shape}, "
                                     f"expected {shape}")
        if self.sojourn.shape[0] != S:
            raise InvariantError("sojourn needs one pmf per state")
        if np.any(np.diag(self.A) != 0):
            raise InvariantError("transition matrix diagonal must be zero")
        if S > 1 and np.any(np.abs(self.A.sum(axis=1) - 1) > _STOCH_TOL):
            raise InvariantError("transition rows must sum to 1")
        if abs(self.pi.sum() - 1) > _STOCH_TOL:
            raise InvariantError("initial distribution must sum to 1")
        if np.any(np.abs(self.sojourn.sum(axis=1) - 1) > _STOCH_TOL):
            raise InvariantError("sojourn pmfs must sum to 1")
        for arr in (self.pi, self.A, self.sojourn):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise InvariantError("probabilities must be finite and non-negative")
        if np.any(~(self.sigma > 0)):
            raise InvariantError("emission sigma must be positive")
        return self

    def to_dict(self):
        return {
            "S": int(self.S),
            "pi": self.pi.tolist(),
            "A": self.A.tolist(),
            "emissions": [{"mu": float(m), "sigma": float(s)}
                          for m, s in zip(self.mu, self.sigma)],
            "sojourn": self.sojourn.tolist(),
            "dmax": int(self.dmax),
            "unvisited": [int(i) + 1 for i in np.flatnonzero(self.unvisited)],
        }

    @classmethod
    def from_dict(cls, doc):
        S = int(doc["S"])
        unvisited = np.zeros(S, dtype=bool)
        for s in doc.get("unvisited", []):
            unvisited[int(s) - 1] = True
        model = cls(
            pi=doc["pi"],
            A=doc["A"],
            mu=[e["mu"] for e in doc["emissions"]],
            sigma=[e["sigma"] for e in doc["emissions"]],
            sojourn=doc["sojourn"],
            unvisited=unvisited,
        )
        if model.S != S or model.dmax != int(doc["dmax"]):
            raise DataError("HSMM document dimensions disagree with S/dmax")
        return model.validate()

    def emission_loglik(self, obs) -> np.ndarray:
        """(T, S) array of Gaussian log densities."""
        x = np.asarray(obs, dtype=float)[:, None]
        z = (x - self.mu[None, :]) / self.sigma[None, :]
        return -0.5 * (z * z + _LOG_2PI) - np.log(self.sigma)[None, :]


def _check_state(model, state):
    if not (isinstance(state, (int, np.integer)) and 1 <= state <= model.S):
        raise DataError(f"state {state!r} outside 1..{model.S}")


# -------------------------------------------------------------------- build

def build_hsmm(labeled_sequences, S, config: HsmmConfig | None = None) -> Hsmm:
    """Estimate an HSMM directly from state-labeled sequences.

    Parameters
    ----------
    labeled_sequences : iterable of (states, values)
        Per-sequence state ids in ``1..S`` and the observed values.
    S : int
        Number of states.

    Notes
    -----
    Transitions and the initial distribution are add-lambda smoothed
    counts over run-length segments. Emissions use the per-state sample
    mean and standard deviation (floored). Sojourn pmfs come from
    :func:`kde_sojourn` on the state's run durations. States never seen
    get a uniform transition row, a uniform sojourn pmf and the pooled
    emission parameters, and are flagged in ``unvisited``.
    """
    config = config or HsmmConfig()
    if S < 1:
        raise DataError("need at least one state")
    lam = float(config.transition_smoothing)
    if lam < 0:
        raise DataError("transition_smoothing must be non-negative")

    counts = np.zeros((S, S))
    first = np.zeros(S)
    durations = [[] for _ in range(S)]
    values = [[] for _ in range(S)]
    n_seq = 0
    for states, obs in labeled_sequences:
        st = np.asarray(states, dtype=int)
        ob = np.asarray(obs, dtype=float)
        if st.size == 0:
            continue
        if st.shape != ob.shape:
            raise DataError("states and observed values differ in length")
        if st.min() < 1 or st.max() > S:
            raise DataError(f"state ids must lie in 1..{S}")
        if np.isnan(ob).any():
            raise DataError("observed values contain NaN")
        n_seq += 1
        segs = run_length_encode(st)
        first[segs[0].state - 1] += 1
        for a, b in zip(segs[:-1], segs[1:]):
            counts[a.state - 1, b.state - 1] += 1
        for seg in segs:
            durations[seg.state - 1].append(seg.duration)
        for j in np.unique(st):
            values[j - 1].append(ob[st == j])
    if n_seq == 0:
        raise DataError("no labeled sequences to build from")

    visited = np.array([len(d) > 0 for d in durations])
    unvisited = ~visited

    pi = first + lam
    pi = pi / pi.sum() if pi.sum() > 0 else np.full(S, 1.0 / S)

    A = np.zeros((S, S))
    off = ~np.eye(S, dtype=bool)
    if S > 1:
        for i in range(S):
            row = np.where(off[i], counts[i] + lam, 0.0)
            total = row.sum()
            if total > 0:
                A[i] = row / total
            else:
                A[i] = off[i] / (S - 1)

    pooled = np.concatenate([v for vals in values for v in vals])
    floor = config.sigma_floor
    mu = np.empty(S)
    sigma = np.empty(S)
    for j in range(S):
        v = np.concatenate(values[j]) if values[j] else pooled
        mu[j] = v.mean()
        sigma[j] = max(v.std(ddof=1) if v.size > 1 else 0.0, floor)

    longest = max((max(d) for d in durations if d), default=1)
    dmax = config.dmax or int(math.ceil(config.dmax_factor * longest))
    if dmax < longest:
        raise DataError(f"dmax={dmax} is below the longest observed run ({longest})")
    sojourn = np.empty((S, dmax))
    for j in range(S):
        if durations[j]:
            sojourn[j] = kde_sojourn(durations[j], dmax, config.bandwidth)
        else:
            sojourn[j] = 1.0 / dmax

    model = Hsmm(pi, A, mu, sigma, sojourn, unvisited,
                 segment_counts=np.array([len(d) for d in durations]))
    return model.validate()


# ------------------------------------------------------------------ decoding

def _logs(model):
    with np.errstate(divide="ignore"):
        return np.log(model.pi), np.log(model.A), np.log(model.sojourn)


def viterbi(model: Hsmm, obs):
    """Most probable segmentation of ``obs`` into (state, duration) blocks.

    Dynamic program over segment end times: ``delta[t, j]`` is the best
    log score of ``obs[:t]`` whose last segment is state ``j`` ending at
    ``t``. A segment of length ``d`` in state ``j`` scores
    ``log sojourn_j(d)`` plus its emission log densities, and is entered
    either from the start (``log pi_j``) or from another state ``i``
    (``delta[t-d, i] + log A[i, j]``). Ties prefer the smaller state id,
    then the shorter final duration.

    Returns
    -------
    states : (T,) int array of state ids in ``1..S``
    log_likelihood : float
    """
    x = np.asarray(obs, dtype=float).ravel()
    T = x.size
    if T == 0:
        raise DataError("cannot decode an empty sequence")
    if np.isnan(x).any():
        raise DataError("observations contain NaN")
    S, D = model.S, model.dmax
    if S == 1 and T > D:
        raise DataError("sequence exceeds maximal sojourn")

    log_pi, log_A, log_p = _logs(model)
    E = model.emission_loglik(x)
    C = np.vstack([np.zeros(S), np.cumsum(E, axis=0)])  # C[t] = sum of E[:t]

    delta = np.full((T + 1, S), -np.inf)
    # entry[t, j]: best score of a segment boundary at t followed by state j
    entry = np.full((T + 1, S), -np.inf)
    entry_from = np.full((T + 1, S), -1, dtype=int)
    entry[0] = log_pi
    best_d = np.zeros((T + 1, S), dtype=int)
    d_all = np.arange(1, D + 1)
    neg_diag = np.where(np.eye(S, dtype=bool), -np.inf, 0.0)

    for t in range(1, T + 1):
        dd = d_all[: min(t, D)]
        starts = t - dd
        cand = entry[starts] + log_p[:, dd - 1].T + (C[t] - C[starts])
        k = np.argmax(cand, axis=0)
        delta[t] = cand[k, np.arange(S)]
        best_d[t] = dd[k]
        if t < T:
            trans = delta[t][:, None] + log_A + neg_diag
            i = np.argmax(trans, axis=0)
            entry[t] = trans[i, np.arange(S)]
            entry_from[t] = i

    j = int(np.argmax(delta[T]))
    loglik = float(delta[T, j])
    if not np.isfinite(loglik):
        raise DataError("no segmentation has positive probability under the model")

    path = np.empty(T, dtype=int)
    t = T
    while t > 0:
        d = int(best_d[t, j])
        path[t - d:t] = j + 1
        prev = t - d
        if prev > 0:
            j = int(entry_from[prev, j])
        t = prev
    return path, loglik


def path_log_likelihood(model: Hsmm, obs, states) -> float:
    """Joint log probability of a given state path and ``obs``.

    Scores the run-length segmentation of ``states`` directly, independent
    of the dynamic program in :func:`viterbi`.
    """
    x = np.asarray(obs, dtype=float)
    segs = run_length_encode(states)
    log_pi, log_A, log_p = _logs(model)
    E = model.emission_loglik(x)
    total = 0.0
    t = 0
    prev = None
    for st, d in segs:
        j = st - 1
        if d > model.dmax:
            return -np.inf
        total += log_pi[j] if prev is None else log_A[prev, j]
        total += log_p[j, d - 1] + E[t:t + d, j].sum()
        t += d
        prev = j
    return float(total)


def predict_next(model: Hsmm, current_state, k=1):
    """Top-``k`` successor states of ``current_state`` with their probabilities.

    Ties are ranked by smaller state id.
    """
    _check_state(model, current_state)
    if not 1 <= k <= model.S - 1:
        raise DataError(f"k must lie in 1..{model.S - 1}")
    row = model.A[current_state - 1]
    order = sorted((j for j in range(model.S) if j != current_state - 1),
                   key=lambda j: (-row[j], j))
    return [(j + 1, float(row[j])) for j in order[:k]]


def sample(model: Hsmm, T, seed=0):
    """Draw a state path and observations of length ``T``.

    A single-state model renews its state when a sojourn ends.

    Returns
    -------
    states : (T,) int array in ``1..S``
    obs : (T,) float array
    """
    if T < 1:
        raise DataError("T must be at least 1")
    rng = np.random.default_rng(seed)
    S, D = model.S, model.dmax
    states = np.empty(T, dtype=int)
    t = 0
    j = rng.choice(S, p=model.pi)
    while t < T:
        d = rng.choice(D, p=model.sojourn[j]) + 1
        states[t:t + d] = j + 1
        t += d
        if S > 1:
            j = rng.choice(S, p=model.A[j])
    obs = rng.normal(model.mu[states - 1], model.sigma[states - 1])
    return states, obs
