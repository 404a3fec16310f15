"""Bradley-Terry strengths by Iterative Luce Spectral Ranking (I-LSR).

Each iteration builds a continuous-time Markov chain whose rate from the
loser j to the winner i is ``W_ij / (exp(theta_i) + exp(theta_j))`` under
the current estimate, and replaces theta by the log of the chain's
stationary distribution. The fixed point is the maximum-likelihood estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from dualscale.comparisons import WinMatrix
from dualscale.errors import ComputationError, ValidationError
from dualscale.pair_design import check_connectivity

log = logging.getLogger(__name__)

DEFAULT_REG = 0.01
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
DENSE_SOLVE_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class LatentScale:
    """Zero-mean BT strengths; higher theta means more right-wing."""

    ids: tuple[str, ...]
    theta: np.ndarray
    converged: bool = True
    iterations: int = 0
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (len(self.ids),):
            raise ValidationError("theta length does not match ids")
        if not np.all(np.isfinite(theta)):
            raise ComputationError("non-finite strength parameters")
        theta = theta - theta.mean() if len(theta) else theta
        theta.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "theta", theta)

    @property
    def ranking(self) -> list[str]:
        """Items by descending theta; exact ties go to the smaller id first."""
        order = sorted(range(len(self.ids)), key=lambda k: (-self.theta[k], self.ids[k]))
        return [self.ids[k] for k in order]

    def as_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "theta": [float(x) for x in self.theta],
            "ranking": self.ranking,
            "converged": self.converged,
            "iterations": self.iterations,
            **self.settings,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatentScale":
        settings = {k: data[k] for k in ("reg", "tol", "max_iter") if k in data}
        return cls(tuple(data["ids"]), np.asarray(data["theta"], dtype=float),
                   bool(data.get("converged", True)), int(data.get("iterations", 0)), settings)


def stationary_distribution(generator: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible CTMC given its generator (rows sum to 0)."""
    n = generator.shape[0]
    if n == 1:
        return np.ones(1)
    if n <= DENSE_SOLVE_LIMIT:
        A = generator.T.copy()
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            raise ComputationError("comparison graph is not connected: singular Markov chain") from None
    else:
        pi = _power_stationary(generator)
    return pi


def _power_stationary(generator, tol=1e-13, max_iter=100000):
    rate = np.max(-np.diag(generator))
    P = np.eye(generator.shape[0]) + generator / rate
    pi = np.full(generator.shape[0], 1.0 / generator.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        if np.abs(nxt - pi).max() < tol:
            return nxt
        pi = nxt
    raise ComputationError("power iteration for the stationary distribution did not converge")


def regularized(Wm: WinMatrix, reg: float) -> np.ndarray:
    """Win masses with ``reg`` pseudo-wins added in both directions of every pair."""
    W = np.array(Wm.W, dtype=float)
    if reg:
        W = W + reg * (1.0 - np.eye(Wm.n))
    return W


def lsr_step(W: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One Luce Spectral Ranking step; returns zero-mean log stationary weights."""
    strength = np.exp(theta - theta.max())
    rates = W / (strength[:, None] + strength[None, :])
    chain = rates.T.copy()
    np.fill_diagonal(chain, 0.0)
    np.fill_diagonal(chain, -chain.sum(axis=1))
    pi = stationary_distribution(chain)
    with np.errstate(divide="ignore", invalid="ignore"):
        new = np.log(pi)
    if not np.all(np.isfinite(new)):
        raise ComputationError("non-finite strengths: the comparison graph is not strongly connected")
    return new - new.mean()


def log_likelihood(W: np.ndarray, theta: np.ndarray) -> float:
    """BT log-likelihood ``sum_ij W_ij log p(i > j)`` of (possibly regularized) win masses."""
    diff = theta[:, None] - theta[None, :]
    logp = -np.logaddexp(0.0, -diff)
    mask = W > 0
    return float((W[mask] * logp[mask]).sum())


def fit_bt_ilsr(Wm: WinMatrix, reg: float = DEFAULT_REG, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER, trace: list | None = None) -> LatentScale:
    """Fit BT strengths to a win matrix.

    Args:
        Wm: win matrix; ``W[i, j]`` is the mass of i beating j.
        reg: pseudo-wins added to each ordered pair. With ``reg=0`` the
            comparison graph must be connected (and, for a finite optimum,
            strongly connected).
        tol: stop once the largest change in theta falls below this.
        max_iter: iteration cap; the result is flagged unconverged if hit.
        trace: if given, receives the regularized log-likelihood after
            every iteration.
    """
    if reg < 0:
        raise ValidationError("reg must be non-negative")
    settings = {"reg": reg, "tol": tol, "max_iter": max_iter}
    n = Wm.n
    if n == 0:
        raise ValidationError("cannot fit an empty win matrix")
    if n == 1:
        return LatentScale(Wm.ids, np.zeros(1), True, 0, settings)
    if reg == 0 and not check_connectivity(Wm.compared_pairs(), Wm.ids):
        raise ComputationError("comparison graph is disconnected and reg=0")
    W = regularized(Wm, reg)
    theta = np.zeros(n)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = lsr_step(W, theta)
        delta = np.abs(new - theta).max()
        theta = new
        if trace is not None:
            trace.append(log_likelihood(W, theta))
        if delta < tol:
            converged = True
            break
    if not converged:
        log.warning("I-LSR stopped after %d iterations without reaching tol=%g", it, tol)
    return LatentScale(Wm.ids, theta, converged, it, settings)


def probability_matrix(scale: LatentScale) -> np.ndarray:
    """``P[i, j] = p(i beats j)`` for every pair; the diagonal is 0.5."""
    theta = scale.theta
    P = expit(theta[:, None] - theta[None, :])
    upper = np.triu_indices(len(theta), 1)
    P.T[upper] = 1.0 - P[upper]
    np.fill_diagonal(P, 0.5)
    return P


def random_baseline(ids) -> LatentScale:
    """Equal strengths for every item: all probabilities 0.5, ranking in id order."""
    ids = tuple(ids)
    return LatentScale(ids, np.zeros(len(ids)), True, 0, {"baseline": "random"})


def worst_case_baseline(human_scale: LatentScale) -> LatentScale:
    """Negated human strengths, so every pairwise probability becomes ``1 - p``."""
    return LatentScale(human_scale.ids, -human_scale.theta, True, 0, {"baseline": "worst_case"})
