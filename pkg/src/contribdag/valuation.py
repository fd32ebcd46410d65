"""Shapley-style contribution scores over response embeddings.

The cooperative game: the utility of a coalition S is the cosine between the
summed embeddings of S and the mean embedding of all agents (the empty
coalition, and any coalition whose vectors cancel, is worth 0).  Exact
Shapley values are computed by enumerating all 2^N coalitions; the cheap
estimate used at run time is ``psi_n = cos(r_n, r_avg)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embedding import mean_embedding, stack
from .errors import (
    AlignmentViolationError,
    BoundViolationError,
    RankingCounterexample,
    TooManyAgentsError,
)

MAX_EXACT_AGENTS = 16
_ZERO_TOL = 1e-12
UTILITY_ID = "cos(sum_S, r_avg); v(empty)=0; v(cancelled)=0"


@dataclass(frozen=True)
class ContributionScores:
    psi: np.ndarray
    round: int = 0
    uniform_fallback: bool = False

    def __len__(self) -> int:
        return len(self.psi)

    def __getitem__(self, i: int) -> float:
        return float(self.psi[i])

    def ranking(self) -> list[int]:
        """Agent indices from highest to lowest score; ties go to the lower index."""
        return sorted(range(len(self.psi)), key=lambda i: (-self.psi[i], i))


@dataclass(frozen=True)
class ShapleyResult:
    phi: np.ndarray
    utility_id: str = UTILITY_ID


@dataclass(frozen=True)
class BoundCertificate:
    L: np.ndarray
    I_const: float
    gamma_norm: float
    residuals: np.ndarray
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    degenerate_coalitions: int = 0

    @property
    def bound(self) -> float:
        return self.I_const * self.gamma_norm**2

    @property
    def ok(self) -> np.ndarray:
        return self.residuals <= self.bound + 1e-9

    @property
    def holds(self) -> bool:
        return bool(np.all(self.ok))

    @property
    def normalized_phi(self) -> np.ndarray:
        return self.phi / self.L


def coalition_weight(size: int, n: int) -> float:
    """|S|!(N-|S|-1)!/N! for a coalition of ``size`` not containing the player."""
    return math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)


def coalition_utility(S: Iterable[int], rs) -> float:
    rs = stack(rs)
    members = sorted(set(S))
    if not members:
        return 0.0
    if members[0] < 0 or members[-1] >= rs.shape[0]:
        raise IndexError(f"coalition {members} out of range for N={rs.shape[0]}")
    x = rs[members].sum(axis=0)
    avg = rs.mean(axis=0)
    nx = np.linalg.norm(x)
    na = np.linalg.norm(avg)
    if nx <= _ZERO_TOL or na <= _ZERO_TOL:
        return 0.0
    return float(np.clip(x @ avg / (nx * na), -1.0, 1.0))


def _subset_sums(rs: np.ndarray) -> np.ndarray:
    n = rs.shape[0]
    sums = np.zeros((1 << n, rs.shape[1]))
    for mask in range(1, 1 << n):
        low = mask & -mask
        sums[mask] = sums[mask ^ low] + rs[low.bit_length() - 1]
    return sums


class _Game:
    """All 2^N coalition sums and utilities for one set of embeddings."""

    def __init__(self, rs: np.ndarray):
        n = rs.shape[0]
        if n > MAX_EXACT_AGENTS:
            raise TooManyAgentsError(f"exact enumeration limited to N <= {MAX_EXACT_AGENTS}, got {n}")
        self.rs = rs
        self.n = n
        self.avg = rs.mean(axis=0)
        self.sums = _subset_sums(rs)
        self.norms = np.linalg.norm(self.sums, axis=1)
        self.sizes = np.array([bin(m).count("1") for m in range(1 << n)])
        na = np.linalg.norm(self.avg)
        util = np.zeros(1 << n)
        if na > _ZERO_TOL:
            live = self.norms > _ZERO_TOL
            util[live] = (self.sums[live] @ self.avg) / (self.norms[live] * na)
        util[0] = 0.0
        self.utility = np.clip(util, -1.0, 1.0)
        self.weights = np.array([coalition_weight(s, n) if s < n else 0.0 for s in range(n + 1)])

    def without(self, i: int) -> np.ndarray:
        masks = np.arange(1 << self.n)
        return masks[(masks >> i) & 1 == 0]


def exact_shapley(rs) -> ShapleyResult:
    rs = stack(rs)
    game = _Game(rs)
    phi = np.zeros(game.n)
    for i in range(game.n):
        masks = game.without(i)
        w = game.weights[game.sizes[masks]]
        phi[i] = float(np.sum(w * (game.utility[masks | (1 << i)] - game.utility[masks])))
    return ShapleyResult(phi=phi)


def approx_contribution(rs, round: int = 0) -> ContributionScores:
    """psi_n = cos(r_n, r_avg); uniform 1/N when the mean embedding vanishes."""
    rs = stack(rs)
    n = rs.shape[0]
    avg = mean_embedding(rs)
    na = np.linalg.norm(avg)
    if na <= _ZERO_TOL:
        return ContributionScores(psi=np.full(n, 1.0 / n), round=round, uniform_fallback=True)
    norms = np.linalg.norm(rs, axis=1)
    psi = np.clip((rs @ avg) / (norms * na), -1.0, 1.0)
    return ContributionScores(psi=psi, round=round)


def bound_certificate(rs, strict: bool = False) -> BoundCertificate:
    """Compute the multiplicative factors L_n and check phi_n - L_n psi_n <= I Gamma^2.

    ``I`` is the tightest admissible constant, ``1 / min_n |<r_n, r_avg>|``.
    The inequality is reported per agent in ``ok``; with ``strict=True`` a
    violation raises instead.  Coalitions where ``x + r_n`` cancels to zero
    have no finite B_S and are left out of L_n (counted in
    ``degenerate_coalitions``); their marginal lands in the residual.
    """
    rs = stack(rs)
    norms = np.linalg.norm(rs, axis=1)
    gamma = float(norms.max())
    if not np.allclose(norms, gamma, atol=1e-9, rtol=0):
        raise ValueError("bound certificate needs equal-norm embeddings")
    game = _Game(rs)
    inner = rs @ game.avg
    if np.min(np.abs(inner)) <= _ZERO_TOL:
        raise AlignmentViolationError("some <r_n, r_avg> is zero; the bound constant I is undefined")
    I_const = float(1.0 / np.min(np.abs(inner)))

    phi = exact_shapley(rs).phi
    psi = approx_contribution(rs).psi
    L = np.zeros(game.n)
    degenerate = 0
    for i in range(game.n):
        masks = game.without(i)
        joined = game.norms[masks | (1 << i)]
        w = game.weights[game.sizes[masks]]
        live = joined > _ZERO_TOL
        degenerate += int(np.count_nonzero(~live))
        L[i] = float(np.sum(w[live] * norms[i] / joined[live]))
    residuals = phi - L * psi
    cert = BoundCertificate(
        L=L, I_const=I_const, gamma_norm=gamma, residuals=residuals, phi=phi, psi=psi,
        degenerate_coalitions=degenerate,
    )
    if strict and not cert.holds:
        worst = int(np.argmax(residuals - cert.bound))
        raise BoundViolationError(
            f"agent {worst}: residual {residuals[worst]:.6g} exceeds I*Gamma^2 = {cert.bound:.6g}"
        )
    return cert


def stability_threshold(cert: BoundCertificate) -> float:
    return 2.0 * cert.I_const * cert.gamma_norm**2 / float(np.min(cert.L))


def ranking_stable(scores: ContributionScores | Sequence[float], cert: BoundCertificate, n: int, k: int) -> bool:
    """True when psi_n - psi_k clears the separation that guarantees the Shapley order.

    When it does, the normalised exact scores are checked to agree and a
    :class:`RankingCounterexample` is raised if they do not.
    """
    psi = scores.psi if isinstance(scores, ContributionScores) else np.asarray(scores, dtype=float)
    if np.min(cert.L) <= 0:
        return False
    stable = bool(psi[n] - psi[k] > stability_threshold(cert))
    if stable:
        tilde = cert.normalized_phi
        if not tilde[n] > tilde[k]:
            raise RankingCounterexample(
                f"psi gap {psi[n] - psi[k]:.6g} exceeds threshold but phi~[{n}]={tilde[n]:.6g} <= phi~[{k}]={tilde[k]:.6g}"
            )
    return stable


def stable_pairs(cert: BoundCertificate) -> list[tuple[int, int]]:
    """All ordered pairs (n, k) flagged by :func:`ranking_stable`."""
    n = len(cert.psi)
    return [(a, b) for a in range(n) for b in range(n) if a != b and ranking_stable(cert.psi, cert, a, b)]
