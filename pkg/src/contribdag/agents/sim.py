"""Simulated agents with a controllable correctness model and embedding geometry.

Each agent answers correctly with probability ``p_correct`` and otherwise
picks one of K wrong answers with probabilities ``wrong_answer_probs``.  If
its prompt already carries a correct peer answer, the success probability is
replaced by ``p_uplift`` (when configured).

Embeddings come from :class:`AnswerGeometry`.  Every answer (correct or the
k-th wrong one) owns a unit centre; centres share a common component so that
distinct answers have cosine ``center_cos``.  A response is its answer's
centre tilted by an angle of at most ``spread * arccos(alpha) / 2`` into a
noise subspace private to that answer.  Consequently

* two responses with the same answer have cosine >= alpha;
* two responses with different answers have cosine <= center_cos <= beta,

which is exactly the clustering assumption, enforced by construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..embedding import DEFAULT_DIM
from ..errors import InfeasibleGeometryError, InvalidDistributionError
from .base import ResponseRecord
from .roles import PromptBundle, RoleProfile, count_tokens

CORRECT_TAG = "C"
_TAG = re.compile(r"answer is (C|W\d+)\b")


def answer_tag(answer: int) -> str:
    """0 is the correct answer; k >= 1 is the k-th wrong one."""
    return CORRECT_TAG if answer == 0 else f"W{answer}"


def parse_tag(text: str) -> str | None:
    found = _TAG.findall(text)
    return found[-1] if found else None


def is_correct_text(text: str) -> bool:
    return parse_tag(text) == CORRECT_TAG


@dataclass(frozen=True)
class SimAgentModel:
    p_correct: float
    wrong_answer_probs: tuple[float, ...] = ()
    alpha: float = 0.8
    beta: float = 0.35
    seed: int = 0
    p_uplift: float | None = None
    spread: float = 0.5
    completion_tokens: int = 64

    def __post_init__(self) -> None:
        object.__setattr__(self, "wrong_answer_probs", tuple(float(x) for x in self.wrong_answer_probs))
        if not 0.0 < self.p_correct <= 1.0:
            raise InvalidDistributionError(f"p_correct must lie in (0, 1], got {self.p_correct}")
        probs = self.wrong_answer_probs
        if self.p_correct < 1.0 and not probs:
            raise InvalidDistributionError("wrong_answer_probs required when p_correct < 1")
        if any(p < 0 for p in probs):
            raise InvalidDistributionError("wrong answer probabilities must be non-negative")
        if abs(sum(probs) - (1.0 - self.p_correct)) > 1e-9:
            raise InvalidDistributionError(
                f"wrong answer probabilities sum to {sum(probs):.12g}, expected 1 - p = {1 - self.p_correct:.12g}"
            )
        if not self.alpha > self.beta:
            raise InfeasibleGeometryError(f"alpha ({self.alpha}) must exceed beta ({self.beta})")
        if self.p_uplift is not None and not 0.0 < self.p_uplift <= 1.0:
            raise InvalidDistributionError("p_uplift must lie in (0, 1]")
        if not 0.0 <= self.spread <= 1.0:
            raise ValueError("spread must lie in [0, 1]")
        if self.completion_tokens < 1:
            raise ValueError("completion_tokens must be positive")

    @property
    def n_wrong(self) -> int:
        return len(self.wrong_answer_probs)

    @classmethod
    def uniform(cls, p_correct: float, n_wrong: int, **kwargs) -> "SimAgentModel":
        """Wrong mass split evenly over ``n_wrong`` answers."""
        if p_correct >= 1.0:
            return cls(p_correct=1.0, wrong_answer_probs=(0.0,) * n_wrong, **kwargs)
        each = (1.0 - p_correct) / n_wrong
        probs = [each] * n_wrong
        probs[-1] = (1.0 - p_correct) - each * (n_wrong - 1)
        return cls(p_correct=p_correct, wrong_answer_probs=tuple(probs), **kwargs)

    def to_dict(self) -> dict:
        return {
            "p_correct": self.p_correct,
            "wrong_answer_probs": list(self.wrong_answer_probs),
            "alpha": self.alpha,
            "beta": self.beta,
            "seed": self.seed,
            "p_uplift": self.p_uplift,
            "spread": self.spread,
            "completion_tokens": self.completion_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimAgentModel":
        d = dict(d)
        d["wrong_answer_probs"] = tuple(d.get("wrong_answer_probs", ()))
        return cls(**d)


def max_tilt(alpha: float) -> float:
    """Largest per-response tilt keeping same-answer pairs at cosine >= alpha."""
    return math.acos(min(1.0, max(-1.0, alpha))) / 2.0


@dataclass
class AnswerGeometry:
    n_answers: int
    alpha: float
    beta: float
    center_cos: float = 0.3
    dim: int = DEFAULT_DIM
    seed: int = 0
    centers: np.ndarray = field(init=False, repr=False)
    _noise: list[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        check_feasible(self.alpha, self.beta, self.n_answers, self.dim, self.center_cos)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x6E0]))
        per = noise_dims(self.n_answers, self.dim)
        needed = 1 + self.n_answers * (1 + per)
        q, _ = np.linalg.qr(rng.standard_normal((self.dim, needed)))
        common = q[:, 0]
        axes = q[:, 1:1 + self.n_answers]
        mu = self.center_cos
        self.centers = (math.sqrt(mu) * common[:, None] + math.sqrt(1.0 - mu) * axes).T
        start = 1 + self.n_answers
        self._noise = [q[:, start + j * per:start + (j + 1) * per] for j in range(self.n_answers)]
        self.tilt = max_tilt(self.alpha)

    def sample(self, answer: int, spread: float, rng: np.random.Generator) -> np.ndarray:
        theta = spread * self.tilt * rng.random()
        basis = self._noise[answer]
        coef = rng.standard_normal(basis.shape[1])
        direction = basis @ coef
        direction /= np.linalg.norm(direction)
        v = math.cos(theta) * self.centers[answer] + math.sin(theta) * direction
        return v / np.linalg.norm(v)


def noise_dims(n_answers: int, dim: int) -> int:
    return (dim - 1 - n_answers) // n_answers


def check_feasible(alpha: float, beta: float, n_answers: int, dim: int, center_cos: float) -> None:
    """Reject (alpha, beta, K, dim) combinations the construction cannot honour."""
    if not alpha > beta:
        raise InfeasibleGeometryError(f"need alpha > beta, got alpha={alpha}, beta={beta}")
    if alpha > 1.0:
        raise InfeasibleGeometryError("alpha cannot exceed 1")
    if beta < 0.0:
        raise InfeasibleGeometryError("this construction needs beta >= 0 (centres share a non-negative cosine)")
    if not 0.0 <= center_cos <= beta:
        raise InfeasibleGeometryError(f"center_cos must lie in [0, beta]; got {center_cos} with beta={beta}")
    if center_cos >= alpha:
        raise InfeasibleGeometryError("center_cos must be below alpha")
    if n_answers < 1:
        raise InfeasibleGeometryError("need at least one answer")
    if noise_dims(n_answers, dim) < 1:
        raise InfeasibleGeometryError(f"dim={dim} too small for {n_answers} answer clusters")


class SimAgent:
    """One simulated agent bound to a role, a model and a per-query RNG root."""

    def __init__(self, role: RoleProfile, model: SimAgentModel, geometry: AnswerGeometry,
                 stream: Sequence[int] = (0,)):
        self.role = role
        self.model = model
        self.geometry = geometry
        self.stream = tuple(int(s) for s in stream)

    def rng_for(self, agent_id: int, round: int) -> np.random.Generator:
        # one independent stream per (run seed, query, agent, round, model seed)
        return np.random.default_rng(np.random.SeedSequence([*self.stream, agent_id, round, self.model.seed]))

    def respond(self, bundle: PromptBundle, agent_id: int, round: int) -> ResponseRecord:
        return sim_respond(self.model, bundle, self.rng_for(agent_id, round), self.geometry, agent_id, round)


def sim_respond(model: SimAgentModel, bundle: PromptBundle, rng: np.random.Generator, geometry: AnswerGeometry,
                agent_id: int = 0, round: int = 0) -> ResponseRecord:
    peer_correct = any(is_correct_text(text) for _, text in bundle.collab)
    p = model.p_correct
    if peer_correct and model.p_uplift is not None:
        p = max(p, model.p_uplift)
    if rng.random() < p:
        answer = 0
    else:
        probs = np.asarray(model.wrong_answer_probs, dtype=float)
        answer = 1 + int(rng.choice(len(probs), p=probs / probs.sum()))
    if answer >= geometry.n_answers:
        raise InfeasibleGeometryError(f"geometry has {geometry.n_answers} answers, model needs {answer + 1}")
    embedding = geometry.sample(answer, model.spread, rng)
    text = synthetic_text(answer, model.completion_tokens)
    return ResponseRecord(
        agent_id=agent_id,
        round=round,
        text=text,
        embedding=embedding,
        token_counts=(count_tokens(bundle.render()), model.completion_tokens),
        correct=answer == 0,
    )


def synthetic_text(answer: int, n_tokens: int) -> str:
    tail = f"The answer is {answer_tag(answer)}."
    filler = max(0, n_tokens - count_tokens(tail))
    return ("step " * filler + tail).strip()


@dataclass(frozen=True)
class SimPopulation:
    """A roster of simulated agents sharing one answer geometry per query."""

    models: tuple[SimAgentModel, ...]
    roles: tuple[RoleProfile, ...]
    center_cos: float = 0.3
    dim: int = DEFAULT_DIM

    def __post_init__(self) -> None:
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "roles", tuple(self.roles))
        if len(self.models) != len(self.roles):
            raise ValueError("need one role per model")
        if not self.models:
            raise ValueError("empty population")
        alphas = {m.alpha for m in self.models}
        betas = {m.beta for m in self.models}
        if len(alphas) != 1 or len(betas) != 1:
            raise InfeasibleGeometryError("all agents in a population must share alpha and beta")
        check_feasible(self.alpha, self.beta, self.n_answers, self.dim, self.center_cos)

    @property
    def alpha(self) -> float:
        return self.models[0].alpha

    @property
    def beta(self) -> float:
        return self.models[0].beta

    @property
    def n_answers(self) -> int:
        return 1 + max(m.n_wrong for m in self.models)

    def geometry(self, seed: int, query_index: int) -> AnswerGeometry:
        return AnswerGeometry(n_answers=self.n_answers, alpha=self.alpha, beta=self.beta,
                              center_cos=self.center_cos, dim=self.dim, seed=hash_seed(seed, query_index))

    def agents(self, seed: int, query_index: int = 0) -> list[SimAgent]:
        geo = self.geometry(seed, query_index)
        return [SimAgent(role, model, geo, stream=(seed, query_index)) for role, model in zip(self.roles, self.models)]


def hash_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])
