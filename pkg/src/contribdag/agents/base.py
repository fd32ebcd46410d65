from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .roles import PromptBundle, RoleProfile


@dataclass(frozen=True)
class ResponseRecord:
    agent_id: int
    round: int
    text: str
    embedding: np.ndarray = field(repr=False)
    token_counts: tuple[int, int] = (0, 0)
    truncated: bool = False
    correct: bool | None = None

    @property
    def prompt_tokens(self) -> int:
        return self.token_counts[0]

    @property
    def completion_tokens(self) -> int:
        return self.token_counts[1]

    def to_json(self, role: str | None = None) -> dict:
        out = {
            "agent_id": self.agent_id,
            "round": self.round,
            "text": self.text,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "truncated": self.truncated,
        }
        if role is not None:
            out["role"] = role
        if self.correct is not None:
            out["correct"] = self.correct
        return out


class Agent(Protocol):
    role: RoleProfile

    def respond(self, bundle: PromptBundle, agent_id: int, round: int) -> ResponseRecord: ...
