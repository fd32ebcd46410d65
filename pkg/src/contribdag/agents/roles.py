"""Role profiles and prompt assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import PromptError


@dataclass(frozen=True)
class RoleProfile:
    name: str
    system_prompt: str

    def __post_init__(self) -> None:
        if not self.system_prompt.strip():
            raise ValueError(f"role {self.name!r} has an empty system prompt")


# Pool order matters: math rosters take the first four, knowledge rosters the
# first five (through Psychologist).
ROLE_POOL: tuple[RoleProfile, ...] = (
    RoleProfile(
        "Assistant",
        "You are a super-intelligent AI assistant capable of performing tasks more effectively than humans.",
    ),
    RoleProfile(
        "Programmer",
        "You are a programmer.\nYou are good at computer science, engineering, and physics. You have experience "
        "in designing and developing computer software and hardware.",
    ),
    RoleProfile(
        "Mathematician",
        "You are a mathematician.\nYou are good at math games, arithmetic calculation, and long-term planning.",
    ),
    RoleProfile(
        "Economist",
        "You are an economist.\nYou are good at economics, finance, and business. You have experience on "
        "understanding charts while interpreting the macroeconomic environment prevailing across world economies.",
    ),
    RoleProfile(
        "Psychologist",
        "You are a psychologist.\nYou are good at psychology, sociology, and philosophy. You give people "
        "scientific suggestions that will make them feel better.",
    ),
    RoleProfile(
        "Historian",
        "You are a historian.\nYou research and analyze cultural, economic, political, and social events in the "
        "past, collect data from primary sources and use it to develop theories about what happened during "
        "various periods of history.",
    ),
    RoleProfile("Lawyer", "You are a lawyer.\nYou are good at law, politics, and history."),
    RoleProfile(
        "Doctor",
        "You are a doctor and come up with creative treatments for illnesses or diseases. You are able to "
        "recommend conventional medicines, herbal remedies and other natural alternatives. You also consider "
        "the patient's age, lifestyle and medical history when providing your recommendations.",
    ),
)

ROLES_BY_NAME = {r.name: r for r in ROLE_POOL}


def default_roster(n_agents: int, task: str = "math") -> list[RoleProfile]:
    """Roles for ``n_agents`` agents, cycling through the pool if N exceeds it.

    Duplicate roles get a numeric suffix so names stay unique within a run.
    """
    if task not in ("math", "knowledge"):
        raise ValueError("task must be 'math' or 'knowledge'")
    roster: list[RoleProfile] = []
    for i in range(n_agents):
        base = ROLE_POOL[i % len(ROLE_POOL)]
        if i >= len(ROLE_POOL):
            base = RoleProfile(f"{base.name}-{i // len(ROLE_POOL) + 1}", base.system_prompt)
        roster.append(base)
    return roster


def default_agent_count(task: str) -> int:
    return {"math": 4, "knowledge": 5}[task]


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    collab: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.user.strip():
            raise PromptError("user prompt must be non-empty")

    def collab_block(self) -> str:
        return "\n\n".join(format_peer(src, text) for src, text in self.collab)

    def user_message(self) -> str:
        if not self.collab:
            return self.user
        return f"{self.user}\n\n{self.collab_block()}"

    def render(self) -> str:
        return f"{self.system}\n\n{self.user_message()}"


def format_peer(source: str, text: str) -> str:
    return f"Peer {source} responded: {text}"


def assemble_prompt(role: RoleProfile, query: str, incoming: Sequence[tuple[str, str]], round: int) -> PromptBundle:
    """Build the prompt for one agent call; ``incoming`` keeps its given order."""
    if round < 0:
        raise PromptError("round must be >= 0")
    if round == 0 and incoming:
        raise PromptError("round 0 prompts cannot carry peer responses")
    return PromptBundle(system=role.system_prompt, user=query, collab=tuple((str(s), t) for s, t in incoming))


def count_tokens(text: str) -> int:
    """Whitespace token count; the offline stand-in for a tokenizer."""
    return len(text.split())
