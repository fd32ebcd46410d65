from .base import Agent, ResponseRecord
from .http import HttpAgent, HttpEndpoint, http_respond
from .roles import (
    ROLE_POOL,
    PromptBundle,
    RoleProfile,
    assemble_prompt,
    count_tokens,
    default_roster,
    format_peer,
)
from .sim import (
    AnswerGeometry,
    SimAgent,
    SimAgentModel,
    SimPopulation,
    is_correct_text,
    parse_tag,
    sim_respond,
)

__all__ = [
    "Agent",
    "AnswerGeometry",
    "HttpAgent",
    "HttpEndpoint",
    "PromptBundle",
    "ROLE_POOL",
    "ResponseRecord",
    "RoleProfile",
    "SimAgent",
    "SimAgentModel",
    "SimPopulation",
    "assemble_prompt",
    "count_tokens",
    "default_roster",
    "format_peer",
    "http_respond",
    "is_correct_text",
    "parse_tag",
    "sim_respond",
]
