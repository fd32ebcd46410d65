"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ContribDagError(Exception):
    """Base class for all package errors."""


class EmbeddingError(ContribDagError):
    pass


class EmptyTextError(EmbeddingError):
    pass


class DimensionMismatchError(EmbeddingError):
    pass


class ZeroVectorError(EmbeddingError):
    pass


class ServiceUnavailableError(EmbeddingError):
    pass


class TooManyAgentsError(ContribDagError):
    pass


class AlignmentViolationError(ContribDagError):
    """Some agent embedding is orthogonal to the mean, so the bound constant is undefined."""


class BoundViolationError(ContribDagError):
    """A residual exceeded the approximation bound while strict checking was requested."""


class RankingCounterexample(ContribDagError):
    """A pair passed the separation test but the normalized Shapley order disagreed."""


class InfeasibleGeometryError(ContribDagError):
    pass


class InvalidDistributionError(ContribDagError):
    pass


class PromptError(ContribDagError):
    pass


class AgentCallError(ContribDagError):
    """Backend failure, tagged with the agent and round that triggered it."""

    def __init__(self, message: str, agent_id: int | None = None, round: int | None = None):
        self.agent_id = agent_id
        self.round = round
        where = []
        if agent_id is not None:
            where.append(f"agent={agent_id}")
        if round is not None:
            where.append(f"round={round}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)


class TransportError(AgentCallError):
    pass


class StatusError(AgentCallError):
    def __init__(self, message: str, status: int, agent_id: int | None = None, round: int | None = None):
        self.status = status
        super().__init__(message, agent_id=agent_id, round=round)


class MalformedResponseError(AgentCallError):
    pass


class RoundError(ContribDagError):
    """An agent call failed mid-round; ``partial`` holds the responses gathered so far."""

    def __init__(self, message: str, round: int, partial: list, cause: BaseException | None = None):
        self.round = round
        self.partial = partial
        self.cause = cause
        super().__init__(message)


class ConfigError(ContribDagError):
    """Validation failure. ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class QueryFileError(ContribDagError):
    pass


class OutputExistsError(ContribDagError):
    pass
