"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, DataError 2,
BackendError 3, and an exceeded failure fraction 4.
"""

from __future__ import annotations


class AgentRankError(Exception):
    """Base class for all package errors."""


class DataError(AgentRankError):
    """Malformed or inconsistent input data (files, catalogs, traces)."""


class TraceError(DataError):
    """A blackboard trace failed to parse or validate.

    ``byte_offset`` points at the start of the offending line when the
    failure came from parsing a trace document.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (at byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class BackendError(AgentRankError):
    """An LLM backend call failed (network, cache miss, unscripted mock).

    ``agent_role`` names the agent on whose behalf the call was made.
    """

    def __init__(self, message: str, agent_role: str | None = None):
        self.base_message = message
        if agent_role:
            message = f"[{agent_role}] {message}"
        super().__init__(message)
        self.agent_role = agent_role
