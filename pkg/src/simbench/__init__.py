"""simbench: a user-simulation workbench.

Iterative profile-defect diagnosis and treatment, synthetic defect-corpus
construction, and a multi-round simulator vs. sequential-recommender
arena, with every model-dependent role behind a pluggable completion
backend so control flow and invariants are verifiable offline.
"""

__version__ = "0.1.0"

from .backend import (  # noqa: F401
    ChatRequest,
    ChatResponse,
    MockBackend,
    RemoteBackend,
    ScriptedBackend,
    ScriptedDecisionBackend,
    complete,
)
from .config import RunConfig  # noqa: F401
from .structured import DefectLabel, Decision, parse_structured  # noqa: F401
