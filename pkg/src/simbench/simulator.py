"""The user-simulator decision function and discrepancy detection.

A discrepancy is the optimization trigger: the simulator declined an item
the real user actually consumed. While traversing the optimization portion
every real behavior is an observed interaction, so every mismatch there is
a decline-type discrepancy. Items a user never touched (arena negatives)
carry real ``interact=False`` by convention.
"""

from dataclasses import dataclass

from . import backend as be
from .profile import UserProfile, render_prose

_DECIDE_SYSTEM = (
    "You role-play a media consumer whose tastes are described by the "
    "profile below. Judge items strictly by that profile."
)
_DECIDE_TASK = (
    "Would this user choose to interact with (click) the item above?\n"
    "Answer in exactly this form:\n"
    "Decision: yes|no\n"
    "Reason: one sentence"
)


@dataclass(frozen=True)
class Behavior:
    interact: bool
    rationale: str
    source: str  # "simulated" | "real"
    exit: bool = False


@dataclass(frozen=True)
class DiscrepancyCase:
    """An item the real user consumed but the simulator declined."""

    item: object
    simulated: Behavior
    real: Behavior
    position: int


def decide(profile: UserProfile, item, backend, attempts: int = 3) -> Behavior:
    """One completion call judging a single item against the profile."""
    prompt = "\n\n".join([
        be.profile_block(render_prose(profile)),
        be.item_block(item.title, item.attributes),
        _DECIDE_TASK,
    ])
    request = be.chat_request(_DECIDE_SYSTEM, prompt, hint="decision")
    decision = be.request_payload(request, backend, "decision", attempts)
    return Behavior(interact=decision.interact, rationale=decision.rationale,
                    source="simulated", exit=decision.exit)


def observed_behavior(rating: int = None) -> Behavior:
    """Real behavior for an item present in the user's sequence."""
    note = "Observed interaction."
    if rating is not None:
        note = f"Observed interaction with rating {rating}."
    return Behavior(interact=True, rationale=note, source="real")


def negative_behavior() -> Behavior:
    """Real behavior for an item the user never touched."""
    return Behavior(interact=False, rationale="No observed interaction.",
                    source="real")


def find_discrepancy(simulated: Behavior, real: Behavior, item,
                     position: int):
    """A case exactly when the simulator declined an observed interaction."""
    if not simulated.interact and real.interact:
        return DiscrepancyCase(item=item, simulated=simulated, real=real,
                               position=position)
    return None
