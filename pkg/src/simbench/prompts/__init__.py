"""Versioned prompt assets.

These files are frozen fixtures: the corpus golden tests (and anything
fine-tuned against emitted corpora) depend on their exact bytes, so edits
here must fail tests loudly.
"""

from importlib import resources


def load(name: str) -> str:
    return (resources.files(__package__) / f"{name}.txt").read_text(
        encoding="utf-8").rstrip("\n")


DIAGNOSTIC_SYSTEM = load("diagnostic_system")
DIAGNOSTIC_INSTRUCTION = load("diagnostic_instruction")
TREATMENT_REASON = load("treatment_reason")
TREATMENT_SUGGESTIONS = load("treatment_suggestions")
TREATMENT_REFINE = load("treatment_refine")
