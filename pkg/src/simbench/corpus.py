"""Training-corpus rendering and the diagnostic-accuracy evaluation.

Two corpora are emitted, both byte-deterministic:

* pre-training texts — one structured string per high-quality
  (profile, item, decision) triple, JSONL rows ``{"text": ...}``;
* instruction records — four parts (system, instruction, input, output)
  per defect sample, JSONL rows with exactly those fields. The output is
  the defect-label utterance and ``mask_span`` marks its character range
  inside the concatenated rendering, which is the executable contract for
  output-only loss masking downstream.
"""

from dataclasses import dataclass

from . import prompts
from .diagnosis import Diagnosis, diag_input, diagnose, oracle_diagnose
from .errors import BackendError, ParseError, SimbenchError
from .profile import render_prose
from .simulator import Behavior, DiscrepancyCase
from .structured import DefectLabel, join_topics

# Character budget heuristic standing in for token limits at emission time
# (256 tokens pre-train / 512 fine-tune, at roughly 4 characters per token).
PRETRAIN_CHAR_BUDGET = 1024
FINETUNE_CHAR_BUDGET = 2048

SYNTHETIC_DECLINE = "The simulated user declined this item under the current profile."

_PRETRAIN_TEMPLATE = """### User Profile
{profile}

### Item
Title: {title}
Genres: {genres}
Rating: {rating}

### Simulated Interaction
Decision: yes
Reason: {rationale}"""


class CorpusReject(SimbenchError):
    """The pair fails the quality filter; reported with its reason."""


@dataclass(frozen=True)
class PretrainRecord:
    text: str


@dataclass(frozen=True)
class InstructRecord:
    system: str
    instruction: str
    input: str
    output: str
    mask_span: tuple  # (start, end) character offsets within the rendering


@dataclass(frozen=True)
class DiagnosticReport:
    accuracy: float
    confusion: dict  # (true label value, predicted label value) -> count
    total: int
    failures: int  # backend/parse failures, counted incorrect

    def per_label_totals(self):
        totals = {label.value: 0 for label in DefectLabel}
        for (true, _), n in self.confusion.items():
            totals[true] += n
        return totals


def emit_pretrain(profile, item, decision, rating: int) -> PretrainRecord:
    """Render one pre-training text; rejects low-quality pairs."""
    if not decision.interact:
        raise CorpusReject("simulated decision did not match the observed "
                           "interaction")
    if rating < 3:
        raise CorpusReject(f"rating {rating} below the quality threshold")
    text = _PRETRAIN_TEMPLATE.format(
        profile=render_prose(profile),
        title=item.title,
        genres=join_topics(item.attributes),
        rating=rating,
        rationale=decision.rationale,
    )
    return PretrainRecord(text=text)


def render_instruct(system: str, instruction: str, input_text: str,
                    output: str) -> str:
    """The concatenated rendering the mask span is measured against."""
    return "\n\n".join([system, instruction, input_text, output])


def emit_finetune(sample) -> InstructRecord:
    """Render one four-part instruction record from a defect sample."""
    input_text = diag_input(sample.defective_profile, sample.target_item,
                            decline_reason=SYNTHETIC_DECLINE)
    output = sample.label.value
    rendering = render_instruct(prompts.DIAGNOSTIC_SYSTEM,
                                prompts.DIAGNOSTIC_INSTRUCTION,
                                input_text, output)
    start = len(rendering) - len(output)
    return InstructRecord(system=prompts.DIAGNOSTIC_SYSTEM,
                          instruction=prompts.DIAGNOSTIC_INSTRUCTION,
                          input=input_text, output=output,
                          mask_span=(start, len(rendering)))


def pretrain_row(record: PretrainRecord) -> dict:
    return {"text": record.text}


def instruct_row(record: InstructRecord) -> dict:
    return {"system": record.system, "instruction": record.instruction,
            "input": record.input, "output": record.output}


def _sample_case(sample) -> DiscrepancyCase:
    simulated = Behavior(interact=False, rationale=SYNTHETIC_DECLINE,
                         source="simulated")
    real = Behavior(interact=True, rationale="Observed interaction.",
                    source="real")
    return DiscrepancyCase(item=sample.target_item, simulated=simulated,
                           real=real, position=0)


def eval_diagnostic(predictor, test_set) -> DiagnosticReport:
    """Accuracy and 3x3 confusion of a diagnoser over labeled samples.

    ``predictor`` is either a completion backend (driven through the frozen
    diagnostic prompt) or a callable ``(profile, case) -> Diagnosis``.
    Backend failures count as incorrect and are tallied separately, so the
    confusion total equals ``len(test_set) - failures``.
    """
    if not test_set:
        raise SimbenchError("empty diagnostic test set")
    confusion = {}
    correct = 0
    failures = 0
    for sample in test_set:
        case = _sample_case(sample)
        try:
            if hasattr(predictor, "complete"):
                result = diagnose(sample.defective_profile, case, predictor)
            else:
                result = predictor(sample.defective_profile, case)
        except (BackendError, ParseError):
            failures += 1
            continue
        label = result.label if isinstance(result, Diagnosis) else result
        key = (sample.label.value, label.value)
        confusion[key] = confusion.get(key, 0) + 1
        if label is sample.label:
            correct += 1
    return DiagnosticReport(accuracy=correct / len(test_set),
                            confusion=confusion, total=len(test_set),
                            failures=failures)


def oracle_predictor(profile, case) -> Diagnosis:
    """The rule-based oracle in predictor form."""
    return oracle_diagnose(profile, case)
