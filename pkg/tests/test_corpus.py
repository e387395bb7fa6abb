import json
from collections import Counter

import numpy as np
import pytest

from simbench import corpus, defects
from simbench.backend import MockBackend, ScriptedBackend
from simbench.diagnosis import Diagnosis
from simbench.simulator import Behavior
from simbench.structured import DefectLabel

from conftest import GOLDEN, make_item, make_profile

MOCK = MockBackend(0)


def _books_profile():
    return make_profile([
        ("positive", {"Literature & Fiction"}, "Fiction Enthusiast."),
        ("positive", {"Science Fiction"}, "Science Fiction Buff."),
    ])


def _books_item():
    return make_item("b7", "The Amber Meridian", ("Literature & Fiction",))


def _accepting_behavior():
    return Behavior(True, "Matches stated interest in Literature & Fiction.",
                    "simulated")


def test_emit_pretrain_matches_golden_file():
    record = corpus.emit_pretrain(_books_profile(), _books_item(),
                                  _accepting_behavior(), 5)
    golden = (GOLDEN / "pretrain_sample.txt").read_text()
    assert record.text + "\n" == golden


def test_emit_pretrain_rejects_low_rating():
    with pytest.raises(corpus.CorpusReject, match="rating 2"):
        corpus.emit_pretrain(_books_profile(), _books_item(),
                             _accepting_behavior(), 2)


def test_emit_pretrain_rejects_mismatched_decision():
    declined = Behavior(False, "no match", "simulated")
    with pytest.raises(corpus.CorpusReject):
        corpus.emit_pretrain(_books_profile(), _books_item(), declined, 5)


def test_emit_pretrain_byte_deterministic():
    a = corpus.emit_pretrain(_books_profile(), _books_item(),
                             _accepting_behavior(), 5)
    b = corpus.emit_pretrain(_books_profile(), _books_item(),
                             _accepting_behavior(), 5)
    assert a.text == b.text


def _sample():
    return defects.make_inaccurate(_books_profile(), _books_item(),
                                   np.random.default_rng(0))


def test_emit_finetune_matches_golden_file():
    record = corpus.emit_finetune(_sample())
    row = corpus.instruct_row(record)
    row["mask_span"] = list(record.mask_span)
    golden = json.loads((GOLDEN / "finetune_sample.json").read_text())
    assert row == golden


def test_finetune_output_is_label_utterance():
    assert corpus.emit_finetune(_sample()).output == "Inaccurate"


def test_mask_span_identity_over_corpus():
    pairs = [defects.SourcePair(f"u{k}", _books_profile(),
                                make_item(f"i{k}", f"Title {k}",
                                          ("Literature & Fiction",
                                           "Science Fiction")),
                                5, _accepting_behavior())
             for k in range(60)]
    train, test = defects.build_defect_corpus(pairs, seed=1)
    labels = Counter()
    for sample in train + test:
        record = corpus.emit_finetune(sample)
        rendering = corpus.render_instruct(record.system, record.instruction,
                                           record.input, record.output)
        start, end = record.mask_span
        assert rendering[start:end] == record.output
        assert end - start == len(record.output)
        labels[record.output] += 1
    # the emitted histogram preserves the corpus label histogram
    assert labels == Counter(s.label.value for s in train + test)
    assert len(train) + len(test) == 60


def test_system_and_instruction_constant_across_records():
    records = [corpus.emit_finetune(_sample()) for _ in range(5)]
    assert len({r.system for r in records}) == 1
    assert len({r.instruction for r in records}) == 1


def _uniform_test_set(n=30):
    pairs = [defects.SourcePair(f"u{k}", _books_profile(),
                                make_item(f"i{k}", f"Title {k}",
                                          ("Literature & Fiction",
                                           "Science Fiction")),
                                5, _accepting_behavior())
             for k in range(n)]
    train, test = defects.build_defect_corpus(pairs, seed=5)
    return train + test


def test_eval_diagnostic_oracle_is_perfect():
    report = corpus.eval_diagnostic(corpus.oracle_predictor,
                                    _uniform_test_set())
    assert report.accuracy == 1.0
    assert report.failures == 0
    assert sum(report.confusion.values()) == report.total


def test_eval_diagnostic_constant_predictor():
    test_set = _uniform_test_set()
    constant = lambda profile, case: Diagnosis(DefectLabel.INCOMPLETE, "const")
    report = corpus.eval_diagnostic(constant, test_set)
    share = sum(s.label is DefectLabel.INCOMPLETE for s in test_set)
    assert report.accuracy == pytest.approx(share / len(test_set))
    assert abs(report.accuracy - 1 / 3) < 0.1


def test_eval_diagnostic_confusion_rows_sum_to_label_counts():
    test_set = _uniform_test_set()
    report = corpus.eval_diagnostic(corpus.oracle_predictor, test_set)
    expected = Counter(s.label.value for s in test_set)
    assert report.per_label_totals() == dict(expected) | {
        label.value: expected.get(label.value, 0) for label in DefectLabel}


def test_eval_diagnostic_counts_backend_failures():
    test_set = _uniform_test_set(12)
    # the scripted backend dries up after answering four prompts
    backend = ScriptedBackend(["Incomplete"] * 4)
    report = corpus.eval_diagnostic(backend, test_set)
    assert report.failures == len(test_set) - 4
    assert sum(report.confusion.values()) == 4
    assert report.accuracy <= 4 / len(test_set)


def test_eval_diagnostic_with_mock_backend_is_perfect():
    report = corpus.eval_diagnostic(MOCK, _uniform_test_set())
    assert report.accuracy == 1.0


def test_eval_diagnostic_empty_set_rejected():
    with pytest.raises(Exception):
        corpus.eval_diagnostic(corpus.oracle_predictor, [])
