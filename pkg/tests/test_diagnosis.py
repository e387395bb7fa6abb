import numpy as np
import pytest

from simbench import defects, diagnosis
from simbench.backend import MockBackend, ScriptedBackend
from simbench.errors import ParseError
from simbench.simulator import Behavior, DiscrepancyCase
from simbench.structured import DefectLabel

from conftest import make_item, make_profile

MOCK = MockBackend(0)


def _case(item):
    return DiscrepancyCase(
        item=item,
        simulated=Behavior(False, "declined under profile", "simulated"),
        real=Behavior(True, "observed", "real"),
        position=1)


def test_oracle_negative_and_uncovered_attribute_is_both():
    profile = make_profile([("negative", {"Comedy"}, "dislikes comedy.")])
    result = diagnosis.oracle_diagnose(
        profile, _case(make_item(attributes=("Comedy", "Romance"))))
    assert result.label is DefectLabel.INACCURATE_AND_INCOMPLETE
    assert result.weak_evidence is False


def test_oracle_covered_contradiction_is_inaccurate():
    profile = make_profile([("positive", {"Drama"}, "likes drama."),
                            ("negative", {"Comedy"}, "dislikes comedy.")])
    result = diagnosis.oracle_diagnose(profile,
                                       _case(make_item(attributes=("Comedy",))))
    assert result.label is DefectLabel.INACCURATE


def test_oracle_empty_profile_is_incomplete():
    result = diagnosis.oracle_diagnose(make_profile([]),
                                       _case(make_item(attributes=("Drama",))))
    assert result.label is DefectLabel.INCOMPLETE
    assert result.weak_evidence is False  # attribute entirely uncovered


def test_oracle_weak_evidence_fallback():
    # fully covered by positives and no contradiction: still Incomplete,
    # but flagged as weak evidence
    profile = make_profile([("positive", {"Drama"}, "likes drama.")])
    result = diagnosis.oracle_diagnose(profile,
                                       _case(make_item(attributes=("Drama",))))
    assert result.label is DefectLabel.INCOMPLETE
    assert result.weak_evidence is True


def test_diagnose_with_scripted_backend():
    profile = make_profile([])
    result = diagnosis.diagnose(profile, _case(make_item()),
                                ScriptedBackend(["Incomplete"]))
    assert result.label is DefectLabel.INCOMPLETE


def test_diagnose_surfaces_parse_failure():
    backend = ScriptedBackend(["??", "??", "??"])
    with pytest.raises(ParseError):
        diagnosis.diagnose(make_profile([]), _case(make_item()), backend)


def test_missing_interest_case_is_incomplete():
    # a highly rated title whose genre the profile never mentions
    profile = make_profile([
        ("positive", {"Literature & Fiction"}, "Fiction Enthusiast."),
        ("positive", {"Science Fiction"}, "Science Fiction Buff."),
    ])
    item = make_item("b1", "A Chronicle of Prewar Diplomacy",
                     ("Politics & Social Sciences",))
    assert diagnosis.oracle_diagnose(profile, _case(item)).label \
        is DefectLabel.INCOMPLETE
    assert diagnosis.diagnose(profile, _case(item), MOCK).label \
        is DefectLabel.INCOMPLETE


def test_completion_backed_mock_agrees_with_oracle_on_synthetic_cases():
    rng = np.random.default_rng(17)
    genres = ["Mystery", "Comedy", "Romance", "SciFi", "Drama", "Western"]
    agreements = 0
    for k in range(50):
        profile = make_profile([
            ("positive" if rng.integers(2) else "negative",
             {genres[int(rng.integers(len(genres)))]},
             f"statement {j}.")
            for j in range(int(rng.integers(1, 5)))
        ], user_id=f"u{k}")
        attrs = tuple({genres[int(rng.integers(len(genres)))]
                       for _ in range(int(rng.integers(1, 3)))})
        case = _case(make_item(f"i{k}", f"T{k}", attrs))
        via_prompt = diagnosis.diagnose(profile, case, MOCK).label
        via_oracle = diagnosis.oracle_diagnose(profile, case).label
        agreements += via_prompt is via_oracle
    assert agreements == 50


def test_oracle_recovers_planted_labels():
    rng = np.random.default_rng(3)
    profile = make_profile([
        ("positive", {"Mystery"}, "a."),
        ("positive", {"Thriller"}, "b."),
        ("positive", {"Drama"}, "c."),
    ])
    item = make_item(attributes=("Mystery", "Thriller"))
    for maker, label in (
            (lambda: defects.make_inaccurate(profile, item, rng),
             DefectLabel.INACCURATE),
            (lambda: defects.make_incomplete(profile, item, 0.5, rng),
             DefectLabel.INCOMPLETE),
            (lambda: defects.make_both(profile, item, 0.5, rng),
             DefectLabel.INACCURATE_AND_INCOMPLETE)):
        sample = maker()
        got = diagnosis.oracle_diagnose(sample.defective_profile,
                                        _case(item)).label
        assert got is label
