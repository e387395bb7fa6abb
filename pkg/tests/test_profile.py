import pytest

from simbench import profile as pr
from simbench.backend import MockBackend, ScriptedBackend
from simbench.errors import InvariantViolation, SimbenchError
from simbench.structured import EMPTY_PROFILE_SENTINEL

from conftest import make_item, make_profile

MOCK = MockBackend(0)


def _d_ini(counts):
    """counts: genre -> number of items; ratings all 4."""
    entries = []
    k = 0
    for genre, n in counts.items():
        for _ in range(n):
            entries.append((make_item(f"i{k}", f"Title {k}", (genre,)), 4))
            k += 1
    return entries


def test_init_profile_covers_dominant_genres():
    profile = pr.init_profile(_d_ini({"Mystery": 8, "Comedy": 1, "Drama": 1}),
                              MOCK, user_id="u1")
    assert profile.version == 0
    topics = {t for s in profile.statements for t in s.topics}
    assert topics == {"Mystery"}  # 80% coverage; the others sit at 10%
    assert all(s.sentiment == "positive" for s in profile.statements)
    assert all(s.provenance == "initial" for s in profile.statements)


def test_init_profile_rejects_empty_history():
    with pytest.raises(SimbenchError):
        pr.init_profile([], MOCK)


def test_render_prose_empty_sentinel():
    assert pr.render_prose(make_profile([])) == EMPTY_PROFILE_SENTINEL


def test_render_prose_ignores_statement_ids():
    a = make_profile([("positive", {"Mystery"}, "Enjoys mysteries.")])
    b = pr.UserProfile(user_id="other", statements=(
        pr.PreferenceStatement("s999", frozenset({"Mystery"}), "positive",
                               "Enjoys mysteries.", "update"),))
    assert pr.render_prose(a) == pr.render_prose(b)


GOLDEN_PROSE = """\
- (positive) [Literature & Fiction] Fiction Enthusiast.
- (positive) [Science Fiction] Science Fiction Buff.
- (negative) [Comedy] Averse to slapstick humor.
- (positive) [History; Politics & Social Sciences] Reads deeply about public affairs.
- (negative) [Westerns] Finds frontier stories repetitive."""


def test_render_prose_golden_fixture():
    profile = make_profile([
        ("positive", {"Literature & Fiction"}, "Fiction Enthusiast."),
        ("positive", {"Science Fiction"}, "Science Fiction Buff."),
        ("negative", {"Comedy"}, "Averse to slapstick humor."),
        ("positive", {"Politics & Social Sciences", "History"},
         "Reads deeply about public affairs."),
        ("negative", {"Westerns"}, "Finds frontier stories repetitive."),
    ])
    assert pr.render_prose(profile) == GOLDEN_PROSE


def test_relevant_statements_intersection():
    profile = make_profile([
        ("positive", {"Comedy", "Romance"}, "Light fare."),
        ("positive", {"Drama"}, "Serious fare."),
    ])
    item = make_item(attributes=("Comedy",))
    found = pr.relevant_statements(profile, item)
    assert [s.statement_id for s in found] == ["s1"]
    assert pr.relevant_statements(
        make_profile([("positive", {"Drama"}, "x.")]), item) == []


def test_relevant_statements_case_insensitive_brute_force():
    statements = [
        ("positive", {"Mystery", "Comedy"}, "a."),
        ("negative", {"COMEDY"}, "b."),
        ("positive", {"romance"}, "c."),
        ("positive", {"SciFi"}, "d."),
        ("negative", {"Drama", "Romance"}, "e."),
        ("positive", {"Western"}, "f."),
    ]
    profile = make_profile(statements)
    item = make_item(attributes=("comedy", "Romance", "drama"))
    expected = []
    for s in profile.statements:
        hit = False
        for topic in s.topics:
            for attr in item.attributes:
                if topic.casefold() == attr.casefold():
                    hit = True
        if hit:
            expected.append(s.statement_id)
    got = [s.statement_id for s in pr.relevant_statements(profile, item)]
    assert got == expected and len(got) == 4


def test_update_strategy_none_is_noop():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    updated = pr.update_profile(profile, "none", backend=MOCK)
    assert updated is profile


def test_update_with_gt_adds_missing_topic():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    gt = make_item(attributes=("Documentary",))
    updated = pr.update_profile(profile, "with_gt", gt=gt, backend=MOCK,
                                round_index=3)
    assert updated.version == profile.version + 1
    added = [s for s in updated.statements if "Documentary" in s.topics]
    assert len(added) == 1
    assert added[0].sentiment == "positive"
    assert added[0].provenance == "arena(3)"
    assert len(updated.history) == updated.version


def test_update_without_selection_is_noop():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    updated = pr.update_profile(profile, "without_gt", selected=None,
                                gt=make_item(), backend=MOCK)
    assert updated is profile


def test_update_without_gt_uses_selection():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    selected = make_item(attributes=("Fantasy",))
    updated = pr.update_profile(profile, "without_gt", selected=selected,
                                backend=MOCK)
    assert any("Fantasy" in s.topics for s in updated.statements)


def test_update_flips_relevant_negative_when_covered():
    profile = make_profile([("negative", {"Comedy"}, "Averse to Comedy.")])
    gt = make_item(attributes=("Comedy",))
    updated = pr.update_profile(profile, "with_gt", gt=gt, backend=MOCK)
    assert len(updated.statements) == 1
    assert updated.statements[0].sentiment == "positive"


def test_update_minimality_over_many_rounds():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    genres = ["Fantasy", "SciFi", "Mystery", "Drama", "Comedy"]
    for k, genre in enumerate(genres, start=1):
        updated = pr.update_profile(profile, "with_gt",
                                    gt=make_item(attributes=(genre,)),
                                    backend=MOCK, round_index=k)
        assert abs(len(updated.statements) - len(profile.statements)) <= 1
        assert updated.version == profile.version + 1
        assert len(updated.history) == updated.version
        profile = updated


def test_unknown_strategy_rejected():
    with pytest.raises(ValueError):
        pr.update_profile(make_profile([]), "sometimes", backend=MOCK)


def test_with_gt_requires_gt():
    with pytest.raises(SimbenchError):
        pr.update_profile(make_profile([]), "with_gt", backend=MOCK)


def test_title_leak_guard_rejects_after_reprompt():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    leak = ("- (positive) [Drama] x.\n"
            "- (positive) [Mystery] Loved The Silent Harbor deeply.")
    backend = ScriptedBackend([leak, leak])
    with pytest.raises(InvariantViolation, match="title"):
        pr.update_profile(profile, "with_gt",
                          gt=make_item(title="The Silent Harbor",
                                       attributes=("Mystery",)),
                          backend=backend)


def test_non_minimal_update_rejected():
    profile = make_profile([("positive", {"Drama"}, "x.")])
    bulk = ("- (positive) [Drama] x.\n"
            "- (positive) [Mystery] new one.\n"
            "- (positive) [Comedy] another one.")
    backend = ScriptedBackend([bulk, bulk])
    with pytest.raises(InvariantViolation, match="minimal"):
        pr.update_profile(profile, "with_gt",
                          gt=make_item(attributes=("Mystery",)),
                          backend=backend)


def test_adopt_preserves_identity_of_kept_statements():
    profile = make_profile([("positive", {"Drama"}, "x."),
                            ("negative", {"Comedy"}, "y.")])
    drafts = tuple(s.draft() for s in profile.statements)
    new_draft = pr.StatementDraft("positive", frozenset({"Fantasy"}), "z.")
    adopted = pr.adopt_drafts(profile, drafts + (new_draft,), "cause", "tag")
    assert adopted.statements[0] is profile.statements[0]
    assert adopted.statements[1] is profile.statements[1]
    assert adopted.statements[2].statement_id == "s3"
    assert adopted.statements[2].provenance == "tag"
