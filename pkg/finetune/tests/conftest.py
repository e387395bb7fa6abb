"""Corpus fixtures, produced through the workbench's file contracts."""

import json

import pytest

from simbench import corpus, defects
from simbench.catalog import Item
from simbench.profile import PreferenceStatement, UserProfile
from simbench.simulator import Behavior

GENRE_SETS = [
    ("Mystery", "Thriller"),
    ("Literature & Fiction", "Science Fiction"),
    ("Drama", "Romance"),
]


def _pair(k):
    genres = GENRE_SETS[k % len(GENRE_SETS)]
    statements = tuple(
        PreferenceStatement(f"s{j}", frozenset({g}), "positive",
                            f"Strong interest in {g}.", "initial")
        for j, g in enumerate(genres + ("Documentary",), start=1))
    profile = UserProfile(user_id=f"u{k}", statements=statements)
    item = Item(item_id=f"i{k}", title=f"Sample Title {k}",
                attributes=frozenset(genres))
    behavior = Behavior(True, "Matches stated interests.", "simulated")
    return defects.SourcePair(f"u{k}", profile, item, 5, behavior)


def build_corpora(tmp_path, n_pairs=250):
    pairs = [_pair(k) for k in range(n_pairs)]
    train, test = defects.build_defect_corpus(pairs, seed=3)

    pretrain_path = tmp_path / "pretrain.jsonl"
    with open(pretrain_path, "w", encoding="utf-8") as fh:
        for pair in pairs[:120]:
            record = corpus.emit_pretrain(pair.profile, pair.item,
                                          pair.behavior, pair.rating)
            fh.write(json.dumps(corpus.pretrain_row(record)) + "\n")

    train_path = tmp_path / "finetune_train.jsonl"
    with open(train_path, "w", encoding="utf-8") as fh:
        for sample in train:
            row = corpus.instruct_row(corpus.emit_finetune(sample))
            fh.write(json.dumps(row) + "\n")

    test_path = tmp_path / "finetune_test.jsonl"
    with open(test_path, "w", encoding="utf-8") as fh:
        for sample in test:
            row = corpus.instruct_row(corpus.emit_finetune(sample))
            fh.write(json.dumps(row) + "\n")
    return pretrain_path, train_path, test_path, train, test


@pytest.fixture(scope="session")
def corpora(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("corpora")
    return build_corpora(tmp_path)
