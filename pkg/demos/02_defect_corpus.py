"""Synthesize a labeled defect corpus and check the oracle round-trip.

Starts from non-defective profile/item pairs, plants each of the three
defect types, renders the four-part instruction records, and shows that
the rule-based diagnostic oracle reads every planted label back.

    python3 demos/02_defect_corpus.py
"""

from collections import Counter

from simbench import corpus, defects
from simbench.catalog import Item
from simbench.profile import PreferenceStatement, UserProfile
from simbench.simulator import Behavior


def pair(k):
    statements = tuple(
        PreferenceStatement(f"s{j}", frozenset({genre}), "positive",
                            f"Strong interest in {genre}.", "initial")
        for j, genre in enumerate(["Mystery", "Thriller", "Drama"], start=1))
    profile = UserProfile(user_id=f"u{k}", statements=statements)
    item = Item(item_id=f"i{k}", title=f"Sample Title {k}",
                attributes=frozenset({"Mystery", "Thriller"}))
    behavior = Behavior(True, "Matches stated interest in Mystery, Thriller.",
                        "simulated")
    return defects.SourcePair(f"u{k}", profile, item, 5, behavior)


pairs = [pair(k) for k in range(60)]
train, test = defects.build_defect_corpus(pairs, seed=42)
print(f"corpus: {len(train)} train / {len(test)} test")
print("label histogram:", dict(Counter(s.label.value for s in train + test)))

sample = next(s for s in train
              if s.label is defects.DefectLabel.INACCURATE_AND_INCOMPLETE)
print("\n== one combined-defect sample ==")
print("edits applied:", [list(e) for e in sample.edits])
record = corpus.emit_finetune(sample)
print("\ninstruction-record input:\n" + record.input)
print("\noutput utterance:", record.output)
print("mask span:", record.mask_span)

report = corpus.eval_diagnostic(corpus.oracle_predictor, test)
print(f"\noracle round-trip accuracy on the test split: {report.accuracy}")
assert report.accuracy == 1.0
