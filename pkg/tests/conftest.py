from pathlib import Path

import pytest

from simbench.catalog import Item
from simbench.profile import PreferenceStatement, UserProfile

REPO = Path(__file__).resolve().parents[1]
TOY_DIR = REPO / "data" / "toy"
GOLDEN = Path(__file__).parent / "golden"


def make_item(item_id="i1", title="The Silent Harbor",
              attributes=("Mystery",), mean_rating=None):
    return Item(item_id=item_id, title=title,
                attributes=frozenset(attributes), mean_rating=mean_rating)


def make_profile(statements, user_id="u1", version=0):
    """``statements``: iterable of (sentiment, topics, text) triples."""
    built = tuple(
        PreferenceStatement(statement_id=f"s{n}", topics=frozenset(topics),
                            sentiment=sentiment, text=text,
                            provenance="initial")
        for n, (sentiment, topics, text) in enumerate(statements, start=1))
    return UserProfile(user_id=user_id, statements=built, version=version)


@pytest.fixture
def toy_dir():
    return TOY_DIR
