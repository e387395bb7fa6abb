"""Interaction-dataset ingestion, filtering and chronological splits.

Two on-disk formats are supported:

* ``movielens-dat`` — a directory holding ``ratings.dat``
  (``UserID::MovieID::Rating::Timestamp``) and ``movies.dat``
  (``MovieID::Title::Genre|Genre``).
* ``amazon-json`` — a directory holding ``reviews.jsonl`` (fields
  ``reviewerID``, ``asin``, ``overall``, ``unixReviewTime``) and
  ``meta.jsonl`` (fields ``asin``, ``title``, ``category``).

Filtering removes users and items below the interaction threshold and is
iterated to a fixed point, since one removal pass can push other entities
under the threshold.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DatasetError
from .seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str
    attributes: frozenset = field(default_factory=frozenset)
    mean_rating: float = None


@dataclass(frozen=True)
class Interaction:
    user_id: str
    item_id: str
    rating: int
    timestamp: int


@dataclass(frozen=True)
class InteractionDataset:
    users: dict  # user_id -> tuple[Interaction, ...] in chronological order
    items: dict  # item_id -> Item
    warnings: tuple = ()

    @property
    def n_interactions(self) -> int:
        return sum(len(seq) for seq in self.users.values())


@dataclass(frozen=True)
class UserSplit:
    """Chronological partition of one (truncated) user sequence.

    ``d_ini + d_opt + (validation,) + test`` equals the truncated sequence.
    """

    d_ini: tuple
    d_opt: tuple
    validation: Interaction
    test: tuple


@dataclass(frozen=True)
class SplitSummary:
    eligible: int
    excluded: int
    excluded_users: tuple


def _read_lines(path: Path):
    try:
        with open(path, encoding="utf-8", errors="replace") as fh:
            for n, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if line:
                    yield n, line
    except OSError as exc:
        raise DatasetError(f"unreadable file {path}: {exc}")


def _record_problem(problems, path, lineno, message, on_error):
    note = f"{path.name}:{lineno}: {message}"
    if on_error == "fatal":
        raise DatasetError(note)
    logger.warning("skipping malformed record %s", note)
    problems.append(note)


def _load_movielens(root: Path, on_error: str):
    problems = []
    interactions = []
    for lineno, line in _read_lines(root / "ratings.dat"):
        parts = line.split("::")
        if len(parts) != 4:
            _record_problem(problems, root / "ratings.dat", lineno,
                            "expected 4 '::' fields", on_error)
            continue
        user, item, rating, ts = parts
        try:
            rating_i, ts_i = int(rating), int(ts)
        except ValueError:
            _record_problem(problems, root / "ratings.dat", lineno,
                            "non-integer rating or timestamp", on_error)
            continue
        if not 1 <= rating_i <= 5:
            _record_problem(problems, root / "ratings.dat", lineno,
                            f"rating {rating_i} outside 1..5", on_error)
            continue
        interactions.append(Interaction(user, item, rating_i, ts_i))

    meta = {}
    movies = root / "movies.dat"
    if movies.exists():
        for lineno, line in _read_lines(movies):
            parts = line.split("::")
            if len(parts) != 3:
                _record_problem(problems, movies, lineno,
                                "expected 3 '::' fields", on_error)
                continue
            item, title, genres = parts
            meta[item] = (title, frozenset(g for g in genres.split("|") if g))
    return interactions, meta, problems


def _load_amazon(root: Path, on_error: str):
    problems = []
    interactions = []
    reviews = root / "reviews.jsonl"
    for lineno, line in _read_lines(reviews):
        try:
            rec = json.loads(line)
            user = str(rec["reviewerID"])
            item = str(rec["asin"])
            rating_i = int(float(rec["overall"]))
            ts_i = int(rec["unixReviewTime"])
        except (ValueError, KeyError, TypeError):
            _record_problem(problems, reviews, lineno,
                            "missing or malformed review fields", on_error)
            continue
        if not 1 <= rating_i <= 5:
            _record_problem(problems, reviews, lineno,
                            f"rating {rating_i} outside 1..5", on_error)
            continue
        interactions.append(Interaction(user, item, rating_i, ts_i))

    meta = {}
    meta_path = root / "meta.jsonl"
    if meta_path.exists():
        for lineno, line in _read_lines(meta_path):
            try:
                rec = json.loads(line)
                item = str(rec["asin"])
                title = str(rec.get("title", ""))
                category = rec.get("category", [])
                if isinstance(category, str):
                    category = [category]
                meta[item] = (title, frozenset(c for c in category if c))
            except (ValueError, KeyError, TypeError):
                _record_problem(problems, meta_path, lineno,
                                "missing or malformed metadata fields", on_error)
    return interactions, meta, problems


def _fixed_point_filter(interactions, min_interactions: int):
    """Drop under-threshold users/items until no entity falls below it."""
    current = list(interactions)
    while True:
        user_counts, item_counts = {}, {}
        for it in current:
            user_counts[it.user_id] = user_counts.get(it.user_id, 0) + 1
            item_counts[it.item_id] = item_counts.get(it.item_id, 0) + 1
        kept = [it for it in current
                if user_counts[it.user_id] >= min_interactions
                and item_counts[it.item_id] >= min_interactions]
        if len(kept) == len(current):
            return kept
        current = kept


def ingest(source_path, format: str, min_interactions: int,
           on_error: str = "skip") -> InteractionDataset:
    """Load, filter to a fixed point, and order interactions per user."""
    root = Path(source_path)
    if not root.exists():
        raise DatasetError(f"no such path: {root}")
    if format == "movielens-dat":
        interactions, meta, problems = _load_movielens(root, on_error)
    elif format == "amazon-json":
        interactions, meta, problems = _load_amazon(root, on_error)
    else:
        raise DatasetError(f"unknown format: {format!r}")

    kept = _fixed_point_filter(interactions, min_interactions)

    by_user = {}
    for it in kept:
        by_user.setdefault(it.user_id, []).append(it)
    users = {u: tuple(sorted(seq, key=lambda it: it.timestamp))
             for u, seq in sorted(by_user.items())}

    rating_sums = {}
    for it in kept:
        total, n = rating_sums.get(it.item_id, (0, 0))
        rating_sums[it.item_id] = (total + it.rating, n + 1)
    items = {}
    for item_id, (total, n) in sorted(rating_sums.items()):
        title, attrs = meta.get(item_id, (f"Item {item_id}", frozenset()))
        items[item_id] = Item(item_id, title, attrs, round(total / n, 4))
    return InteractionDataset(users=users, items=items,
                              warnings=tuple(problems))


def split_user(sequence, alpha: float, max_len: int, test_n: int = 10,
               min_train: int = 5):
    """Split one chronological sequence; ``None`` when the user is too short.

    The sequence is first truncated to its most recent ``max_len`` entries;
    the last ``test_n`` become the test set and the next most recent one the
    validation item. A user qualifies only when more than ``min_train``
    training interactions remain.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    seq = tuple(sequence)[-max_len:]
    train_len = len(seq) - test_n - 1
    if train_len <= min_train:
        return None
    train = seq[:train_len]
    n_ini = math.floor(train_len * alpha)
    return UserSplit(d_ini=train[:n_ini], d_opt=train[n_ini:],
                     validation=seq[train_len], test=seq[train_len + 1:])


def split_dataset(dataset: InteractionDataset, alpha: float, max_len: int,
                  test_n: int = 10, min_train: int = 5):
    """Per-user splits plus a summary of excluded users."""
    splits, excluded = {}, []
    for user_id, seq in dataset.users.items():
        split = split_user(seq, alpha, max_len, test_n, min_train)
        if split is None:
            excluded.append(user_id)
        else:
            splits[user_id] = split
    return splits, SplitSummary(eligible=len(splits), excluded=len(excluded),
                                excluded_users=tuple(excluded))


def sample_users(user_ids, n: int, seed: int):
    """Deterministic seeded sample of simulated users (sorted for stability)."""
    pool = sorted(user_ids)
    if len(pool) <= n:
        return pool
    rng = derive_rng(seed, "user-sample")
    picked = rng.choice(len(pool), size=n, replace=False)
    return sorted(pool[i] for i in picked)
