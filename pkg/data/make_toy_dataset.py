"""Generate the bundled toy dataset (run once; the outputs are frozen).

Writes ``data/toy/ratings.dat`` and ``data/toy/movies.dat`` in the
MovieLens ``::`` format: 30 users with 24-34 distinct rated items each,
120 items over 10 genres (half single-genre, half adjacent-genre pairs).
Each user favors one adjacent genre pair, so initialization covers their
core tastes while off-taste items leave room for discrepancies, and the
catalog stays large enough to sample 19 slate negatives outside any
user's history.
"""

from pathlib import Path

import numpy as np

GENRES = ["Action", "Comedy", "Documentary", "Drama", "Fantasy",
          "Mystery", "Romance", "SciFi", "Thriller", "Western"]
ADJECTIVES = ["Silent", "Crimson", "Golden", "Hidden", "Broken", "Distant",
              "Electric", "Frozen", "Midnight", "Paper", "Scarlet",
              "Wandering", "Iron", "Velvet", "Hollow", "Amber", "Restless",
              "Clockwork", "Savage", "Quiet"]
NOUNS = ["Harbor", "Archive", "Garden", "Parallel", "Signal", "Covenant",
         "Lantern", "Meridian", "Orchard", "Cipher", "Voyage", "Summit",
         "Mirage", "Tempest", "Ballad", "Frontier", "Reckoning",
         "Satellite", "Labyrinth", "Carnival"]

SEED = 20240817
BASE_TS = 970_000_000


def build_items(rng):
    combos = [(a, n) for a in ADJECTIVES for n in NOUNS]
    picked = rng.choice(len(combos), size=120, replace=False)
    titles = [f"The {combos[i][0]} {combos[i][1]}" for i in picked]
    items = []
    for k in range(120):
        item_id = str(101 + k)
        if k < 60:
            genres = [GENRES[k % 10]]
        else:
            g = (k - 60) % 10
            genres = [GENRES[g], GENRES[(g + 1) % 10]]
        items.append((item_id, titles[k], genres))
    return items


def build_ratings(rng, items):
    by_genre = {}
    for item_id, _, genres in items:
        for g in genres:
            by_genre.setdefault(g, []).append(item_id)
    rows = []
    for u in range(1, 31):
        g = (u - 1) % 10
        preferred = {GENRES[g], GENRES[(g + 1) % 10]}
        pref_pool = sorted({i for p in preferred for i in by_genre[p]})
        other_pool = sorted({i for i, _, _ in items} - set(pref_pool))
        length = int(rng.integers(24, 35))
        n_pref = min(len(pref_pool), max(1, round(length * 0.7)))
        n_other = min(len(other_pool), length - n_pref)
        chosen = list(rng.choice(pref_pool, size=n_pref, replace=False))
        chosen += list(rng.choice(other_pool, size=n_other, replace=False))
        rng.shuffle(chosen)
        genre_of = {i: set(gs) for i, _, gs in items}
        for step, item_id in enumerate(chosen):
            liked = bool(genre_of[item_id] & preferred)
            if liked:
                rating = int(rng.choice([3, 4, 4, 5, 5]))
            else:
                rating = int(rng.choice([1, 2, 3, 3, 4]))
            ts = BASE_TS + u * 1000 + step * 86_400
            rows.append((str(u), item_id, rating, ts))
    return rows


def main():
    rng = np.random.default_rng(SEED)
    items = build_items(rng)
    rows = build_ratings(rng, items)
    out = Path(__file__).parent / "toy"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "movies.dat", "w", encoding="utf-8", newline="\n") as fh:
        for item_id, title, genres in items:
            fh.write(f"{item_id}::{title}::{'|'.join(genres)}\n")
    with open(out / "ratings.dat", "w", encoding="utf-8", newline="\n") as fh:
        for user, item, rating, ts in rows:
            fh.write(f"{user}::{item}::{rating}::{ts}\n")
    print(f"wrote {len(items)} items, {len(rows)} ratings to {out}")


if __name__ == "__main__":
    main()
