"""Walk through one user's iterative profile optimization.

Builds a tiny interaction history, initializes a profile with the mock
backend, then traverses an optimization portion whose off-taste items
trigger discrepancy batches. Run from the repository root:

    python3 demos/01_profile_optimization.py
"""

from simbench.backend import MockBackend
from simbench.catalog import Item
from simbench.orchestrator import OptimizationStack, optimize
from simbench.profile import render_prose

mock = MockBackend(seed=0)
stack = OptimizationStack(simulator=mock, diagnosis=mock, treatment=mock)


def item(item_id, title, *genres):
    return Item(item_id=item_id, title=title, attributes=frozenset(genres))


# the user's initialization portion: mostly mysteries, a little drama
d_ini = [
    (item("m1", "The Silent Harbor", "Mystery"), 5),
    (item("m2", "The Crimson Archive", "Mystery"), 4),
    (item("m3", "The Hidden Lantern", "Mystery"), 5),
    (item("m4", "The Quiet Reckoning", "Drama", "Mystery"), 4),
    (item("d1", "The Distant Summit", "Drama"), 4),
]

# the optimization portion introduces genres the profile cannot explain
d_opt = [
    (item("s1", "The Electric Meridian", "SciFi"), 5),
    (item("m5", "The Velvet Cipher", "Mystery"), 4),
    (item("w1", "The Iron Frontier", "Western"), 5),
    (item("f1", "The Amber Carnival", "Fantasy"), 4),
    (item("s2", "The Frozen Signal", "SciFi", "Thriller"), 5),
    (item("r1", "The Golden Orchard", "Romance"), 3),
]

profile, trace = optimize(d_ini, d_opt, n1=2, stack=stack, user_id="demo")

print("== decisions along the optimization portion ==")
for record in trace.decisions:
    verdict = "interact" if record.interact else "decline "
    print(f"  item {record.item_id:>3} at position {record.position}: "
          f"{verdict} (profile v{record.profile_version})")

print(f"\n== {trace.optimizations} treated batches "
      f"(boundaries at {list(trace.batch_boundaries)}) ==")
for k, batch in enumerate(trace.batches, start=1):
    print(f"  batch {k}: positions {list(batch.positions)}, "
          f"labels {list(batch.labels)}")
    for suggestion in batch.suggestions:
        topics = ", ".join(sorted(suggestion.topics))
        print(f"    {suggestion.kind}: [{topics}] {suggestion.text}")

print(f"\n== optimized profile (version {profile.version}) ==")
print(render_prose(profile))
