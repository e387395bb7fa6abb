"""Multi-round arena: optimized simulator versus a trained recommender.

Runs the whole staged pipeline on the bundled toy dataset with mock
backends, then prints the pooled consistency metrics and the per-round
cumulative precision series for the resulting round logs.

    python3 demos/03_arena_session.py
"""

import tempfile
from pathlib import Path

from simbench import arena, runner
from simbench.config import RunConfig

workdir = Path(tempfile.mkdtemp(prefix="arena-demo-"))
config = RunConfig.from_dict({
    "dataset_path": str(Path(__file__).resolve().parents[1] / "data" / "toy"),
    "min_interactions": 3,
    "seed": 7,
    "n1": 2,
    "strategy": "with_gt",
    "recommender": "fpmc",
    "rec_params": {"dim": 16, "learning_rate": 0.05, "reg": 0.01,
                   "batch_size": 64, "epochs": 8},
    "user_sample": 8,
    "output_dir": str(workdir / "run"),
})

artifacts = runner.run(config)
print(f"artifacts under {config.output_dir}:")
for name in sorted(artifacts):
    print(f"  {name}")

logs = runner.load_round_logs(Path(artifacts["rounds.jsonl"]))
metrics = arena.compute_metrics(logs)
print(f"\npooled over {len(logs)} rounds "
      f"(per-candidate judgments):")
print(f"  precision {metrics.precision:.4f}  recall {metrics.recall:.4f}  "
      f"accuracy {metrics.accuracy:.4f}  f1 {metrics.f1:.4f}")

selection = arena.compute_metrics(logs, "selection_only")
print(f"selection-only variant: precision {selection.precision:.4f}  "
      f"recall {selection.recall:.4f}")

print("\ncumulative precision by round:")
for row in arena.round_series(logs):
    bar = "#" * round(row["precision"] * 200)
    print(f"  round {row['round']:>2}: {row['precision']:.4f} {bar}")
