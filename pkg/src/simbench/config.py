"""Declarative run configuration.

One JSON file describes a whole run; credentials are the only thing read
from the environment. Defaults mirror the experimental setup this
workbench reproduces: batch size 4 for discrepancy collection, a 0.6
initialization split, 20-item slates, 1000 sampled users, 10 interaction
rounds, and temperature-0 completions.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

STAGES = ("ingest", "init-profiles", "optimize", "synthesize-defects",
          "emit-corpus", "eval-diagnostic", "interact", "report")

_BACKEND_KINDS = ("mock", "remote", "scripted")
_RECOMMENDERS = ("fpmc", "markov", "popularity", "external")
_STRATEGIES = ("none", "without_gt", "with_gt")
_MODES = ("iterative", "once")
_FORMATS = ("movielens-dat", "amazon-json")


def _default_backends():
    return {
        "simulator": {"kind": "mock"},
        "diagnosis": {"kind": "mock"},
        "treatment": {"kind": "mock"},
    }


def _default_rec_params():
    return {"dim": 64, "learning_rate": 0.01, "reg": 0.01,
            "batch_size": 128, "epochs": 10}


@dataclass
class RunConfig:
    dataset_path: str = "data/toy"
    dataset_format: str = "movielens-dat"
    min_interactions: int = 5
    max_len: int = 200
    test_n: int = 10
    min_train: int = 5

    seed: int = 7
    alpha: float = 0.6
    n1: int = 4
    rho: float = 0.5
    label_mix: tuple = (1 / 3, 1 / 3, 1 / 3)
    mode: str = "iterative"
    flush_tail: bool = False
    strategy: str = "with_gt"

    recommender: str = "fpmc"
    rec_params: dict = field(default_factory=_default_rec_params)
    backends: dict = field(default_factory=_default_backends)
    eval_diagnostic_with: str = "oracle"  # "oracle" | "diagnosis-backend"

    rounds: int = 10
    slate_size: int = 20
    user_sample: int = 1000
    jobs: int = 1
    output_dir: str = "runs/default"

    def validate(self):
        problems = []
        if self.dataset_format not in _FORMATS:
            problems.append(f"dataset_format must be one of {_FORMATS}")
        if self.min_interactions < 1:
            problems.append("min_interactions must be positive")
        if self.max_len < self.test_n + 2:
            problems.append("max_len too small for the test/validation split")
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n1 < 1:
            problems.append("n1 must be at least 1")
        if not 0.0 < self.rho <= 1.0:
            problems.append(f"rho must lie in (0, 1], got {self.rho}")
        if len(self.label_mix) != 3 or any(m < 0 for m in self.label_mix) \
                or abs(sum(self.label_mix) - 1.0) > 1e-9:
            problems.append("label_mix must be three shares summing to 1")
        if self.mode not in _MODES:
            problems.append(f"mode must be one of {_MODES}")
        if self.strategy not in _STRATEGIES:
            problems.append(f"strategy must be one of {_STRATEGIES}")
        if self.recommender not in _RECOMMENDERS:
            problems.append(f"recommender must be one of {_RECOMMENDERS}")
        for role in ("simulator", "diagnosis", "treatment"):
            spec = self.backends.get(role)
            if not isinstance(spec, dict) or spec.get("kind") not in _BACKEND_KINDS:
                problems.append(f"backends.{role} must set kind in {_BACKEND_KINDS}")
            elif spec["kind"] == "remote" and not spec.get("base_url"):
                problems.append(f"backends.{role}: remote backend needs base_url")
        if self.eval_diagnostic_with not in ("oracle", "diagnosis-backend"):
            problems.append("eval_diagnostic_with must be 'oracle' or "
                            "'diagnosis-backend'")
        if self.rounds < 1:
            problems.append("rounds must be at least 1")
        if self.rounds > self.test_n:
            problems.append("rounds cannot exceed test_n held-out items")
        if self.slate_size < 2:
            problems.append("slate_size must be at least 2")
        if self.user_sample < 1:
            problems.append("user_sample must be positive")
        if self.jobs < 1:
            problems.append("jobs must be positive")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["label_mix"] = list(self.label_mix)
        return out

    def identity_dict(self) -> dict:
        """The config fields that determine results (placement excluded)."""
        ident = self.to_dict()
        ident.pop("output_dir")
        ident.pop("jobs")
        return ident

    def canonical_json(self) -> str:
        return json.dumps(self.identity_dict(), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown field: {name}" for name in unknown])
        merged = dict(data)
        if "label_mix" in merged:
            merged["label_mix"] = tuple(merged["label_mix"])
        return cls(**merged).validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config file: {exc}"])
        except ValueError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"])
        if not isinstance(data, dict):
            raise ConfigError(["config root must be a JSON object"])
        return cls.from_dict(data)
