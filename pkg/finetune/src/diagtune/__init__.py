"""diagtune: train and serve the profile-defect diagnostic model.

Consumes the corpus files the workbench emits (pre-training texts and
four-part instruction records), converts the output-only character spans
to token-level loss masks, trains a small causal LM in two stages, and
serves the checkpoint behind the same ``/v1/chat/completions`` protocol
the workbench's remote backend speaks.
"""

__version__ = "0.1.0"

from .training import TrainSpec, dry_run, load_checkpoint, toy_profile, train  # noqa: F401
