"""Ethical-flag classification of non-coding OSS contributions.

Subpackages cover the full pipeline: flag taxonomy and label-set
validation, corpus storage and sampling, GitHub ingestion, prompt
building, the LLM classifier, the evaluation metric suite, repo-level
distribution reports, the annotation HTTP service, and the CLI.
"""

__version__ = "0.1.0"
