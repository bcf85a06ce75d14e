"""ragforge: retrieval-augmented QA over a technical corpus, plus a blinded
human-evaluation harness for comparing model configurations."""

__version__ = "0.1.0"
