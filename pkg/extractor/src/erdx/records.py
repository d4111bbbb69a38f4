"""Core record types for the extraction pipeline."""

from __future__ import annotations

from dataclasses import dataclass


class ExtractionError(Exception):
    """Pipeline failure; carries enough context to debug the raw response."""


@dataclass(frozen=True)
class ErdRecord:
    """One relation's enriched description.

    The enriched text always starts with the verbatim source text followed
    by ": ", so downstream encoders see the original name first.
    """

    relation_id: int
    text: str
    explanation: str

    @property
    def erd(self) -> str:
        return f"{self.text}: {self.explanation}"


@dataclass
class ExtractorConfig:
    chat_endpoint: str
    chat_model: str
    encoder_spec: str                  # e.g. "hash:d_w=32,seed=7" or "hf:t5-large"
    batch_size: int = 8
    cache_dir: str = ".erdx-cache"
    temperature: float = 0.0           # fixed for reproducible completions
    max_retries: int = 4
    timeout: float = 60.0
    api_key_env: str = "ERDX_API_KEY"

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ExtractionError("batch size must be >= 1")
        if self.temperature != 0.0:
            raise ExtractionError("extraction requires temperature 0 for "
                                  "reproducibility")


INVERSE_PREFIX = "Inversed "


def read_relations_tsv(path: str) -> list[str]:
    """`id\\tlabel` rows with contiguous ids starting at 0."""
    labels: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ExtractionError(f"{path}:{line_no}: expected `id\\tlabel`")
            if int(parts[0]) != line_no - 1:
                raise ExtractionError(f"{path}:{line_no}: non-contiguous id")
            labels.append(parts[1])
    if not labels:
        raise ExtractionError(f"{path}: no relations")
    return labels


def with_inverses(labels: list[str]) -> list[str]:
    """Base texts followed by their inverse texts; id i's inverse sits at
    i + len(labels), matching the downstream consumer's convention."""
    return labels + [INVERSE_PREFIX + lab for lab in labels]
