"""Prompt construction and response parsing for description enrichment.

One prompt carries a numbered batch of relation names; the model answers
with one numbered explanation per relation. The instructions restrict the
model to the semantic content of the name itself, with no world knowledge
about entities or events, so the output stays usable for forecasting
benchmarks built after the encoder's training cutoff.
"""

from __future__ import annotations

import re

from .records import ErdRecord, ExtractionError

_HEADER = (
    "You will be given {n} relation names from a knowledge base, numbered "
    "[REL_0] to [REL_{last}].\n"
    "For each relation, write a short explanation (one or two sentences) of "
    "what the relation means, judging solely from the semantic perspective "
    "of its name. Do not use world knowledge about specific entities, "
    "events, or dates, and do not speculate beyond the name itself.\n"
    "Answer with exactly one line per relation, in the same order, each "
    "formatted as:\n"
    "[EXP_<index>]: <explanation>\n"
    "\n"
    "Relations:\n"
)

_EXP_LINE = re.compile(r"^\[EXP_(\d+)\]:\s*(.+?)\s*$")


def build_prompt(texts: list[str]) -> str:
    """Numbered enrichment prompt for one batch of relation texts."""
    if not texts:
        raise ExtractionError("cannot build a prompt for an empty batch")
    lines = [_HEADER.format(n=len(texts), last=len(texts) - 1)]
    lines += [f"[REL_{i}]: {text}" for i, text in enumerate(texts)]
    return "\n".join(lines) + "\n"


def parse_response(content: str, texts: list[str],
                   relation_ids: list[int]) -> list[ErdRecord]:
    """Extract one explanation per relation from a completion.

    Raises with the raw content attached when lines are malformed, indices
    are out of order, or the count does not match the batch.
    """
    explanations: dict[int, str] = {}
    for raw_line in content.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        match = _EXP_LINE.match(line)
        if match is None:
            raise ExtractionError(
                f"unparseable line in completion: {line!r}\n--- raw ---\n{content}")
        idx = int(match.group(1))
        if idx in explanations:
            raise ExtractionError(
                f"duplicate explanation index {idx}\n--- raw ---\n{content}")
        explanations[idx] = match.group(2)
    if sorted(explanations) != list(range(len(texts))):
        raise ExtractionError(
            f"explanation count mismatch: got indices {sorted(explanations)}, "
            f"expected 0..{len(texts) - 1}\n--- raw ---\n{content}")
    return [ErdRecord(rid, text, explanations[i])
            for i, (rid, text) in enumerate(zip(relation_ids, texts))]
