"""erd-extract: enrich relation texts through a chat endpoint and encode
the enriched descriptions into a ZRLE relation-embedding file.

Inverse relations ("Inversed <text>", ids offset by the base count) are
generated and encoded alongside the originals, so the output covers a
reciprocal-augmented vocabulary out of the box.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .client import ChatClient
from .encoders import make_encoder
from .prompt import build_prompt, parse_response
from .records import (
    ErdRecord,
    ExtractionError,
    ExtractorConfig,
    read_relations_tsv,
    with_inverses,
)
from .zrle import encode_and_write

log = logging.getLogger("erdx")

ENCODER_LEAK_NOTE = (
    "Check the encoder's release date against the fact period of the target "
    "benchmark: an encoder trained after the facts happened can leak outcome "
    "knowledge into the representations."
)


def extract_records(labels: list[str], config: ExtractorConfig,
                    client: ChatClient | None = None) -> list[ErdRecord]:
    """Enrich all texts (originals plus inverses), batched through the
    chat endpoint."""
    config.validate()
    client = client or ChatClient(config)
    texts = with_inverses(labels)
    records: list[ErdRecord] = []
    for lo in range(0, len(texts), config.batch_size):
        batch = texts[lo:lo + config.batch_size]
        ids = list(range(lo, lo + len(batch)))
        prompt = build_prompt(batch)
        content = client.complete(prompt)
        records.extend(parse_response(content, batch, ids))
    return records


def run(args) -> int:
    config = ExtractorConfig(
        chat_endpoint=args.chat_endpoint, chat_model=args.chat_model,
        encoder_spec=args.encoder, batch_size=args.batch_size,
        cache_dir=args.cache_dir)
    labels = read_relations_tsv(args.relations)
    log.info("enriching %d relations (plus inverses) via %s", len(labels),
             config.chat_model)
    records = extract_records(labels, config)
    encoder = make_encoder(config.encoder_spec)
    meta = {
        "chat_model": config.chat_model,
        "chat_endpoint": config.chat_endpoint,
        "encoder": config.encoder_spec,
        "temperature": config.temperature,
        "encoder_release_note": ENCODER_LEAK_NOTE,
    }
    encode_and_write(records, encoder, args.out, meta)
    log.info("wrote %d matrices (d_w=%d) to %s", len(records), encoder.d_w,
             args.out)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="erd-extract", description=__doc__)
    parser.add_argument("--relations", required=True, help="relations.tsv (id\\tlabel)")
    parser.add_argument("--chat-model", required=True)
    parser.add_argument("--chat-endpoint",
                        default="https://api.openai.com/v1/chat/completions")
    parser.add_argument("--encoder", required=True,
                        help='"hash:d_w=32,seed=7" or "hf:<model id>"')
    parser.add_argument("--out", required=True, help="ZRLE output path")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--cache-dir", default=".erdx-cache")
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ExtractionError as exc:
        sys.stderr.write(f"extraction error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"io error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
