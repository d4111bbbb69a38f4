"""Text encoders producing per-token hidden-state matrices.

Any object with `.d_w` and `.encode(text) -> float32 [n_tokens, d_w]`
qualifies. The hash encoder is a deterministic fixture for tests and
offline runs; the transformers adapter extracts a real encoder's final
hidden states (one vector per input token) and reads d_w off the model.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .records import ExtractionError


class HashEncoder:
    """Deterministic stand-in: one pseudo-normal row per whitespace token,
    derived from a SHA-256 counter stream over (seed, token)."""

    def __init__(self, d_w: int = 32, seed: int = 7):
        self.d_w = d_w
        self.seed = seed

    def _token_row(self, token: str) -> np.ndarray:
        values = []
        counter = 0
        while len(values) < self.d_w:
            digest = hashlib.sha256(
                f"{self.seed}\x00{token}\x00{counter}".encode("utf-8")).digest()
            for i in range(0, 32, 16):
                u1 = int.from_bytes(digest[i:i + 8], "little") / 2.0 ** 64
                u2 = int.from_bytes(digest[i + 8:i + 16], "little") / 2.0 ** 64
                radius = math.sqrt(-2.0 * math.log(1.0 - u1))
                values.append(radius * math.cos(2.0 * math.pi * u2))
                values.append(radius * math.sin(2.0 * math.pi * u2))
            counter += 1
        return np.array(values[:self.d_w], dtype=np.float32)

    def encode(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ExtractionError("cannot encode empty text")
        return np.stack([self._token_row(tok) for tok in tokens])


class HfEncoder:
    """Per-token final hidden states from a Hugging Face encoder model."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ExtractionError(
                f"transformers/torch required for encoder {model_id!r}: {exc}")
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
        self.model = model.get_encoder() if hasattr(model, "get_encoder") else model
        self.model.eval()
        self.d_w = int(self.model.config.hidden_size)
        self.model_id = model_id

    def encode(self, text: str) -> np.ndarray:
        tokens = self.tokenizer(text, return_tensors="pt", truncation=True)
        with self._torch.no_grad():
            states = self.model(**tokens).last_hidden_state[0]
        return states.cpu().numpy().astype(np.float32)


def make_encoder(spec: str):
    """Build an encoder from a spec string: "hash:d_w=32,seed=7" or
    "hf:<model id>"."""
    kind, _, rest = spec.partition(":")
    if kind == "hash":
        kwargs = {}
        if rest:
            for part in rest.split(","):
                key, _, value = part.partition("=")
                if key not in ("d_w", "seed"):
                    raise ExtractionError(f"unknown hash-encoder option {key!r}")
                kwargs[key] = int(value)
        return HashEncoder(**kwargs)
    if kind == "hf":
        if not rest:
            raise ExtractionError("hf encoder needs a model id, e.g. hf:t5-large")
        return HfEncoder(rest)
    raise ExtractionError(f"unknown encoder spec {spec!r}")
