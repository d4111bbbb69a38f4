"""Chat-completion client with a file cache and retry/backoff.

Responses are cached on disk keyed by (model, prompt) hash; with
temperature pinned to 0 a cache hit reproduces the original run exactly,
so re-running extraction is both free and byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time

import requests

from .records import ExtractionError, ExtractorConfig

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class ChatClient:
    def __init__(self, config: ExtractorConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()
        self._cache_lock = threading.Lock()
        os.makedirs(config.cache_dir, exist_ok=True)

    def _cache_path(self, prompt: str) -> str:
        digest = hashlib.sha256(
            f"{self.config.chat_model}\x00{prompt}".encode("utf-8")).hexdigest()
        return os.path.join(self.config.cache_dir, digest + ".json")

    def _cache_get(self, prompt: str) -> str | None:
        path = self._cache_path(prompt)
        with self._cache_lock:
            if not os.path.exists(path):
                return None
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)["content"]

    def _cache_put(self, prompt: str, content: str) -> None:
        path = self._cache_path(prompt)
        with self._cache_lock:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump({"model": self.config.chat_model, "content": content},
                          fh, ensure_ascii=False)

    def complete(self, prompt: str) -> str:
        """Chat completion for the prompt; cache first, then the endpoint."""
        cached = self._cache_get(prompt)
        if cached is not None:
            return cached
        payload = {
            "model": self.config.chat_model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        delay = 0.5
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries):
            try:
                response = self.session.post(self.config.chat_endpoint,
                                             json=payload, headers=headers,
                                             timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    try:
                        content = response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise ExtractionError(
                            f"malformed completion payload ({exc}): "
                            f"{response.text[:2000]}") from None
                    self._cache_put(prompt, content)
                    return content
                if response.status_code not in RETRYABLE_STATUS:
                    raise ExtractionError(
                        f"chat endpoint returned {response.status_code}: "
                        f"{response.text[:2000]}")
                last_error = f"status {response.status_code}"
            if attempt < self.config.max_retries - 1:
                time.sleep(delay)
                delay *= 2
        raise ExtractionError(f"chat endpoint unreachable after "
                              f"{self.config.max_retries} attempts ({last_error})")
