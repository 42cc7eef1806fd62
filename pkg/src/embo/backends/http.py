"""HTTP generation backend.

Wire protocol (JSON bodies, UTF-8; numeric fields are IEEE-754 doubles):

    POST /v1/first_token  {"prompt": str}
        -> {"token_id": int, "embedding": [D floats]}
    POST /v1/generate     {"prompt": str,
                           "injected_embeddings": [[D floats], ...] | null,
                           "placement": "first"|"middle"|"last",
                           "max_tokens": int,
                           "decode": {"mode": "greedy"} |
                                     {"mode": "temperature", "tau": float, "seed": int}}
        -> {"text": str, "tokens": [str], "token_logprobs": [float], "truncated": bool}

Non-2xx statuses become TransportError with the body in the message; a 404 or
501 on /v1/first_token means the server exposes no embedding access and maps
to CapabilityError. Prompt token counts are not on the wire, so the client
reports a whitespace-token estimate.
"""

from __future__ import annotations

import numpy as np

try:
    import httpx
except ImportError:  # pragma: no cover - hard dependency, but keep the error readable
    httpx = None

from ..errors import CapabilityError, ContractViolation, TransportError
from ..latent import AnchorEmbedding
from .base import GREEDY, DecodeSpec, GenerationResult, InjectionRequest


def _decode_payload(decode: DecodeSpec) -> dict:
    if decode.mode == "greedy":
        return {"mode": "greedy"}
    return {"mode": "temperature", "tau": decode.tau, "seed": decode.seed}


class HttpBackend:
    """Client for an inference server speaking the protocol above."""

    def __init__(
        self,
        endpoint: str,
        embed_dim: int,
        auth_token: str | None = None,
        timeout: float = 120.0,
        client: "httpx.Client | None" = None,
    ):
        if httpx is None:
            raise CapabilityError("httpx is required for the HTTP backend")
        if embed_dim < 1:
            raise ContractViolation("embed_dim must be >= 1")
        self.embed_dim = embed_dim
        self._base = endpoint.rstrip("/")
        self._headers = {"Authorization": f"Bearer {auth_token}"} if auth_token else {}
        self._client = client if client is not None else httpx.Client(timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        url = self._base + path
        try:
            response = self._client.post(url, json=payload, headers=self._headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if response.status_code in (404, 501) and path == "/v1/first_token":
            raise CapabilityError(f"backend lacks embedding access: {response.status_code} on {path}")
        if not 200 <= response.status_code < 300:
            raise TransportError(f"POST {url} returned {response.status_code}: {response.text}")
        try:
            body = response.json()
        except ValueError as exc:
            raise TransportError(f"POST {url} returned non-JSON body") from exc
        if not isinstance(body, dict):
            raise TransportError(f"POST {url} returned non-object JSON")
        return body

    def base_first_token(self, prompt: str) -> AnchorEmbedding:
        if not prompt:
            raise ContractViolation("prompt must be non-empty")
        body = self._post("/v1/first_token", {"prompt": prompt})
        try:
            token_id = int(body["token_id"])
            embedding = np.asarray(body["embedding"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed first_token response: {exc}") from exc
        if embedding.ndim != 1 or embedding.shape[0] != self.embed_dim:
            raise TransportError(
                f"embedding of length {embedding.shape} does not match configured D={self.embed_dim}"
            )
        return AnchorEmbedding(vector=embedding, token_id=token_id)

    def generate_with_injection(self, request: InjectionRequest) -> GenerationResult:
        for emb in request.injected_embeddings:
            if np.asarray(emb).shape != (self.embed_dim,):
                raise ContractViolation(
                    f"injected embedding shape {np.asarray(emb).shape} does not match D={self.embed_dim}"
                )
        payload = {
            "prompt": request.prompt,
            "injected_embeddings": [[float(v) for v in emb] for emb in request.injected_embeddings],
            "placement": request.placement,
            "max_tokens": request.max_tokens,
            "decode": _decode_payload(request.decode),
        }
        return self._parse_generation(self._post("/v1/generate", payload), request.prompt)

    def generate_plain(
        self, prompt: str, decode: DecodeSpec = GREEDY, max_tokens: int = 300
    ) -> GenerationResult:
        if not prompt:
            raise ContractViolation("prompt must be non-empty")
        payload = {
            "prompt": prompt,
            "injected_embeddings": None,
            "placement": "last",
            "max_tokens": max_tokens,
            "decode": _decode_payload(decode),
        }
        return self._parse_generation(self._post("/v1/generate", payload), prompt)

    def _parse_generation(self, body: dict, prompt: str) -> GenerationResult:
        try:
            text = str(body["text"])
            tokens = tuple(str(t) for t in body["tokens"])
            # Servers may report logprobs a hair above 0; clamp at the boundary.
            logprobs = tuple(min(float(v), 0.0) for v in body["token_logprobs"])
            truncated = bool(body.get("truncated", False))
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed generate response: {exc}") from exc
        if len(tokens) != len(logprobs):
            raise TransportError(
                f"{len(tokens)} tokens but {len(logprobs)} logprobs in generate response"
            )
        if not tokens:
            raise TransportError("backend returned an empty generation")
        return GenerationResult(
            text=text,
            tokens=tokens,
            token_logprobs=logprobs,
            prompt_token_count=len(prompt.split()),
            truncated=truncated,
        )
