"""Pluggable backends for the four neural capabilities plus policies.

Embedding, perceptual distance, code repair, quality judging and policy
sampling all speak one wire protocol: a JSON envelope
``{"v": 1, "kind": <kind>, "payload": {...}}`` posted to ``/<kind>`` over
HTTP or written as one line to a subprocess's stdin (one JSON response
line back).  Images travel as base64 PNG.  Every capability except the
judge has a deterministic builtin fallback so the whole stack runs with
no network and no model weights.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from queue import Empty, Queue
from typing import Optional

import numpy as np

from .config import PolicySampling
from .errors import (
    BackendError,
    BackendTimeout,
    DimensionMismatch,
    ProtocolError,
    RepairUnavailable,
    SchemaViolation,
)
from .imgmetrics import AlignedPair, fallback_embedding, fallback_perceptual_distance
from .raster import RasterImage, from_png_bytes

PROTOCOL_VERSION = 1

KINDS = ("embed", "perceptual", "repair", "judge", "policy")

JUDGE_KEYS = (
    "correctness",
    "layout_precision",
    "readability",
    "scientific_plausibility",
    "visual_complexity",
)


@dataclass(frozen=True)
class BackendEndpoint:
    kind: str
    transport: str = "builtin"  # "builtin" | "http" | "subprocess-stdio"
    address: str = ""           # URL base or command line; ignored for builtin
    timeout: float = 30.0
    retries: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind: {self.kind}")
        if self.transport not in ("builtin", "http", "subprocess-stdio"):
            raise ValueError(f"unknown transport: {self.transport}")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def identity(self) -> str:
        if self.transport == "builtin":
            return "builtin"
        return f"{self.transport}:{self.address}"


@dataclass(frozen=True)
class JudgeScores:
    correctness: int
    layout_precision: int
    readability: int
    scientific_plausibility: int
    visual_complexity: int

    def __post_init__(self):
        for key in JUDGE_KEYS:
            value = getattr(self, key)
            if type(value) is not int or not 0 <= value <= 5:
                raise SchemaViolation(f"{key} must be an integer in [0, 5], got {value!r}")

    @property
    def total(self) -> int:
        return sum(getattr(self, key) for key in JUDGE_KEYS)

    def to_dict(self) -> dict:
        out = {key: getattr(self, key) for key in JUDGE_KEYS}
        out["total_score"] = self.total
        return out


def parse_judge_reply(text: str) -> JudgeScores:
    """Validate a judge reply: its last line must be the score JSON.

    Exactly the five score keys plus total_score are allowed, all scores
    are integers in [0, 5], total_score equals their sum, and nothing may
    follow the JSON object.
    """
    stripped = text.rstrip()
    if not stripped:
        raise SchemaViolation("empty judge reply")
    last_line = stripped.rsplit("\n", 1)[-1].strip()
    try:
        obj = json.loads(last_line)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"last line is not a JSON object: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaViolation("judge reply JSON must be an object")
    expected = set(JUDGE_KEYS) | {"total_score"}
    if set(obj) != expected:
        raise SchemaViolation(f"judge keys {sorted(obj)} != {sorted(expected)}")
    scores = JudgeScores(**{key: obj[key] for key in JUDGE_KEYS})
    total = obj["total_score"]
    if type(total) is not int or total != scores.total:
        raise SchemaViolation(f"total_score {total!r} != sum of scores {scores.total}")
    return scores


def image_to_b64(img: RasterImage) -> str:
    return base64.b64encode(img.to_png_bytes()).decode("ascii")


def image_from_b64(data: str, dpi: float = 72.0) -> RasterImage:
    return from_png_bytes(base64.b64decode(data), dpi=dpi)


class _SubprocessTransport:
    """One persistent NDJSON child per endpoint; requests are serialized."""

    def __init__(self, command: str):
        self._command = shlex.split(command)
        self._lock = threading.Lock()
        self._proc: Optional[subprocess.Popen] = None
        self._queue: Queue = Queue()

    def _ensure(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self._command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._queue = Queue()
        threading.Thread(
            target=self._pump, args=(self._proc, self._queue), daemon=True
        ).start()

    @staticmethod
    def _pump(proc: subprocess.Popen, queue: Queue) -> None:
        for line in proc.stdout:
            queue.put(line)
        queue.put(None)

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None

    def close(self) -> None:
        with self._lock:
            self._kill()

    def request(self, envelope: dict, timeout: float) -> dict:
        with self._lock:
            self._ensure()
            try:
                self._proc.stdin.write(json.dumps(envelope) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._kill()
                raise ProtocolError(f"backend process rejected request: {exc}") from exc
            try:
                line = self._queue.get(timeout=timeout)
            except Empty:
                self._kill()
                raise BackendTimeout(f"no reply within {timeout}s from {self._command[0]}")
            if line is None:
                self._kill()
                raise ProtocolError("backend process closed its output stream")
            try:
                return json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed backend reply: {exc}") from exc


def _http_request(url: str, envelope: dict, timeout: float) -> dict:
    req = urllib.request.Request(
        url,
        data=json.dumps(envelope).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except TimeoutError as exc:
        raise BackendTimeout(f"no reply within {timeout}s from {url}") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise BackendTimeout(f"no reply within {timeout}s from {url}") from exc
        raise ProtocolError(f"http error from {url}: {exc}") from exc
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed backend reply: {exc}") from exc


def endpoint_from_env(kind: str) -> Optional[BackendEndpoint]:
    """Endpoint override from TIKZRIG_<KIND>_ENDPOINT.

    Accepted values: ``builtin``, ``http:<url>`` or ``subprocess:<command>``.
    """
    raw = os.environ.get(f"TIKZRIG_{kind.upper()}_ENDPOINT")
    if not raw:
        return None
    if raw == "builtin":
        return BackendEndpoint(kind)
    transport, _, address = raw.partition(":")
    if transport == "http":
        return BackendEndpoint(kind, transport="http", address=address)
    if transport == "subprocess":
        return BackendEndpoint(kind, transport="subprocess-stdio", address=address)
    raise ValueError(f"bad endpoint spec in TIKZRIG_{kind.upper()}_ENDPOINT: {raw!r}")


class BackendHub:
    """Client set for all configured endpoints, with an optional disk cache.

    Environment variables (``TIKZRIG_EMBED_ENDPOINT`` etc.) override both
    the defaults and any endpoints file.
    """

    def __init__(
        self,
        endpoints: Optional[dict[str, BackendEndpoint]] = None,
        cache_dir: str = "",
    ):
        self.endpoints = dict(endpoints or {})
        for kind in KINDS:
            override = endpoint_from_env(kind)
            if override is not None:
                self.endpoints[kind] = override
            else:
                self.endpoints.setdefault(kind, BackendEndpoint(kind))
        self._cache_dir = Path(cache_dir) if cache_dir else None
        self._subprocs: dict[str, _SubprocessTransport] = {}
        self._embed_dim: Optional[int] = None

    @classmethod
    def from_file(cls, path, cache_dir: str = "") -> "BackendHub":
        """Load endpoint specs from a JSON file keyed by backend kind."""
        data = json.loads(Path(path).read_text())
        endpoints = {}
        for kind, spec in data.items():
            endpoints[kind] = BackendEndpoint(
                kind=kind,
                transport=spec.get("transport", "builtin"),
                address=spec.get("address", spec.get("command", "")),
                timeout=float(spec.get("timeout", 30.0)),
                retries=int(spec.get("retries", 0)),
            )
        return cls(endpoints, cache_dir=cache_dir)

    def identities(self) -> dict[str, str]:
        return {kind: self.endpoints[kind].identity for kind in KINDS}

    def close(self) -> None:
        for transport in self._subprocs.values():
            transport.close()
        self._subprocs.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # --- plumbing ---------------------------------------------------------

    def _cache_path(self, kind: str, payload: dict) -> Optional[Path]:
        if self._cache_dir is None:
            return None
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        digest = hashlib.sha256(blob).hexdigest()
        return self._cache_dir / kind / f"{digest}.json"

    def _call(self, kind: str, payload: dict) -> dict:
        """Send one request, honoring cache, retries and per-try timeouts."""
        ep = self.endpoints[kind]
        if ep.transport == "builtin":
            raise BackendError(f"no remote endpoint configured for {kind}")
        cache = self._cache_path(kind, payload)
        if cache is not None and cache.exists():
            return json.loads(cache.read_text())

        envelope = {"v": PROTOCOL_VERSION, "kind": kind, "payload": payload}
        last_error: Exception = BackendError("unreachable")
        for _ in range(ep.retries + 1):
            try:
                if ep.transport == "http":
                    url = ep.address.rstrip("/") + "/" + kind
                    reply = _http_request(url, envelope, ep.timeout)
                else:
                    transport = self._subprocs.get(kind)
                    if transport is None:
                        transport = _SubprocessTransport(ep.address)
                        self._subprocs[kind] = transport
                    reply = transport.request(envelope, ep.timeout)
                result = self._unwrap(kind, reply)
                if cache is not None:
                    cache.parent.mkdir(parents=True, exist_ok=True)
                    cache.write_text(json.dumps(result, sort_keys=True))
                return result
            except BackendTimeout as exc:
                last_error = exc
        raise last_error

    @staticmethod
    def _unwrap(kind: str, reply: dict) -> dict:
        if not isinstance(reply, dict):
            raise ProtocolError("backend reply must be a JSON object")
        if reply.get("v") != PROTOCOL_VERSION or reply.get("kind") != kind:
            raise ProtocolError(f"reply envelope mismatch: {reply.get('v')}/{reply.get('kind')}")
        if not reply.get("ok", False):
            raise ProtocolError(f"backend error: {reply.get('error', 'unspecified')}")
        payload = reply.get("payload")
        if not isinstance(payload, dict):
            raise ProtocolError("backend reply carries no payload object")
        return payload

    # --- capabilities -----------------------------------------------------

    def embed(self, img: RasterImage) -> np.ndarray:
        """Embedding vector for an image; dimension is pinned per run."""
        ep = self.endpoints["embed"]
        if ep.transport == "builtin":
            return fallback_embedding(img)
        payload = self._call("embed", {"image": image_to_b64(img)})
        try:
            dim = int(payload["dim"])
            vector = [float(x) for x in payload["vector"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad embed payload: {exc}") from exc
        if len(vector) != dim:
            raise DimensionMismatch(f"declared dim {dim}, got {len(vector)} floats")
        if self._embed_dim is None:
            self._embed_dim = dim
        elif dim != self._embed_dim:
            raise DimensionMismatch(f"dim changed mid-run: {self._embed_dim} -> {dim}")
        return np.asarray(vector, dtype=np.float64)

    def perceptual_distance(self, pair: AlignedPair) -> float:
        """Non-negative perceptual distance between the aligned images."""
        ep = self.endpoints["perceptual"]
        if ep.transport == "builtin":
            return fallback_perceptual_distance(pair)
        payload = self._call(
            "perceptual",
            {"image_a": image_to_b64(pair.a), "image_b": image_to_b64(pair.b)},
        )
        try:
            distance = float(payload["distance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad perceptual payload: {exc}") from exc
        if distance < 0:
            raise ProtocolError(f"negative perceptual distance {distance}")
        return distance

    @property
    def perceptual_backend_id(self) -> str:
        return self.endpoints["perceptual"].identity

    def repair(self, code: str, log_excerpt: str) -> str:
        """Candidate fix for uncompilable code.

        The builtin agent applies the ordered rule table from the data
        engine; RepairUnavailable when no rule matches and no remote agent
        is configured.
        """
        ep = self.endpoints["repair"]
        if ep.transport == "builtin":
            from .dataengine import builtin_repair_rules

            fixed = builtin_repair_rules(code, log_excerpt)
            if fixed is None:
                raise RepairUnavailable("no builtin rule matches this log")
            return fixed
        payload = self._call("repair", {"code": code, "log_excerpt": log_excerpt})
        if "code" not in payload or not isinstance(payload["code"], str):
            raise ProtocolError("repair payload missing code string")
        return payload["code"]

    def judge(self, img: RasterImage, code: str) -> JudgeScores:
        """Five-dimension quality scores; requires a remote judge endpoint."""
        ep = self.endpoints["judge"]
        if ep.transport == "builtin":
            raise BackendError("no builtin judge exists; configure a judge endpoint")
        payload = self._call("judge", {"image": image_to_b64(img), "code": code})
        if "text" not in payload or not isinstance(payload["text"], str):
            raise ProtocolError("judge payload missing reply text")
        return parse_judge_reply(payload["text"])

    @property
    def judge_configured(self) -> bool:
        return self.endpoints["judge"].transport != "builtin"

    def policy_sample(
        self, img: RasterImage, n: int, sampling: PolicySampling | None = None
    ) -> list[str]:
        """Sample n candidate programs for an image from the policy endpoint."""
        ep = self.endpoints["policy"]
        if ep.transport == "builtin":
            raise BackendError("no builtin policy here; use dscloop.toy_policy")
        sampling = sampling or PolicySampling()
        payload = self._call(
            "policy",
            {
                "image": image_to_b64(img),
                "n": n,
                "temperature": sampling.temperature,
                "top_p": sampling.top_p,
                "max_tokens": sampling.max_tokens,
            },
        )
        codes = payload.get("codes")
        if not isinstance(codes, list) or len(codes) != n or not all(
            isinstance(c, str) for c in codes
        ):
            raise ProtocolError(f"policy payload must carry exactly {n} code strings")
        return codes
