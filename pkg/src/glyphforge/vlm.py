"""Prompt-template registry, quoted-text extraction, reply parsing, and
pluggable VLM backends (deterministic mock + generic remote chat client)."""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
from dataclasses import dataclass
from importlib import resources

from .injection import QuoteError, quoted_spans

TEMPLATE_KINDS = {
    "typography_analysis": "json_plan",
    "clean_prompt": "text",
    "style_prompt": "text",
    "refine_prompt": "text",
    "score_image": "number",
    "rank_images": "index_list",
    "ocr_recognition": "raw_text",
}

ENDPOINT_ENV = "GLYPHFORGE_VLM_ENDPOINT"
KEY_ENV = "GLYPHFORGE_VLM_KEY"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


class ReplyParseError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    output_kind: str

    def placeholders(self) -> list[str]:
        return sorted({m.group(1) for m in _PLACEHOLDER_RE.finditer(self.body)})


def _load_templates() -> dict[str, PromptTemplate]:
    out = {}
    for name, kind in TEMPLATE_KINDS.items():
        body = resources.files("glyphforge").joinpath(f"templates/{name}.txt").read_text("utf-8")
        out[name] = PromptTemplate(name=name, body=body, output_kind=kind)
    return out


TEMPLATES = _load_templates()


def get_template(name: str) -> PromptTemplate:
    try:
        return TEMPLATES[name]
    except KeyError:
        raise TemplateError(f"unknown template: {name!r}") from None


def render_template(template: PromptTemplate, bindings: dict[str, object]) -> str:
    """Verbatim body with placeholder substitution; unbound placeholders are errors."""
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in bindings:
            raise TemplateError(f"unbound placeholder {{{key}}} in template {template.name!r}")
        return str(bindings[key])

    return _PLACEHOLDER_RE.sub(sub, template.body)


def extract_quoted_text(prompt: str) -> str:
    """All double-quoted spans (ASCII or typographic), joined by single spaces."""
    spans = quoted_spans(prompt)
    return " ".join(prompt[s:e] for s, e in spans if e > s)


def parse_scalar_reply(text: str, kind: str):
    """Strict parse of a scalar VLM reply: a 0-10 number or an index list."""
    stripped = text.strip()
    if kind == "number":
        try:
            value = float(stripped)
        except ValueError:
            raise ReplyParseError(f"not a numeric reply: {text!r}") from None
        return min(max(value, 0.0), 10.0)
    if kind == "index_list":
        parts = [p.strip() for p in stripped.split(",")]
        try:
            return [int(p) for p in parts]
        except ValueError:
            raise ReplyParseError(f"not a comma-separated index list: {text!r}") from None
    raise ValueError(f"unsupported reply kind: {kind!r}")


def rank_to_scores(ranking: list[int]) -> dict[int, float]:
    """Strictly decreasing score assignment over rank positions (best first)."""
    n = len(ranking)
    return {idx: float(n - pos) for pos, idx in enumerate(ranking)}


def message_digest(message: str, image_bytes: bytes = b"") -> str:
    return hashlib.sha256(message.encode("utf-8") + image_bytes).hexdigest()


_ITEMS_RE = re.compile(r"^Text items: (\[.*\])$", re.MULTILINE)
_PROMPT_LINE_RE = re.compile(r"^Prompt: (.*)$", re.MULTILINE)


class MockVlmBackend:
    """Offline backend: scripted fixtures keyed by (template, digest), with
    deterministic defaults that are pure functions of the call inputs."""

    identity = "mock"

    def __init__(self, scripted: dict[tuple[str, str], str] | None = None):
        self.scripted = dict(scripted or {})

    def call(self, template_name: str, message: str, image_bytes: bytes = b"") -> str:
        digest = message_digest(message, image_bytes)
        key = (template_name, digest)
        if key in self.scripted:
            return self.scripted[key]
        return self._default_reply(template_name, message, digest)

    def _default_reply(self, template_name: str, message: str, digest: str) -> str:
        if template_name == "typography_analysis":
            return self._canned_plan(message)
        if template_name == "clean_prompt":
            return self._cleaned(message)
        if template_name == "style_prompt":
            return ("Restyle the rendered text so its color and texture blend "
                    "naturally with the surrounding background, keeping position unchanged.")
        if template_name == "refine_prompt":
            m = _PROMPT_LINE_RE.findall(message)
            return m[-1] if m else message
        if template_name in ("score_image",):
            return f"{5.0 + (int(digest[:8], 16) % 500) / 100.0:.2f}"
        if template_name == "rank_images":
            return "1,2,3,4"
        if template_name == "ocr_recognition":
            return ""
        raise TemplateError(f"mock has no behavior for template {template_name!r}")

    @staticmethod
    def _canned_plan(message: str) -> str:
        m = _ITEMS_RE.search(message)
        contents = json.loads(m.group(1)) if m else ["TEXT"]
        n = max(1, len(contents))
        band = 0.8 / n
        regions = []
        for i, content in enumerate(contents):
            y0 = round(0.1 + i * band, 3)
            regions.append({
                "content": content,
                "bbox": [0.1, y0, 0.9, round(y0 + band * 0.8, 3)],
                "font": "auto",
                "font_weight": "regular",
                "font_size_ratio": 0.5,
                "color": "black",
                "is_latex": False,
                "alignment": "center",
                "rotation": 0.0,
            })
        plan = {
            "image_analysis": {
                "background_style": "plain studio backdrop",
                "dominant_colors": ["#808080", "#C0C0C0"],
                "text_style_hint": "clean printed type",
            },
            "text_regions": regions,
        }
        return json.dumps(plan, ensure_ascii=False)

    @staticmethod
    def _cleaned(message: str) -> str:
        m = _PROMPT_LINE_RE.findall(message)
        original = m[-1] if m else message
        try:
            spans = quoted_spans(original)
        except QuoteError:
            spans = []
        out = original
        for s, e in reversed(spans):
            out = out[:s - 1] + out[e + 1:]
        out = re.sub(r"\s+", " ", out).strip().rstrip(".")
        return f"{out}. No text visible."


class RemoteVlmBackend:
    """Generic JSON-over-HTTPS chat client; endpoint/credential from environment."""

    def __init__(self, model: str = "default", session=None, timeout: float = 60.0):
        import requests

        self.endpoint = os.environ.get(ENDPOINT_ENV)
        self.key = os.environ.get(KEY_ENV)
        if not self.endpoint:
            raise RuntimeError(f"{ENDPOINT_ENV} is not set")
        self.model = model
        self.session = session or requests.Session()
        self.timeout = timeout
        self.identity = f"remote:{model}"

    def build_request(self, message: str, image_bytes: bytes = b"") -> dict:
        content: list[dict] = [{"type": "text", "data": message}]
        if image_bytes:
            content.append({
                "type": "image",
                "data": base64.b64encode(image_bytes).decode("ascii"),
            })
        return {"model": self.model, "messages": [{"role": "user", "content": content}]}

    def call(self, template_name: str, message: str, image_bytes: bytes = b"") -> str:
        headers = {"Content-Type": "application/json"}
        if self.key:
            headers["Authorization"] = f"Bearer {self.key}"
        resp = self.session.post(self.endpoint, json=self.build_request(message, image_bytes),
                                 headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        payload = resp.json()
        return payload["choices"][0]["message"]["content"]
