"""Vocabulary, the mesh-labeling request/response contract, and labelers.

Two labelers are provided: :class:`FileLabeler` reads a path -> label table
(offline, deterministic) and :class:`RemoteLabeler` posts an OpenAI-style
chat-completion request carrying six rendered images to a configurable
endpoint.
"""

from __future__ import annotations

import base64
import enum
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .errors import (
    LabelingError,
    LabelingFailed,
    MalformedVocabulary,
    MissingImages,
    UnknownLabelWithoutProposal,
    UnparseableResponse,
)

logger = logging.getLogger(__name__)

IMAGE_SIZE = (512, 512)
API_KEY_ENV = "CADGRAPH_API_KEY"


class Provenance(str, enum.Enum):
    GROUND_TRUTH = "GROUND_TRUTH"
    MODEL = "MODEL"
    PROPOSED_NEW = "PROPOSED_NEW"


@dataclass(frozen=True)
class SemanticLabel:
    group: str
    name: str
    provenance: Provenance = Provenance.MODEL

    def to_dict(self) -> dict:
        return {"group": self.group, "name": self.name, "provenance": self.provenance.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], default=Provenance.GROUND_TRUTH) -> "SemanticLabel":
        return cls(d["group"], d["name"], Provenance(d.get("provenance", default)))


@dataclass(frozen=True)
class Vocabulary:
    """Three-level label tree: (empty root) -> group -> names."""

    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "groups", {str(g): tuple(str(n) for n in names) for g, names in self.groups.items()}
        )

    def __contains__(self, pair) -> bool:
        group, name = pair
        return name in self.groups.get(group, ())

    def has_group(self, group: str) -> bool:
        return group in self.groups

    def extend(self, group: str, name: str) -> "Vocabulary":
        return extend_vocabulary(self, group, name)

    def to_dict(self) -> dict:
        return {"groups": {g: list(n) for g, n in self.groups.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @property
    def depth(self) -> int:
        return 3 if self.groups else 1

    @classmethod
    def from_dict(cls, doc) -> "Vocabulary":
        if not isinstance(doc, Mapping) or not isinstance(doc.get("groups"), Mapping):
            raise MalformedVocabulary("vocabulary needs a 'groups' object")
        groups = {}
        for group, names in doc["groups"].items():
            if not isinstance(group, str) or not group.strip():
                raise MalformedVocabulary("group labels must be non-empty strings")
            if not isinstance(names, list) or not names:
                raise MalformedVocabulary(f"group {group!r} needs a non-empty list of names")
            if not all(isinstance(n, str) and n.strip() for n in names):
                raise MalformedVocabulary(f"group {group!r}: names must be non-empty strings")
            if len(set(names)) != len(names):
                raise MalformedVocabulary(f"group {group!r} lists a name twice")
            groups[group] = tuple(names)
        return cls(groups)


def load_vocabulary(file) -> Vocabulary:
    try:
        text = Path(file).read_text()
    except OSError as exc:
        raise MalformedVocabulary(f"{file}: {exc}") from exc
    if not text.strip():
        raise MalformedVocabulary(f"{file}: empty vocabulary file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedVocabulary(f"{file}: {exc}") from exc
    return Vocabulary.from_dict(doc)


def extend_vocabulary(v: Vocabulary, group: str, name: str) -> Vocabulary:
    """Append ``name`` under ``group`` (creating the group); no-op if present."""
    if not group or not name:
        raise MalformedVocabulary("labels must be non-empty")
    if (group, name) in v:
        return v
    groups = dict(v.groups)
    groups[group] = tuple(groups.get(group, ())) + (name,)
    return Vocabulary(groups)


# --------------------------------------------------------------------------
# request / response contract


@dataclass(frozen=True)
class LabelRequest:
    mesh_path: str
    bbox_dims: tuple[float, float, float]
    image_pairs: tuple[tuple[bytes, bytes], ...]
    vocabulary: Vocabulary


INSTRUCTIONS = (
    "You label parts of an industrial plant CAD model. The images come in three "
    "pairs, one pair per camera view: the first image of a pair shows the whole "
    "environment with the target part highlighted in red, the second shows only "
    "the target part. Pick the best matching 'group' and 'name' from the "
    "vocabulary. If no entry fits, propose a new one and set new_label to true. "
    'Answer with strict JSON only: {"group": "...", "name": "...", "new_label": false}'
)


def format_bbox(dims: Sequence[float]) -> str:
    return " x ".join(f"{float(d):.3f}" for d in dims)


def _png_bytes(image) -> bytes:
    if isinstance(image, (bytes, bytearray)):
        data = bytes(image)
        if not data.startswith(b"\x89PNG"):
            raise MissingImages("image bytes are not PNG encoded")
        return data
    arr = np.asarray(image)
    if arr.shape[:2] != IMAGE_SIZE[::-1] or arr.ndim != 3 or arr.shape[2] != 3:
        raise MissingImages(f"expected {IMAGE_SIZE[0]}x{IMAGE_SIZE[1]} RGB images, got {arr.shape}")
    from .rendering import to_png

    return to_png(arr)


def assemble_label_request(node, images: Sequence, vocabulary: Vocabulary, model: str = "gpt-4o"):
    """Build the request record and the chat-completion payload for one node.

    ``images`` are six RGB arrays or PNG blobs ordered pair by pair
    (context, isolated, context, isolated, ...).

    Returns:
        (LabelRequest, payload dict)
    """
    if images is None or len(images) != 6 or any(im is None for im in images):
        raise MissingImages(f"{node.path}: need 6 images, got {0 if images is None else len(images)}")
    box = node.aabb
    if box is None:
        raise ValueError(f"{node.path}: node has no bounding box")
    dims = tuple(float(x) for x in box.extents)
    blobs = [_png_bytes(im) for im in images]
    pairs = tuple((blobs[i], blobs[i + 1]) for i in range(0, 6, 2))
    request = LabelRequest(node.path, dims, pairs, vocabulary)

    text = (
        f"Target mesh: {node.path}\n"
        f"Bounding box dimensions (meters): {format_bbox(dims)}\n"
        f"Vocabulary (group -> names):\n{json.dumps(vocabulary.to_dict()['groups'], indent=1)}"
    )
    content: list[dict] = [{"type": "text", "text": text}]
    for blob in blobs:
        url = "data:image/png;base64," + base64.b64encode(blob).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": url}})
    payload = {
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": INSTRUCTIONS},
            {"role": "user", "content": content},
        ],
    }
    return request, payload


def _first_json_object(text: str) -> str | None:
    start = text.find("{")
    while start != -1:
        depth, in_str, escape = 0, False, False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def parse_label_response(text: str, vocabulary: Vocabulary) -> SemanticLabel:
    """Parse the model's JSON answer, with one repair pass.

    The repair pass extracts the first balanced ``{...}`` block from
    surrounding prose.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError):
        block = _first_json_object(text or "")
        if block is None:
            raise UnparseableResponse(f"no JSON object in response: {text[:80]!r}") from None
        try:
            doc = json.loads(block)
        except json.JSONDecodeError as exc:
            raise UnparseableResponse(f"invalid JSON block: {exc}") from exc
    if not isinstance(doc, dict):
        raise UnparseableResponse("response JSON is not an object")
    group, name = doc.get("group"), doc.get("name")
    if not isinstance(group, str) or not isinstance(name, str) or not group or not name:
        raise UnparseableResponse("response lacks string 'group' and 'name'")
    group, name = group.strip(), name.strip()
    if (group, name) in vocabulary:
        return SemanticLabel(group, name, Provenance.MODEL)
    if doc.get("new_label") is True:
        return SemanticLabel(group, name, Provenance.PROPOSED_NEW)
    raise UnknownLabelWithoutProposal(f"({group!r}, {name!r}) not in vocabulary and not proposed")


# --------------------------------------------------------------------------
# labelers


class Labeler(Protocol):
    def label(self, node, vocabulary: Vocabulary) -> SemanticLabel: ...


class FileLabeler:
    """Looks labels up in a path -> {group, name} table.

    A node is matched by its representative path first, then by its member
    paths in sorted order.
    """

    def __init__(self, table: Mapping[str, Any]):
        self.table = {
            p: v if isinstance(v, SemanticLabel) else SemanticLabel.from_dict(v)
            for p, v in table.items()
        }

    @classmethod
    def from_file(cls, path) -> "FileLabeler":
        return cls(json.loads(Path(path).read_text()))

    def label(self, node, vocabulary: Vocabulary) -> SemanticLabel:
        for path in [node.path, *sorted(getattr(node, "member_paths", ()))]:
            if path in self.table:
                lab = self.table[path]
                return SemanticLabel(lab.group, lab.name, Provenance.GROUND_TRUTH)
        raise LabelingError(f"{node.path}: no entry in the label table")


class RemoteLabeler:
    """Chat-completion labeler over HTTP.

    The API key is read from the environment variable named by
    ``api_key_env`` at call time; it is never stored in config files.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        scene,
        api_key_env: str = API_KEY_ENV,
        timeout: float = 60.0,
        client=None,
        image_source: Callable | None = None,
    ):
        import httpx

        self.endpoint = endpoint
        self.model = model
        self.scene = scene
        self.api_key_env = api_key_env
        self.client = client or httpx.Client(timeout=timeout)
        self.image_source = image_source

    def _images(self, node):
        if self.image_source is not None:
            return self.image_source(node)
        from .rendering import label_images

        return label_images(self.scene, node)

    def label(self, node, vocabulary: Vocabulary) -> SemanticLabel:
        import httpx

        _, payload = assemble_label_request(node, self._images(node), vocabulary, self.model)
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.client.post(self.endpoint, json=payload, headers=headers)
            resp.raise_for_status()
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise LabelingError(f"{node.path}: request failed ({exc})") from exc
        return parse_label_response(text, vocabulary)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_s: float = 0.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class LabelingResult:
    labels: dict[str, SemanticLabel]
    failures: dict[str, LabelingFailed]
    vocabulary: Vocabulary
    attempts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "labels": {p: l.to_dict() for p, l in sorted(self.labels.items())},
            "failures": {p: f.cause for p, f in sorted(self.failures.items())},
            "vocabulary": self.vocabulary.to_dict(),
        }


def _label_one(labeler, node, vocabulary, retry: RetryPolicy):
    last = ""
    for attempt in range(1, retry.max_attempts + 1):
        try:
            return labeler.label(node, vocabulary), attempt, None
        except LabelingError as exc:
            last = str(exc)
            logger.info("%s: attempt %d failed: %s", node.path, attempt, exc)
            if retry.backoff_s and attempt < retry.max_attempts:
                time.sleep(retry.backoff_s * attempt)
    return None, retry.max_attempts, LabelingFailed(node.path, retry.max_attempts, last)


def label_scene(
    graph,
    labeler: Labeler,
    vocabulary: Vocabulary,
    retry_policy: RetryPolicy = RetryPolicy(),
    max_workers: int = 1,
) -> LabelingResult:
    """Label every mesh node of ``graph``.

    All requests see the same vocabulary snapshot; labels not yet in the
    vocabulary are admitted afterwards in mesh-path order, so the final
    vocabulary does not depend on request concurrency. Failures are
    collected per mesh and leave the node unlabeled.
    """
    nodes = sorted(graph.mesh_nodes(), key=lambda n: n.path)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda n: _label_one(labeler, n, vocabulary, retry_policy), nodes))
    else:
        results = [_label_one(labeler, n, vocabulary, retry_policy) for n in nodes]

    labels, failures, attempts = {}, {}, {}
    vocab = vocabulary
    for node, (lab, tries, failure) in zip(nodes, results):
        attempts[node.path] = tries
        if failure is not None:
            failures[node.path] = failure
            continue
        if (lab.group, lab.name) not in vocab:
            vocab = extend_vocabulary(vocab, lab.group, lab.name)
        labels[node.path] = lab
    if failures:
        logger.warning("labeling: %d of %d meshes failed", len(failures), len(nodes))
    return LabelingResult(labels, failures, vocab, attempts)


def default_vocabulary() -> Vocabulary:
    from importlib import resources

    text = resources.files("cadgraph").joinpath("data/vocabulary.json").read_text()
    return Vocabulary.from_dict(json.loads(text))
