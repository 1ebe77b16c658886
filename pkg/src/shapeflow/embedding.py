"""Embedding vectors: prompts, a deterministic stand-in embedder, manifests,
zero-shot classification and spherical interpolation.

Manifest format (UTF-8 text, LF line endings)::

    # shapeflow embedding manifest v1
    dimension <D>
    source <free text up to end of line>
    <label>\t<provenance>\t<index>\t<base64 vector>[\t<alias>]
    ...

Lines starting with ``#`` after the header and blank lines are ignored.
``provenance`` is one of ``text``, ``image``, ``mock``. ``index`` is a
non-negative integer distinguishing several vectors for the same label and
provenance; ``(label, provenance, index)`` must be unique. The vector is the
base64 encoding of D little-endian IEEE-754 float32 values. Labels must not
contain tabs or newlines.
"""
from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass
import hashlib
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericRangeError, ValidationError

DEFAULT_DIM = 512
PROVENANCES = ("text", "image", "mock")
MAGIC = "# shapeflow embedding manifest v1"

PROMPTS = {
    "animal": "A photo of a {name}",
    "tree": "A photo of a {name} tree",
    "tree_aged": "A photo of a {age} {name} tree",
}


@dataclass
class EmbeddingVector:
    data: np.ndarray
    provenance: str = "mock"
    label: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 1:
            raise ValidationError("embedding must be a 1-d vector")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isfinite(self.data)):
            raise ValidationError(f"embedding {self.label!r} has non-finite entries")
        if not np.any(self.data):
            raise ValidationError(f"embedding {self.label!r} has zero norm")

    @property
    def dim(self):
        return self.data.size

    def unit(self):
        return self.data / np.linalg.norm(self.data)


def prompt_for(kind, name, age=None):
    if kind not in PROMPTS:
        raise ValidationError(f"unknown prompt kind {kind!r}")
    if kind == "tree_aged" and not age:
        raise ValidationError("tree_aged prompts need an age")
    return PROMPTS[kind].format(name=name, age=age)


def _token_key(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def mock_embed(text: str, dim: int = DEFAULT_DIM, label: str | None = None) -> EmbeddingVector:
    """Hash-seeded bag-of-tokens embedding.

    Every lowercased whitespace token seeds a Philox generator with its 64-bit
    BLAKE2b digest and contributes one standard normal vector; the sum is
    L2-normalised. Prompts sharing tokens therefore end up correlated.
    """
    tokens = text.lower().split()
    if not tokens:
        raise ValidationError("cannot embed empty text")
    acc = np.zeros(dim)
    for tok in tokens:
        gen = np.random.Generator(np.random.Philox(key=_token_key(tok)))
        acc += gen.standard_normal(dim)
    acc /= np.linalg.norm(acc)
    return EmbeddingVector(acc, "mock", text if label is None else label)


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def classify_zero_shot(query, candidates):
    """Label of the candidate with the highest cosine similarity to ``query``
    (first one wins ties) and the full list of scores."""
    if not candidates:
        raise ValidationError("no candidates to classify against")
    q = _data(query)
    scores = np.array([cosine(q, _data(c)) for c in candidates])
    best = int(np.argmax(scores))
    return _label(candidates[best], best), scores


def _data(v):
    return v.data if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)


def _label(v, idx):
    return v.label if isinstance(v, EmbeddingVector) else str(idx)


def interpolate(a: EmbeddingVector, b: EmbeddingVector, t: float, label=None) -> EmbeddingVector:
    """Spherical interpolation between the unit directions of ``a`` and ``b``."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"t={t} outside [0, 1]")
    ua, ub = a.unit(), b.unit()
    dot = float(np.clip(ua @ ub, -1.0, 1.0))
    if dot <= -1.0 + 1e-12:
        raise NumericRangeError("antipodal embeddings: interpolation path undefined")
    omega = np.arccos(dot)
    if omega < 1e-12:
        out = ua.copy()
    else:
        so = np.sin(omega)
        out = np.sin((1.0 - t) * omega) / so * ua + np.sin(t * omega) / so * ub
    return EmbeddingVector(out, a.provenance, label or f"{a.label}~{b.label}@{t:g}")


# ----------------------------------------------------------------------------
# manifests


@dataclass
class ManifestEntry:
    label: str
    provenance: str
    index: int
    vector: EmbeddingVector
    alias: str = ""


class EmbeddingManifest:
    def __init__(self, dimension, source="", entries=()):
        self.dimension = int(dimension)
        self.source = source
        self.entries = []
        self._keys = set()
        for e in entries:
            self.add(e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, entry: ManifestEntry):
        if entry.vector.dim != self.dimension:
            raise ValidationError(
                f"entry {entry.label!r} has dimension {entry.vector.dim}, manifest has {self.dimension}")
        key = (entry.label, entry.provenance, entry.index)
        if key in self._keys:
            raise ValidationError(f"duplicate manifest key {key}")
        for text in (entry.label, entry.alias):
            if "\t" in text or "\n" in text:
                raise ValidationError(f"label {text!r} contains a tab or newline")
        self._keys.add(key)
        self.entries.append(entry)

    def append(self, label, provenance, data, alias=""):
        index = sum(1 for e in self.entries if e.label == label and e.provenance == provenance)
        vec = EmbeddingVector(data, provenance, label)
        self.add(ManifestEntry(label, provenance, index, vec, alias))

    def labels(self):
        seen = []
        for e in self.entries:
            if e.label not in seen:
                seen.append(e.label)
        return seen

    def get(self, label, provenance=None):
        """All vectors for ``label`` (matched on label or alias)."""
        return [e.vector for e in self.entries
                if (e.label == label or (e.alias and e.alias == label))
                and (provenance is None or e.provenance == provenance)]

    def first(self, label, provenance=None):
        found = self.get(label, provenance)
        if not found:
            raise ValidationError(f"label {label!r} not found in manifest")
        return found[0]


def _encode_vec(data):
    return base64.b64encode(np.asarray(data, dtype="<f4").tobytes()).decode("ascii")


def _decode_vec(text, dim, row):
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise FormatError(f"row {row}: invalid base64 vector") from None
    if len(raw) != 4 * dim:
        raise ValidationError(
            f"row {row}: vector has dimension {len(raw) // 4}, manifest declares {dim}")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def save_manifest(manifest: EmbeddingManifest, path):
    lines = [MAGIC, f"dimension {manifest.dimension}", f"source {manifest.source}".rstrip()]
    for e in manifest.entries:
        cols = [e.label, e.provenance, str(e.index), _encode_vec(e.vector.data)]
        if e.alias:
            cols.append(e.alias)
        lines.append("\t".join(cols))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise FormatError(f"cannot write manifest {path}: {exc}") from None


def load_manifest(path) -> EmbeddingManifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from None
    lines = text.split("\n")
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"{path}: missing manifest header")
    if len(lines) < 3 or not lines[1].startswith("dimension ") or not lines[2].startswith("source"):
        raise FormatError(f"{path}: header needs 'dimension' and 'source' lines")
    try:
        dim = int(lines[1].split(None, 1)[1])
    except (IndexError, ValueError):
        raise FormatError(f"{path}: bad dimension line") from None
    if dim < 1:
        raise FormatError(f"{path}: dimension must be positive")
    source = lines[2][len("source"):].strip()
    manifest = EmbeddingManifest(dim, source)
    row = 0
    for line in lines[3:]:
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) not in (4, 5):
            raise FormatError(f"{path}: row {row} has {len(cols)} columns")
        label, prov, index, vec = cols[:4]
        alias = cols[4] if len(cols) == 5 else ""
        if prov not in PROVENANCES:
            raise FormatError(f"{path}: row {row} has unknown provenance {prov!r}")
        try:
            index = int(index)
        except ValueError:
            raise FormatError(f"{path}: row {row} has a non-integer index") from None
        data = _decode_vec(vec, dim, row)
        manifest.add(ManifestEntry(label, prov, index, EmbeddingVector(data, prov, label), alias))
        row += 1
    return manifest
