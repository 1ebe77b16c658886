"""Evaluation protocols: paired embedding votes and the exact binomial test."""
from __future__ import annotations

import csv
from dataclasses import dataclass
import math

import numpy as np

from .embedding import cosine
from .errors import FormatError, ValidationError


def binomial_test(wins: int, total: int) -> float:
    """One-sided p-value ``P(X >= wins)`` for ``X ~ Binomial(total, 1/2)``.

    Terms are summed exactly in log space (log-sum-exp over log-gamma
    coefficients), so no normal approximation is involved.
    """
    if isinstance(wins, bool) or isinstance(total, bool) or \
            int(wins) != wins or int(total) != total:
        raise ValidationError("wins and total must be integers")
    wins, total = int(wins), int(total)
    if total < 0 or not 0 <= wins <= total:
        raise ValidationError(f"need 0 <= wins <= total, got wins={wins}, total={total}")
    if total > 10 ** 6:
        raise ValidationError("total above 1e6 is not supported")
    if wins == 0:
        return 1.0
    k = np.arange(wins, total + 1, dtype=np.float64)
    logs = (math.lgamma(total + 1) - np.array([math.lgamma(x + 1) for x in k])
            - np.array([math.lgamma(total - x + 1) for x in k]) - total * math.log(2.0))
    top = logs.max()
    return float(min(1.0, math.exp(top) * math.fsum(np.exp(logs - top))))


@dataclass(frozen=True)
class VoteRecord:
    label: str
    score_a: float
    score_b: float

    @property
    def winner(self):
        # ties go to A
        return "A" if self.score_a >= self.score_b else "B"


@dataclass
class VoteTable:
    records: list

    @property
    def wins_a(self):
        return sum(1 for r in self.records if r.winner == "A")

    @property
    def wins_b(self):
        return sum(1 for r in self.records if r.winner == "B")

    @property
    def ties(self):
        return sum(1 for r in self.records if r.score_a == r.score_b)

    def p_value(self):
        """Significance of A's advantage."""
        return binomial_test(self.wins_a, len(self.records))


def render_key(model, label):
    """Manifest label under which a render embedding of ``label`` produced by
    model ``A`` or ``B`` is stored."""
    return f"{model}/{label}"


def vote_compare(labels, render_embeddings, text_embeddings) -> VoteTable:
    """Per label, the model whose render embedding is closer (cosine) to the
    label's text embedding wins the vote.

    ``render_embeddings`` is a manifest holding ``A/<label>`` and ``B/<label>``
    entries; ``text_embeddings`` maps each label to a vector (or is a manifest).
    """
    labels = list(labels)
    if not labels:
        raise ValidationError("no labels to compare")
    records, missing = [], []
    for label in labels:
        vecs = {}
        for model in ("A", "B"):
            found = render_embeddings.get(render_key(model, label))
            if not found:
                missing.append(render_key(model, label))
            else:
                vecs[model] = found[0].data
        text = _text_vector(text_embeddings, label)
        if text is None:
            missing.append(f"text/{label}")
        if len(vecs) == 2 and text is not None:
            records.append(VoteRecord(label, cosine(vecs["A"], text), cosine(vecs["B"], text)))
    if missing:
        raise ValidationError(f"missing embeddings: {missing[:10]}"
                              + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""))
    return VoteTable(records)


def _text_vector(source, label):
    if hasattr(source, "get") and not isinstance(source, dict):
        found = source.get(label)
        return found[0].data if found else None
    vec = source.get(label)
    if vec is None:
        return None
    return getattr(vec, "data", vec)


def write_vote_csv(table: VoteTable, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "score_a", "score_b", "winner"])
            for r in table.records:
                w.writerow([r.label, repr(r.score_a), repr(r.score_b), r.winner])
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from None


def read_labels(path):
    """One label per line; blank lines and ``#`` comments skipped."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read labels {path}: {exc}") from None
    return [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
