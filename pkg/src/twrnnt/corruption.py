"""Transcript corruption simulating human annotation errors.

Each token is independently corrupted with probability ``error_rate`` by one
of three error types chosen uniformly: repeating the token, omitting it, or
substituting a confusable token.  "Confusable" for synthetic integer tokens
means nearest prototype vector by Euclidean distance (the stand-in for
similar-sounding words); without prototypes the substitute is uniform over
the other tokens.

Corpus-level corruption is calibrated: adjacent errors partially merge under
Levenshtein alignment (a repeat next to an omit scores as one substitution),
so the raw per-token rate understates the resulting reference WER by several
absolute points at high levels.  ``corrupt_corpus`` therefore runs a small
deterministic pilot loop that tunes the internal per-token probability until
the measured reference WER matches ``error_rate``, which is what the error
level means downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .lattice import Vocabulary, as_labels
from .metrics import wer
from .seeds import stream

__all__ = ["ERROR_TYPES", "CorruptionConfig", "corrupt_transcript", "corrupt_corpus"]

ERROR_TYPES = ("repeat", "omit", "substitute")


@dataclass(frozen=True)
class CorruptionConfig:
    error_rate: float
    rng_seed: int = 0
    error_types: tuple = ERROR_TYPES

    def __post_init__(self):
        if not 0.0 <= self.error_rate <= 1.0:
            raise DataError(f"error_rate must be in [0, 1], got {self.error_rate}")
        bad = [t for t in self.error_types if t not in ERROR_TYPES]
        if bad or not self.error_types:
            raise DataError(
                f"error_types must be a nonempty subset of {ERROR_TYPES}, "
                f"got {self.error_types}"
            )


def _nearest_tokens(prototypes: np.ndarray) -> np.ndarray:
    """For each token, the indices of all other tokens sorted by prototype
    distance; ties keep index order (broken later by the rng)."""
    diff = prototypes[:, None, :] - prototypes[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, np.inf)
    return dist


def _substitute(token: int, vocab: Vocabulary, prototypes, rng) -> int:
    if vocab.size == 1:
        return token  # nothing distinct to substitute
    if prototypes is None:
        choice = int(rng.integers(0, vocab.size - 1))
        return choice + (choice >= token)
    dist = _nearest_tokens(np.asarray(prototypes, dtype=np.float64))[token]
    best = np.min(dist)
    candidates = np.flatnonzero(np.abs(dist - best) < 1e-12)
    return int(rng.choice(candidates))


def corrupt_transcript(
    y,
    cfg: CorruptionConfig,
    vocab: Vocabulary,
    prototypes: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
    rate: Optional[float] = None,
):
    """Corrupt one label sequence with the raw per-token mechanism; an empty
    result is legal (all tokens omitted).

    Pass an explicit ``rng`` when corrupting a corpus so utterances draw
    from one stream; otherwise a fresh generator is seeded from the config.
    ``rate`` overrides the per-token probability (used by the corpus-level
    calibration); it defaults to ``cfg.error_rate``.
    """
    labels = as_labels(y, vocab)
    if labels.size == 0:
        raise DataError("cannot corrupt an empty transcript")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    q = cfg.error_rate if rate is None else rate
    out = []
    for token in labels:
        token = int(token)
        if rng.random() >= q:
            out.append(token)
            continue
        kind = cfg.error_types[int(rng.integers(0, len(cfg.error_types)))]
        if kind == "repeat":
            out.extend((token, token))
        elif kind == "omit":
            pass
        else:
            out.append(_substitute(token, vocab, prototypes, rng))
    return np.asarray(out, dtype=np.int64)


def _corrupt_all(transcripts, cfg, vocab, prototypes, rng, rate):
    return [
        corrupt_transcript(t, cfg, vocab, prototypes=prototypes, rng=rng, rate=rate)
        for t in transcripts
    ]


def _measured_wer(corrupted, references) -> float:
    dist = sum(wer(c, r).distance for c, r in zip(corrupted, references))
    total = sum(len(r) for r in references)
    return dist / total


def _calibrated_rate(transcripts, cfg, vocab, prototypes) -> float:
    """Tune the per-token probability so the corpus reference WER lands on
    cfg.error_rate.  Pilot corruptions use seeds derived from the config so
    the result is deterministic."""
    target = cfg.error_rate
    if target <= 0.0:
        return 0.0
    q = target
    for round_ in range(6):
        measures = []
        for pilot in range(2):
            rng = stream(cfg.rng_seed, "corruption-pilot", round_, pilot)
            measures.append(
                _measured_wer(
                    _corrupt_all(transcripts, cfg, vocab, prototypes, rng, q),
                    transcripts,
                )
            )
        measured = float(np.mean(measures))
        if abs(measured - target) < 0.002 or measured == 0.0:
            break
        q = min(1.0, q * target / measured)
        if q == 1.0 and measured < target:
            break  # saturated: cannot corrupt harder than every token
    return q


def corrupt_corpus(utterance_tokens, cfg, vocab, prototypes=None, calibrate=True):
    """Corrupt a list of transcripts from one seeded stream, in order.

    With ``calibrate`` (default) the internal per-token probability is tuned
    so the measured reference WER of the corpus matches ``cfg.error_rate``;
    otherwise the raw rate applies.
    """
    transcripts = [as_labels(t, vocab) for t in utterance_tokens]
    rate = (
        _calibrated_rate(transcripts, cfg, vocab, prototypes)
        if calibrate
        else cfg.error_rate
    )
    rng = np.random.default_rng(cfg.rng_seed)
    return _corrupt_all(transcripts, cfg, vocab, prototypes, rng, rate)
