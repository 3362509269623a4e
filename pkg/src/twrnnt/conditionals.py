"""Emission-time factorized conditional token probabilities.

The sequence probability factors as a product of per-token conditionals
P(y[u] | y[:u]).  Each conditional is the ratio of two prefix masses, and
each prefix mass is the total probability of all partial alignments that
end by emitting that token at some frame: blanks advance frames between
consecutive emissions, so the mass of emitting token u at frame t recurses
over the frame t' where token u-1 was emitted.

One sweep computes all U conditionals plus the sentence-end (final blank)
completion term; nothing is recomputed per token.  The conditionals double
as token confidence scores for the weighted objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .lattice import PosteriorLattice, as_labels

__all__ = [
    "EmissionForward",
    "ConditionalProfile",
    "emission_forward",
    "emission_forward_quadratic",
    "conditional_profile",
    "next_token_distribution",
    "profile_to_json",
    "profile_from_json",
]


@dataclass(frozen=True)
class EmissionForward:
    """Joint emission-time masses for one (lattice, labels) pair.

    A[t, u-1] (shape (T, U)) is the log joint probability of the prefix
    y[:u] with its last token emitted exactly at frame t.  prefix_logp[u]
    is the log prefix mass logsumexp_t A[t, u-1]; prefix_logp[0] = 0 and
    the vector is non-increasing.
    """

    A: np.ndarray
    prefix_logp: np.ndarray


@dataclass(frozen=True)
class ConditionalProfile:
    """Per-token conditionals c_u = P(y[u] | y[:u]) in (0, 1], plus the
    log-probability of the terminating blank run given the full sequence.

    ``loglik_check`` = sum(log c) + final_blank_logp reproduces the sequence
    log-likelihood, so profile and standard loss telescope to zero.
    """

    conditionals: np.ndarray
    final_blank_logp: float

    @property
    def loglik_check(self) -> float:
        return float(np.sum(np.log(self.conditionals)) + self.final_blank_logp)

    def __len__(self) -> int:
        return len(self.conditionals)


def _sweep(lattice: PosteriorLattice, y, require_tokens: bool = True):
    labels = as_labels(y)
    if require_tokens and labels.size == 0:
        raise DataError("conditional computation needs U >= 1 (no tokens to condition on)")
    if lattice.U != labels.size:
        raise DataError(
            f"label/lattice mismatch: lattice has (T={lattice.T}, U={lattice.U}) "
            f"but the label sequence has U={labels.size}"
        )
    if labels.size and labels.max() >= lattice.blank:
        raise DataError(
            f"token index {int(labels.max())} is not below the blank index {lattice.blank}"
        )
    return labels, kernels.emission_sweep(lattice.logp, labels)


def emission_forward(lattice: PosteriorLattice, y) -> EmissionForward:
    """Emission-time forward table for y over the lattice, O(T*U) via the
    running-prefix form of the blank-run sums."""
    _, (A, _, prefix, _) = _sweep(lattice, y)
    return EmissionForward(A=A[:, 1:].copy(), prefix_logp=prefix.copy())


def emission_forward_quadratic(lattice: PosteriorLattice, y) -> EmissionForward:
    """Reference table with the explicit O(T^2 * U) blank-run inner sum;
    agrees with ``emission_forward`` to ~1e-12."""
    labels = as_labels(y)
    if labels.size == 0:
        raise DataError("conditional computation needs U >= 1 (no tokens to condition on)")
    if lattice.U != labels.size:
        raise DataError(
            f"label/lattice mismatch: lattice has (T={lattice.T}, U={lattice.U}) "
            f"but the label sequence has U={labels.size}"
        )
    A, prefix, _ = kernels.emission_sweep_quadratic(lattice.logp, labels)
    return EmissionForward(A=A[:, 1:].copy(), prefix_logp=prefix.copy())


def conditional_profile(lattice: PosteriorLattice, y) -> ConditionalProfile:
    """All token conditionals plus the sentence-end term, in one sweep.

    c_u = exp(prefix_logp[u] - prefix_logp[u-1]); a zero-probability prefix
    raises rather than propagating NaN into training.
    """
    labels, (A, R, prefix, loglik) = _sweep(lattice, y)
    U = labels.size
    for u in range(1, U + 1):
        if prefix[u - 1] == -np.inf:
            raise NumericalError(
                f"prefix y[:{u - 1}] has zero probability; conditional at "
                f"position {u} is undefined"
            )
    if prefix[U] == -np.inf:
        raise NumericalError(
            f"prefix y[:{U}] has zero probability; the sentence-end term is undefined"
        )
    conditionals = np.exp(np.diff(prefix))
    return ConditionalProfile(
        conditionals=conditionals,
        final_blank_logp=float(loglik - prefix[U]),
    )


def next_token_distribution(lattice: PosteriorLattice, prefix, u: int) -> np.ndarray:
    """Distribution of the u-th output symbol given the prefix y[:u-1].

    Returns a vector over V tokens plus one terminal slot (last index): the
    probability that the output ends after the prefix, i.e. only blanks
    remain to frame T.  Entries sum to 1.  The lattice must carry rows for
    label levels 0..u-1 (a model lattice for the prefix, or a synthetic
    full lattice).
    """
    labels = as_labels(prefix)
    if u < 1:
        raise DataError(f"position u must be >= 1, got {u}")
    if u - 1 > labels.size:
        raise DataError(
            f"position u={u} needs a prefix of {u - 1} tokens, got {labels.size}"
        )
    level = u - 1
    if level > lattice.U:
        raise DataError(
            f"lattice has label levels 0..{lattice.U}; position u={u} needs level {level}"
        )
    labels = labels[:level]
    if labels.size and labels.max() >= lattice.blank:
        raise DataError(
            f"token index {int(labels.max())} is not below the blank index {lattice.blank}"
        )
    # Emission sweep for the prefix alone, on the sliced lattice.
    sub = np.ascontiguousarray(lattice.logp[:, : level + 1, :])
    A, _, prefix_logp, _ = kernels.emission_sweep(sub, labels)
    if prefix_logp[level] == -np.inf:
        raise NumericalError(
            f"prefix y[:{level}] has zero probability; next-token distribution "
            "is undefined"
        )
    masses = kernels.next_symbol_masses(
        lattice.logp, np.ascontiguousarray(A[:, level]), level
    )
    return np.exp(masses - prefix_logp[level])


def profile_to_json(profile: ConditionalProfile) -> str:
    """Teacher confidence record: {"conditionals": [...], "final_blank_logp": ...}."""
    return json.dumps(
        {
            "conditionals": [float(c) for c in profile.conditionals],
            "final_blank_logp": float(profile.final_blank_logp),
        }
    )


def profile_from_json(obj) -> ConditionalProfile:
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        return ConditionalProfile(
            conditionals=np.asarray(obj["conditionals"], dtype=np.float64),
            final_blank_logp=float(obj["final_blank_logp"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed conditional profile JSON: {exc}") from exc
