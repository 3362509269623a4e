"""Token weights from confidence scores, and the token-weighted loss.

A weight is a confidence raised to a tunable exponent and normalized to
mean 1 over its scope -- one utterance, or every token in a batch (the
default, which keeps gradient magnitudes comparable while the exponent is
tuned).  The weighted objective multiplies each token's negative log
conditional by its weight; the sentence-end (final blank) term is kept with
a fixed, separately configurable weight so the objective stays normalized
over sequence termination.  With all weights 1 it reproduces the standard
transducer loss exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import kernels
from .conditionals import ConditionalProfile
from .errors import DataError, NumericalError
from .lattice import PosteriorLattice, as_labels

__all__ = [
    "WeightConfig",
    "TokenWeights",
    "compute_weights",
    "weighted_rnnt_loss",
    "weighted_rnnt_loss_grad",
    "weighted_loss_and_grad",
]

NORMALIZATIONS = ("per_utterance", "per_batch")


@dataclass(frozen=True)
class WeightConfig:
    """Exponent and normalization scope for turning confidences into weights."""

    alpha: float = 1.0
    final_blank_weight: float = 1.0
    normalization: str = "per_batch"

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DataError(f"alpha must be nonnegative, got {self.alpha}")
        if self.normalization not in NORMALIZATIONS:
            raise DataError(
                f"normalization must be one of {NORMALIZATIONS}, got "
                f"{self.normalization!r}"
            )


@dataclass(frozen=True)
class TokenWeights:
    """Per-token multipliers aligned with one label sequence.

    Mean over the normalization scope is 1; ordering follows the source
    confidences (monotone in c for any alpha > 0).
    """

    lambdas: np.ndarray
    source_confidences: np.ndarray
    config: WeightConfig = field(default_factory=WeightConfig)

    def __len__(self) -> int:
        return len(self.lambdas)

    @classmethod
    def uniform(cls, n: int, config: WeightConfig | None = None) -> "TokenWeights":
        cfg = config or WeightConfig(alpha=0.0)
        return cls(lambdas=np.ones(n), source_confidences=np.ones(n), config=cfg)


def _confidence_array(c) -> np.ndarray:
    if isinstance(c, ConditionalProfile):
        arr = np.asarray(c.conditionals, dtype=np.float64)
    else:
        arr = np.asarray(c, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"confidence vector must be 1-D, got shape {arr.shape}")
    if np.any(arr <= 0.0):
        bad = int(np.argmax(arr <= 0.0))
        raise DataError(
            f"confidence c[{bad}] = {arr[bad]!r} is not in (0, 1]"
        )
    if np.any(arr > 1.0 + 1e-12):
        bad = int(np.argmax(arr > 1.0 + 1e-12))
        raise DataError(f"confidence c[{bad}] = {arr[bad]!r} exceeds 1")
    return np.minimum(arr, 1.0)


def compute_weights(
    confidences: Union[ConditionalProfile, Sequence, np.ndarray],
    config: WeightConfig,
):
    """Weights lambda = c^alpha normalized to mean 1 over the configured scope.

    Accepts one confidence vector (or ConditionalProfile) and returns one
    TokenWeights, or a sequence of them and returns a list.  In per_batch
    mode a single normalizer is computed over every token of every utterance
    in the call; in per_utterance mode each vector normalizes independently.
    """
    if isinstance(confidences, (ConditionalProfile, np.ndarray)):
        single = True
    elif isinstance(confidences, (list, tuple)):
        # A flat list of numbers is one utterance's confidence vector; a
        # list of vectors/profiles is a batch scope.
        single = bool(confidences) and np.isscalar(confidences[0])
    else:
        single = True
    profiles = [confidences] if single else list(confidences)
    if not profiles:
        raise DataError("empty confidence scope: nothing to weight")
    arrays = [_confidence_array(p) for p in profiles]
    total = sum(a.size for a in arrays)
    if total == 0:
        raise DataError("empty confidence scope: zero tokens across utterances")
    powered = [a**config.alpha for a in arrays]
    if config.normalization == "per_batch":
        norm = sum(float(np.sum(p)) for p in powered) / total
        norms = [norm] * len(powered)
    else:
        norms = []
        for p in powered:
            if p.size == 0:
                norms.append(1.0)  # no tokens to scale; weight vector is empty
            else:
                norms.append(float(np.mean(p)))
    out = [
        TokenWeights(lambdas=p / n, source_confidences=a, config=config)
        for p, a, n in zip(powered, arrays, norms)
    ]
    return out[0] if single else out


def _prepare(lattice: PosteriorLattice, y, weights: TokenWeights):
    labels = as_labels(y)
    if lattice.U != labels.size:
        raise DataError(
            f"label/lattice mismatch: lattice has (T={lattice.T}, U={lattice.U}) "
            f"but the label sequence has U={labels.size}"
        )
    if labels.size and labels.max() >= lattice.blank:
        raise DataError(
            f"token index {int(labels.max())} is not below the blank index {lattice.blank}"
        )
    lam = np.ascontiguousarray(np.asarray(weights.lambdas, dtype=np.float64))
    if lam.size != labels.size:
        raise DataError(
            f"weights/labels mismatch: {lam.size} weights for {labels.size} tokens"
        )
    if np.any(lam < 0):
        raise DataError("token weights must be nonnegative")
    return labels, lam


def _loss_from_prefix(prefix, loglik, lam, w_fb) -> float:
    U = prefix.size - 1
    for u in range(1, U + 1):
        if prefix[u] == -np.inf:
            raise NumericalError(
                f"prefix y[:{u}] has zero probability; weighted loss is undefined"
            )
    loss = 0.0
    for u in range(1, U + 1):
        loss += lam[u - 1] * (prefix[u - 1] - prefix[u])
    if w_fb != 0.0:
        if loglik == -np.inf:
            raise NumericalError(
                "sequence has zero probability; the sentence-end term is undefined"
            )
        loss += w_fb * (prefix[U] - loglik)
    return float(loss)


def weighted_rnnt_loss(lattice: PosteriorLattice, y, weights: TokenWeights) -> float:
    """sum_u lambda_u * (-log c_u) + final_blank_weight * (-final_blank_logp).

    With lambda = 1 and final_blank_weight = 1 this equals the standard loss.
    """
    labels, lam = _prepare(lattice, y, weights)
    _, _, prefix, loglik = kernels.emission_sweep(lattice.logp, labels)
    return _loss_from_prefix(prefix, loglik, lam, weights.config.final_blank_weight)


def weighted_rnnt_loss_grad(
    lattice: PosteriorLattice, y, weights: TokenWeights
) -> np.ndarray:
    """Exact gradient of ``weighted_rnnt_loss`` w.r.t. the lattice table,
    from one reverse sweep over the emission recursion."""
    _, grad = weighted_loss_and_grad(lattice, y, weights)
    return grad


def weighted_loss_and_grad(lattice: PosteriorLattice, y, weights: TokenWeights):
    """(loss, gradient) in one pass; the training loop's workhorse."""
    labels, lam = _prepare(lattice, y, weights)
    w_fb = float(weights.config.final_blank_weight)
    A, R, prefix, loglik = kernels.emission_sweep(lattice.logp, labels)
    loss = _loss_from_prefix(prefix, loglik, lam, w_fb)
    grad = kernels.weighted_grad(lattice.logp, labels, A, R, prefix, loglik, lam, w_fb)
    return loss, grad
