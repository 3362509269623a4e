"""Shared helpers: seeded random lattice/label instances."""

import numpy as np

from twrnnt.lattice import PosteriorLattice, normalize_logits


def random_lattice(rng, T, U, V, scale=1.5):
    """Softmax-normalized lattice from Gaussian logits."""
    raw = rng.normal(scale=scale, size=(T, U + 1, V + 1))
    return normalize_logits(raw)


def random_instance(rng, max_t=6, max_u=4, max_v=5):
    """One seeded (lattice, labels) pair with dimensions drawn uniformly."""
    T = int(rng.integers(1, max_t + 1))
    U = int(rng.integers(0, max_u + 1))
    V = int(rng.integers(1, max_v + 1))
    labels = rng.integers(0, V, size=U).astype(np.int64)
    return random_lattice(rng, T, U, V), labels


def random_instance_nonempty(rng, max_t=6, max_u=4, max_v=5):
    """Like random_instance but with at least one label token."""
    T = int(rng.integers(1, max_t + 1))
    U = int(rng.integers(1, max_u + 1))
    V = int(rng.integers(1, max_v + 1))
    labels = rng.integers(0, V, size=U).astype(np.int64)
    return random_lattice(rng, T, U, V), labels


def capped_lattice(rng, T, U_max, V, scale=1.5):
    """Lattice whose last label level emits only blanks, so no output can be
    longer than U_max and total output probability is exactly 1."""
    raw = rng.normal(scale=scale, size=(T, U_max + 1, V + 1))
    lat = normalize_logits(raw)
    logp = lat.logp.copy()
    logp[:, U_max, :V] = -np.inf
    logp[:, U_max, V] = 0.0
    return PosteriorLattice(logp)
