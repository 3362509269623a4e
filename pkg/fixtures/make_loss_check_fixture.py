"""Regenerate the bundled loss-check fixture.

The fixture is a seeded T=3, U=2, |V|=3 lattice plus its label sequence,
small enough for exhaustive oracle comparison.  Run from the repo root:

    python3 fixtures/make_loss_check_fixture.py
"""

import json
from pathlib import Path

import numpy as np

from twrnnt.lattice import normalize_logits
from twrnnt.oracle import exact_sequence_logp

rng = np.random.default_rng(2024)
lattice = normalize_logits(rng.normal(scale=1.5, size=(3, 3, 4)))
tokens = [2, 0]

obj = {
    "t": lattice.T,
    "u": lattice.U,
    "v": lattice.vocab.size,
    "logp": [float(x) for x in lattice.logp.ravel()],
    "tokens": tokens,
}
out = Path(__file__).parent / "loss_check_t3u2.json"
out.write_text(json.dumps(obj, indent=1))
print(f"wrote {out}")
print(f"oracle loss: {-exact_sequence_logp(lattice, tokens):.12f}")
