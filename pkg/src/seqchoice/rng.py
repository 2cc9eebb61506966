"""Seed derivation.

All randomness in a run flows from one root seed.  A task identified by a
string gets ``root XOR first-8-bytes(sha256(task_id))`` so that results do
not depend on scheduling order or worker count.
"""
import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(root, task_id):
    digest = hashlib.sha256(str(task_id).encode("utf-8")).digest()
    return (int(root) & MASK64) ^ int.from_bytes(digest[:8], "big")


def task_rng(root, task_id):
    return np.random.default_rng(derive_seed(root, task_id))


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
