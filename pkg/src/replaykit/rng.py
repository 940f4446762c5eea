"""Deterministic seed derivation.

All randomness in the toolkit flows from a single root seed. Component
streams are derived by hashing the root seed together with string labels
(component name, task id, ...) so that evaluation order and parallelism
can never reorder draws. Python's builtin ``hash`` is salted per process
and must not be used here.
"""

import hashlib

import numpy as np


def derive_seed(root: int, *labels: object) -> int:
    """Derive a child seed from a root seed and a sequence of labels."""
    material = ":".join([str(int(root))] + [str(x) for x in labels])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(root: int, *labels: object) -> np.random.Generator:
    """Generator seeded from ``derive_seed(root, *labels)``."""
    return np.random.default_rng(derive_seed(root, *labels))
