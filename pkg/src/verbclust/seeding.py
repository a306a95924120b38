"""Deterministic seed derivation.

Every randomized stage draws its seed from one master seed and a list of
name parts (stage name, verb name, ...) so that reruns are reproducible
and independent stages never share an RNG stream. Python's builtin
``hash`` is salted per process, so derivation goes through SHA-256.
"""

import hashlib


def derive_seed(*parts: object) -> int:
    """Map (master_seed, name, ...) to a stable nonnegative 63-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
