"""Deterministic seed derivation.

Child seeds are derived from a master seed and a sequence of context parts
(run index, purpose tags, sample counters) by hashing their string forms
with SHA-256 and taking the first 8 bytes. Runs derived this way are
independent yet individually reproducible, and aggregation does not depend
on execution order.
"""

import hashlib


def derive_seed(master, *parts):
    payload = ":".join(str(p) for p in (master, *parts))
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
