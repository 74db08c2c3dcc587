"""Regenerate the seeded disc-metric fixtures shipped in ``curvlab/data/fixtures``."""

from __future__ import annotations

import json

from curvlab import conditions as cd
from curvlab import disc_deformations as dd

SEED = 20261016


def families():
    """(condition, q) pairs: the n = 7, q = 4 suite, then every deformable builtin with c <= q <= 6, n = q + 3."""
    yield cd.builtin("psc", 7), 4
    yield cd.builtin("p_curv", 7, {"p": 1}), 4
    yield cd.builtin("k_pos_ric", 7, {"k": 3}), 4
    for q in range(3, 7):
        n = q + 3
        yield cd.builtin("psc", n), q
        for p in range(0, q - 2):
            yield cd.builtin("p_curv", n, {"p": p}), q
        for k in range(2, n + 1):
            C = cd.builtin("k_pos_ric", n, {"k": k})
            if C.claimed_codim <= q:
                yield C, q


def main() -> None:
    seen = set()
    for C, q in families():
        path = dd.fixture_path(C, q)
        if path in seen:
            continue
        seen.add(path)
        doc = dd.fixture_family(C, q, seed=SEED)
        path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
        print(f"{path.name}: {doc['accepted']} accepted")


if __name__ == "__main__":
    main()
