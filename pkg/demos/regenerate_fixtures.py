#!/usr/bin/env python3
"""Regenerate the shipped instance fixtures.

Writes the binary-sequence spaces at depths 6/8/10/12 (with the dense
subset Y and the block-parity field), the ordinal ladders k = 1..3, the
truncated convergent sequence, the union-law counterexample, and one
deliberately broken matrix for the validation error path.
"""

import json
from pathlib import Path

from oscext import (
    adversarial_union_fixture,
    block_parity_field,
    cantor_instance,
    indicator_field,
    ordinal_instance,
    rank_parity_field,
    sequence_space,
    space_to_document,
)
from oscext.instances import scaled_position_field

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def dump(name, doc):
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path} ({path.stat().st_size} bytes)")


def main():
    OUT.mkdir(exist_ok=True)
    for depth in (6, 8, 10, 12):
        space = cantor_instance(depth)
        space.fields["f"] = block_parity_field(space)
        dump(f"cantor_depth_{depth}", space_to_document(space))

    for k in (1, 2, 3):
        space = ordinal_instance(k, 10 if k < 3 else 5)
        space.subsets["Y"] = space.full_mask()
        space.fields["f"] = rank_parity_field(space)
        space.fields["pos"] = scaled_position_field(space)
        dump(f"ordinal_k{k}", space_to_document(space))

    space = sequence_space(10)
    space.subsets["Y"] = space.full_mask()
    space.fields["f"] = indicator_field(space, [space.meta["limit"]])
    dump("sequence_space", space_to_document(space))

    space, f, P, Q, eps, delta = adversarial_union_fixture()
    doc = space_to_document(space)
    dump("adversarial_union", doc)

    broken = {
        "name": "broken_triangle",
        "resolution": 0.5,
        "points": [{"id": 0}, {"id": 1}, {"id": 2}],
        "metric": {"type": "matrix", "data": [[0, 1, 3], [1, 0, 1], [3, 1, 0]]},
    }
    dump("broken_triangle", broken)


if __name__ == "__main__":
    main()
