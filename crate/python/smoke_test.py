"""Smoke test for the pydefuzz extension.

Build and install it first:

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run `python python/smoke_test.py` from the repository root.
"""

import json
import sys

import pydefuzz


def main() -> int:
    names = pydefuzz.fixtures()
    assert len(names) == 8, names
    print(f"pydefuzz {pydefuzz.__version__}: {len(names)} fixtures")

    text, targets, seed = pydefuzz.fixture("swftopython_like")
    outcome, steps = pydefuzz.execute(text, seed)
    assert outcome == "Halt", outcome
    print(f"seed input halts after {steps} steps")

    fn_dist = pydefuzz.function_distances(text, targets)
    assert fn_dist["main"] and fn_dist["main"] > 0
    blocks = pydefuzz.block_distances(text, targets)
    assert any(d == 0.0 for d in blocks.values())
    print(f"main is {fn_dist['main']} call hops from the target; {len(blocks)} blocks")

    assert pydefuzz.power_multiplier(0.5, 0.0) == 1.0
    assert pydefuzz.relative_speeds([150.0, 50.0]) == [1.5, 0.5]

    report = [{
        "function_name": "getString",
        "probability": 0.97,
        "top_tokens": [
            {"token": w, "file": "decompile.c", "line": 381, "alpha": a}
            for w, a in [("malloc", 0.4), ("Constant16", 0.25), ("strlenext", 0.2), ("pool", 0.1)]
        ],
    }]
    spec = json.loads(pydefuzz.extract_attention_targets(json.dumps(report)))
    assert [(e["file"], e["line"]) for e in spec] == [("decompile.c", 381)], spec

    stats = pydefuzz.fuzz(text, targets, seed, max_execs=1_000_000, deterministic=False, exit_on_fault=True)
    print(f"directed campaign: {stats['execs_done']} execs, faults at {stats['fault_sites']}")
    truth = json.loads(targets)[0]
    assert f"{truth['file']}:{truth['line']}" in stats["fault_sites"], stats

    try:
        pydefuzz.execute("garbage", b"")
    except ValueError as e:
        print(f"bad program rejected: {e}")
    else:
        raise AssertionError("expected ValueError")
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
