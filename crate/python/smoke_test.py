#!/usr/bin/env python3
"""Smoke test for the gfno_py extension module.

Build the module first:

    cargo build --release -p gfno-py

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile


def load_module():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libgfno_py.so", "gfno_py.so", "libgfno_py.dylib")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit("build the extension first: cargo build --release -p gfno-py")
    stage = tempfile.mkdtemp(prefix="gfno-py-")
    target = os.path.join(stage, "gfno_py.so")
    shutil.copyfile(built, target)
    sys.path.insert(0, stage)
    import gfno_py

    return gfno_py


def main():
    g = load_module()
    failures = []

    def check(name, ok, detail=""):
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
        if not ok:
            failures.append(name)

    # Tensor construction, save/load round trip.
    t = g.Tensor([2, 3], [1, 2, 3, 4, 5, 6])
    check("tensor shape", t.shape == [2, 3])
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.gft")
        t.save(path)
        back = g.Tensor.load(path)
        check("gft round trip", back.data() == t.data() and back.shape == t.shape)

    # GeLU endpoints.
    y = g.gelu(g.Tensor([2], [0.0, 10.0]))
    check("gelu(0) = 0", y.data()[0] == 0.0)
    check("gelu(10) ~ 10", abs(y.data()[1] - 10.0) < 1e-6)

    # DFT inverse pair.
    n = 8
    field = g.grf_sample(n, seed=3)
    spec = g.dft2(field)
    back = g.idft2(spec)
    diff = max(
        abs(a - b) for a, b in zip(back.data()[0::2], field.data())
    )
    check("idft2(dft2(x)) = x", diff < 1e-10, f"(max diff {diff:.2e})")

    # Forcing values at the origin.
    check("sym forcing at origin", abs(g.forcing_field("sym", 16).data()[0] - 0.2) < 1e-12)
    check(
        "nonsym forcing at origin",
        abs(g.forcing_field("nonsym", 16).data()[0] - 0.1) < 1e-12,
    )

    # A tiny Navier-Stokes solve: finite frames of the right shape.
    frames = g.ns_solve(n=16, nu=1e-4, dt=1e-2, t=2, forcing="sym", seed=7)
    check("ns_solve shape", frames.shape == [3, 16, 16])
    check("ns_solve finite", all(math.isfinite(v) for v in frames.data()))

    # Model forward, rollout, and exact rotation equivariance.
    model = g.Model(variant="gfno", group="p4", d_z=3, k=3, layers=2,
                    pos_enc="symmetric", in_steps=2, seed=11)
    window = g.Tensor([2, 16, 16], frames.data()[: 2 * 16 * 16])
    out = model.forward(window)
    check("forward shape", out.shape == [1, 16, 16])
    roll = model.rollout(window, steps=3)
    check("rollout shape", roll.shape == [3, 16, 16])

    rotated_in = g.act_plane(window, rot=1)
    lhs = model.forward(rotated_in)
    rhs = g.act_plane(out, rot=1)
    diff = max(abs(a - b) for a, b in zip(lhs.data(), rhs.data()))
    check("rotation equivariance", diff < 1e-8, f"(max diff {diff:.2e})")

    # Checkpoint round trip through Python.
    with tempfile.TemporaryDirectory() as d:
        model.save(d)
        again = g.Model.load(d)
        same = max(
            abs(a - b) for a, b in zip(again.forward(window).data(), out.data())
        )
        check("checkpoint round trip", same == 0.0)

    # Reference parameter count of the published fno configuration.
    count = g.param_count("fno", "none", 20, 12, 4, "cartesian", 10)
    check("fno param count ~ 0.93M", abs(count - 930_000) / 930_000 < 0.05, f"({count})")

    if failures:
        sys.exit(f"{len(failures)} smoke checks failed: {', '.join(failures)}")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
