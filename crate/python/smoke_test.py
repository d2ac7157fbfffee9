#!/usr/bin/env python3
"""Smoke test for the darts_py extension module.

Builds nothing itself: run `cargo build -p darts-py` first, then
`python3 python/smoke_test.py`. The script locates the cdylib in target/,
stages it under the importable name, and exercises the bindings.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def find_cdylib():
    names = ["libdarts_py.so", "libdarts_py.dylib", "darts_py.dll"]
    for profile in ["release", "debug"]:
        for name in names:
            p = REPO / "target" / profile / name
            if p.exists():
                return p
    sys.exit("darts_py cdylib not found; run `cargo build -p darts-py` first")


def main():
    staged = Path(tempfile.mkdtemp(prefix="darts_py_"))
    shutil.copy(find_cdylib(), staged / "darts_py.so")
    sys.path.insert(0, str(staged))
    import darts_py

    # medium bookkeeping
    m = darts_py.Medium(sigma_s=2.0, sigma_a=0.2, g=0.3, c=1.0)
    assert abs(m.sigma_t - 2.2) < 1e-12
    assert abs(m.mfp() - 1.0 / 2.2) < 1e-12
    assert abs(m.transmittance(1.0) - math.exp(-2.2)) < 1e-12
    sigma_tr = 0.2 + 2.0 * (1.0 - 0.3)
    assert abs(m.diffusion - 1.0 / (3.0 * sigma_tr)) < 1e-12

    # isotropic phase function is 1/4pi everywhere
    assert abs(darts_py.hg_eval(0.3, 0.0) - 1.0 / (4.0 * math.pi)) < 1e-15

    # diffusion flux: zero before emission, positive and decaying after
    e = [0.0, 0.0, 0.0]
    assert darts_py.da_flux([1.0, 0.0, 0.0], e, 0.0, 0.5, m) == 0.0
    near = darts_py.da_flux([0.5, 0.0, 0.0], e, 1.0, 0.0, m)
    far = darts_py.da_flux([2.0, 0.0, 0.0], e, 1.0, 0.0, m)
    assert near > far > 0.0

    # direction table round trip and sampling
    table = darts_py.DirectionTable.build(m, seed=1, fast=True)
    cache = staged / "table.edat"
    table.save(cache)
    reloaded = darts_py.DirectionTable.load(cache, m)
    c_focal, s_sum = 1.0, 3.0
    cos_theta, phi, pdf = table.sample(c_focal, s_sum, 0.4, 0.7)
    assert -1.0 <= cos_theta <= 1.0 and -math.pi <= phi <= math.pi and pdf > 0.0
    assert abs(reloaded.pdf(c_focal, s_sum, cos_theta) - pdf) < 1e-9 * pdf

    # tiny render of the bundled scene, both baseline and full sampler
    scene = REPO / "scenes" / "cornell.toml"
    w, h, vanilla = darts_py.render_gated(
        scene, gate_start=1.6, gate_width=1.0, spp=16, seed=0, strategy="vanilla"
    )
    assert (w, h) == (32, 32) and len(vanilla) == w * h * 3
    assert all(v >= 0.0 and math.isfinite(v) for v in vanilla)
    assert sum(vanilla) > 0.0

    w, h, frames = darts_py.render_transient(
        scene, gate_start=1.6, gate_width=2.0, frames=4, spp=8, seed=0,
        strategy="vanilla",
    )
    assert len(frames) == 4 and all(len(f) == w * h * 3 for f in frames)
    assert sum(sum(f) for f in frames) > 0.0

    print("smoke test passed")


if __name__ == "__main__":
    main()
