"""Regenerate the frozen golden files under tests/golden/.

Run manually from the repo root after an intentional change:

    python3 tests/regen_golden.py

Snapshots of composed values are produced by the independent oracles in
this directory (never by the package), so the goldens stay an external
reference.
"""

import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

from grn.cli import DEFAULT_PALETTE, export_mask  # noqa: E402
from grn.rectnet import assemble_input, init_rectnet, pseudo_probs  # noqa: E402
from grn.segnet import init_segnet, seg_forward  # noqa: E402

from test_rectnet import rectify_forward_ref  # noqa: E402


def main():
    golden = HERE / "golden"
    golden.mkdir(exist_ok=True)

    # S-Net regression snapshot (frozen product output; guards drift)
    p = init_segnet(c=4, width=6, seed=0)
    image = np.random.default_rng(7).uniform(0, 1, size=(3, 16, 16))
    np.save(golden / "segnet_tiny_logits.npy", seg_forward(image, p).data)

    # R-Net snapshot computed by the composed oracle
    rp = init_rectnet(4, 16, 16, d=6, n_high=2, cprime=8, width=8, seed=0)
    rng = np.random.default_rng(0)
    rimage = rng.uniform(0, 1, size=(3, 16, 16))
    rlabels = rng.integers(0, 4, size=(16, 16))
    inp = assemble_input(rimage, pseudo_probs(rlabels, 4))
    np.save(golden / "rectnet_tiny_logits.npy", rectify_forward_ref(inp.data, rp))

    # palette export fixture
    fixture = np.random.default_rng(3).integers(0, 8, size=(12, 10)).astype(np.uint8)
    np.save(golden / "palette_fixture_labels.npy", fixture)
    export_mask(fixture, DEFAULT_PALETTE, golden / "palette_fixture.ppm")

    print(f"regenerated goldens in {golden}")


if __name__ == "__main__":
    main()
