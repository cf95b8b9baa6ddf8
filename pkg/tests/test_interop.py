"""Cross-component conformance: files emitted by the extractor tool must
parse in this engine, and its pooled embeddings must match pool_patches
applied to its raw patch dump at float32 exactness.

The committed fixtures under tests/data/ were produced by the extractor's
golden script; if node is available the test also regenerates them live and
checks the bytes haven't drifted.
"""

import hashlib
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from avcs import PatchGrid, pool_patches, read_stream

DATA = Path(__file__).parent / "data"
EXTRACTOR = Path(__file__).parent.parent / "extractor"


@pytest.fixture(scope="module")
def pooled():
    return read_stream(DATA / "golden_pooled.avcs")


@pytest.fixture(scope="module")
def patches():
    return read_stream(DATA / "golden_patches.avcs")


def meta(name):
    return json.loads((DATA / f"{name}.meta.json").read_text())


def test_golden_header_and_counts(pooled, patches):
    m = meta("golden_pooled.avcs")
    assert pooled.d_emb == m["d_emb"] == 32
    assert pooled.frame_count == m["records"] == 6
    assert pooled.label_arity == "single"
    raw_meta = meta("golden_patches.avcs")
    assert patches.frame_count == raw_meta["records"] == 6 * raw_meta["patches_per_frame"]


def test_golden_checksums_match_sidecar():
    for name in ("golden_pooled.avcs", "golden_patches.avcs"):
        digest = hashlib.sha256((DATA / name).read_bytes()).hexdigest()
        assert digest == meta(name)["sha256"]


def test_pooled_matches_pool_patches_exactly(pooled, patches):
    per_frame = meta("golden_patches.avcs")["patches_per_frame"]
    for f in range(pooled.frame_count):
        grid = PatchGrid(patches.values[f * per_frame : (f + 1) * per_frame], frame_index=f)
        ours = pool_patches(grid).values.astype(np.float32)
        theirs = pooled.values[f]
        assert ours.tobytes() == theirs.tobytes(), f"frame {f} pooled mismatch"


def test_live_regeneration_is_byte_stable(tmp_path):
    node = shutil.which("node")
    golden_js = EXTRACTOR / "dist" / "golden.js"
    if node is None or not golden_js.exists():
        pytest.skip("extractor runtime not available")
    subprocess.run([node, str(golden_js), str(tmp_path)], check=True, capture_output=True)
    for name in ("golden_pooled.avcs", "golden_patches.avcs"):
        assert (tmp_path / name).read_bytes() == (DATA / name).read_bytes()
