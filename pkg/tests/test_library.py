"""Retrieval correctness against an independent brute-force implementation."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from pressfit.library import DemoLibrary, LibraryBuilder


def random_library(rng, n_traj=5, frames=40, dt=32, da=16) -> DemoLibrary:
    builder = LibraryBuilder()
    for tid in range(n_traj):
        builder.add_trajectory(
            tid,
            rng.normal(size=(frames, dt)),
            rng.normal(size=(frames, da)),
            rng.normal(size=(frames, 6)) * 0.02,
            rng.normal(size=(frames, 6)) * 0.001,
        )
    return builder.build()


def brute_force(lib, tactile, audio, pose, use_tactile, use_audio):
    d = lib.scales[2] * cdist(pose[None], lib.pose)[0]
    if use_tactile:
        d += lib.scales[0] * cdist(tactile[None], lib.tactile)[0]
    if use_audio:
        d += lib.scales[1] * cdist(audio[None], lib.audio)[0]
    ranked = sorted(range(len(lib)), key=lambda i: (d[i], lib.traj_ids[i], lib.serials[i]))
    return ranked[0]


@pytest.mark.parametrize("mask", [(True, True), (True, False), (False, True), (False, False)])
def test_query_matches_brute_force(mask):
    rng = np.random.default_rng(7)
    lib = random_library(rng)
    for _ in range(50):
        t = rng.normal(size=32)
        a = rng.normal(size=16)
        p = rng.normal(size=6) * 0.02
        got = lib.query(t, a, p, use_tactile=mask[0], use_audio=mask[1])
        assert got == brute_force(lib, t, a, p, *mask)


def test_scales_are_inverse_max_pairwise_distance():
    rng = np.random.default_rng(8)
    lib = random_library(rng, n_traj=2, frames=10)
    from scipy.spatial.distance import pdist

    assert lib.scales[0] == pytest.approx(1.0 / pdist(lib.tactile).max(), rel=1e-12)
    assert lib.scales[1] == pytest.approx(1.0 / pdist(lib.audio).max(), rel=1e-12)
    assert lib.scales[2] == pytest.approx(1.0 / pdist(lib.pose).max(), rel=1e-12)


def test_query_invariant_to_modality_rescaling():
    rng = np.random.default_rng(9)
    builder_a = LibraryBuilder()
    builder_b = LibraryBuilder()
    blocks = []
    for tid in range(3):
        t = rng.normal(size=(20, 8))
        a = rng.normal(size=(20, 4))
        p = rng.normal(size=(20, 6))
        acts = rng.normal(size=(20, 6))
        blocks.append((t, a, p, acts))
        builder_a.add_trajectory(tid, t, a, p, acts)
        builder_b.add_trajectory(tid, 50.0 * t, 0.01 * a, p, acts)
    lib_a = builder_a.build()
    lib_b = builder_b.build()
    for _ in range(25):
        t = rng.normal(size=8)
        a = rng.normal(size=4)
        p = rng.normal(size=6)
        assert lib_a.query(t, a, p) == lib_b.query(50.0 * t, 0.01 * a, p)


def test_exact_ties_resolve_to_earliest_demo_moment():
    builder = LibraryBuilder()
    row_t = np.ones((3, 4))
    row_a = np.ones((3, 4))
    row_p = np.zeros((3, 6))
    acts = np.zeros((3, 6))
    # identical entries in two trajectories; add one distinct row so
    # the scale computation sees nonzero spread
    builder.add_trajectory(4, row_t, row_a, row_p, acts)
    builder.add_trajectory(1, row_t, row_a, row_p, acts)
    builder.add_trajectory(9, 2.0 + row_t, 2.0 + row_a, 1.0 + row_p, acts)
    lib = builder.build()

    idx = lib.query(np.ones(4), np.ones(4), np.zeros(6))
    assert lib.entry(idx).traj_id == 1
    assert lib.entry(idx).serial == 0


def test_degenerate_modality_scale_warns(caplog):
    builder = LibraryBuilder()
    rng = np.random.default_rng(10)
    # constant audio embeddings across all entries
    builder.add_trajectory(
        0, rng.normal(size=(6, 4)), np.ones((6, 3)), rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    )
    with caplog.at_level("WARNING"):
        lib = builder.build()
    assert lib.scales[1] == 1.0
    assert any("audio" in r.message for r in caplog.records)


def test_entry_accessor_and_serials():
    rng = np.random.default_rng(11)
    lib = random_library(rng, n_traj=2, frames=5)
    e = lib.entry(7)
    assert e.traj_id == 1
    assert e.serial == 2
    assert np.array_equal(e.action, lib.actions[7])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    lib = random_library(rng, n_traj=3, frames=12)
    lib.save(tmp_path / "lib.pfb")
    loaded = DemoLibrary.load(tmp_path / "lib.pfb")
    assert np.array_equal(loaded.tactile, lib.tactile)
    assert np.array_equal(loaded.scales, lib.scales)
    q = (rng.normal(size=32), rng.normal(size=16), rng.normal(size=6))
    assert loaded.query(*q) == lib.query(*q)


def test_export_json(tmp_path):
    import json

    rng = np.random.default_rng(13)
    lib = random_library(rng, n_traj=2, frames=6)
    lib.export_json(tmp_path / "lib.json")
    doc = json.loads((tmp_path / "lib.json").read_text())
    assert doc["entries"] == 12
    assert doc["trajectories"]["1"]["serial_range"] == [0, 5]


def test_empty_builder_rejected():
    with pytest.raises(ValueError, match="no trajectories"):
        LibraryBuilder().build()
