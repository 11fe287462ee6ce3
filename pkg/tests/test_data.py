import numpy as np
import pytest
from PIL import Image

from fuselens.data import (
    ImageFormatError,
    ImagePair,
    SyntheticSpec,
    load_image,
    load_pairs,
    read_manifest,
    save_image,
    save_pairs,
    synth_pair,
    synth_pairs,
    write_manifest,
)


def test_load_endpoint_values(tmp_path):
    hi = tmp_path / "hi.pgm"
    lo = tmp_path / "lo.pgm"
    Image.fromarray(np.full((4, 4), 255, dtype=np.uint8), "L").save(hi)
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), "L").save(lo)
    assert np.all(load_image(hi) == 1.0)
    assert np.all(load_image(lo) == 0.0)


def test_save_load_roundtrip_is_exact_for_quantized(tmp_path):
    rng = np.random.default_rng(0)
    img = np.round(rng.uniform(0, 1, (9, 7)) * 255) / 255.0
    for ext in ("pgm", "png"):
        p = tmp_path / f"img.{ext}"
        save_image(p, img)
        assert np.array_equal(load_image(p), img), ext


def test_pgm_p5_on_disk(tmp_path):
    p = tmp_path / "raw.pgm"
    save_image(p, np.full((2, 3), 0.5))
    raw = p.read_bytes()
    assert raw.startswith(b"P5")


def test_load_rejects_bad_files(tmp_path):
    rgb = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8), "RGB").save(rgb)
    with pytest.raises(ImageFormatError):
        load_image(rgb)

    deep = tmp_path / "deep.pgm"
    deep.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
    with pytest.raises(ImageFormatError):
        load_image(deep)

    junk = tmp_path / "junk.pgm"
    junk.write_bytes(b"this is not an image")
    with pytest.raises(ImageFormatError):
        load_image(junk)

    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "absent.png")


def test_save_image_validation(tmp_path):
    with pytest.raises(ValueError):
        save_image(tmp_path / "a.pgm", np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        save_image(tmp_path / "a.pgm", np.zeros((4, 4, 3)))
    with pytest.raises(ValueError):
        save_image(tmp_path / "a.tiff", np.zeros((4, 4)))


def test_manifest_roundtrip(tmp_path):
    rows = [("p0", "p0_x1.pgm", "p0_x2.pgm"), ("p1", "a/p1_x1.png", "a/p1_x2.png")]
    man = tmp_path / "manifest.txt"
    write_manifest(man, rows)
    assert read_manifest(man) == rows
    man.write_text("# comment\n\np0\tx1.pgm\tx2.pgm\n")
    assert read_manifest(man) == [("p0", "x1.pgm", "x2.pgm")]
    man.write_text("p0\tonly-two-fields\n")
    with pytest.raises(ValueError):
        read_manifest(man)


def test_save_and_load_pairs(tmp_path):
    spec = SyntheticSpec(resolution=32, rng_seed=3)
    pairs = synth_pairs(spec, 3)
    manifest = save_pairs(tmp_path / "ds", pairs, fmt="pgm")
    loaded = load_pairs(manifest)
    assert [p.id for p in loaded] == [p.id for p in pairs]
    for orig, back in zip(pairs, loaded):
        # quantization is the only loss
        assert np.allclose(orig.x1, back.x1, atol=0.5 / 255 + 1e-12)
        assert back.x1.shape == orig.x1.shape
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(ValueError):
        load_pairs(empty)


def test_image_pair_shape_invariant():
    with pytest.raises(ValueError):
        ImagePair(x1=np.zeros((4, 4)), x2=np.zeros((4, 5)), id="bad")


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(resolution=31)
    with pytest.raises(ValueError):
        SyntheticSpec(blob_count=0)
    with pytest.raises(ValueError):
        SyntheticSpec(core_darkness=0.6)


def test_synth_determinism_and_range():
    spec = SyntheticSpec(resolution=32, rng_seed=11)
    a = synth_pairs(spec, 4)
    b = synth_pairs(spec, 4)
    for pa, pb in zip(a, b):
        assert pa.id == pb.id
        assert np.array_equal(pa.x1, pb.x1)
        assert np.array_equal(pa.x2, pb.x2)
        for img in (pa.x1, pa.x2):
            assert img.shape == (32, 32)
            assert img.min() >= 0.0 and img.max() <= 1.0
    assert len({p.id for p in a}) == 4
    other = synth_pairs(SyntheticSpec(resolution=32, rng_seed=12), 1)
    assert not np.array_equal(other[0].x1, a[0].x1)


def test_synth_core_statistics():
    for seed in range(5):
        spec = SyntheticSpec(resolution=64, rng_seed=seed)
        for index in range(3):
            pair, core = synth_pair(spec, index)
            assert core.any() and not core.all()
            assert pair.x2[core].mean() < 0.2
            assert pair.x2[~core].mean() > 0.5
            # cores are strictly darker than the surround
            assert pair.x2[core].max() < pair.x2[~core].min()
