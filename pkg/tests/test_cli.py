import hashlib
import json
import os
import shutil

import numpy as np
from PIL import Image

from app.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from app.models.distortion import DistortionKind, EntryStatus, Manifest
from app.services import runner
from app.utils.file_handling import LABELS_FILE, REPORT_FILE


def _corpus_flags(corpus, scene_index=True):
    flags = ["--images", corpus["images"], "--annotations", corpus["annotations"], "--depth", corpus["depth"]]
    if scene_index:
        flags += ["--scene-index", corpus["scene_index"]]
    return flags


def _plan(corpus, tmp_path, name="manifest.json", seed=7, scene_index=True):
    path = str(tmp_path / name)
    assert main(["plan", *_corpus_flags(corpus, scene_index), "--seed", str(seed), "--out", path]) == EXIT_OK
    return path


def _apply(corpus, manifest, out_dir, *extra):
    return main(["apply", *_corpus_flags(corpus), "--manifest", manifest, "--out", str(out_dir), *extra])


def _hashes(out_dir):
    return {
        name: hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
        for name in sorted(os.listdir(out_dir))
        if name.endswith(".png")
    }


def _report(out_dir):
    return json.loads((out_dir / REPORT_FILE).read_text())


def _edit_manifest(path, edit):
    manifest = Manifest.model_validate_json(open(path, "rb").read())
    edit(manifest)
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json())


def test_plan_writes_one_entry_per_image(corpus, tmp_path, capsys):
    path = _plan(corpus, tmp_path)
    manifest = Manifest.model_validate_json(open(path, "rb").read())
    assert len(manifest.entries) == corpus["count"]
    assert manifest.global_seed == 7
    out = capsys.readouterr().out
    assert "local_motion_blur" in out and "Total" in out


def test_plan_is_byte_identical(corpus, tmp_path):
    a = _plan(corpus, tmp_path, "a.json")
    b = _plan(corpus, tmp_path, "b.json")
    assert open(a, "rb").read() == open(b, "rb").read()


def test_plan_without_scene_index_warns(corpus, tmp_path, caplog):
    path = _plan(corpus, tmp_path, scene_index=False)
    assert "outdoor" in caplog.text
    manifest = Manifest.model_validate_json(open(path, "rb").read())
    assert manifest.summary.scenes["indoor"] == 0


def test_plan_reports_broken_annotations(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"images": [')
    code = main(["plan", "--images", corpus["images"], "--annotations", str(bad), "--out", str(tmp_path / "m.json")])
    assert code == EXIT_FAILURE
    err = capsys.readouterr().err
    assert "malformed JSON" in err
    assert f"{bad}: malformed JSON" in err


def test_apply_is_independent_of_worker_count(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    assert _apply(corpus, manifest, serial, "--jobs", "1") == EXIT_OK
    assert _apply(corpus, manifest, parallel, "--jobs", "8") == EXIT_OK
    assert len(_hashes(serial)) == corpus["count"]
    assert _hashes(serial) == _hashes(parallel)

    report = _report(serial)
    assert report["total"] == corpus["count"]
    assert report["succeeded"] == corpus["count"] and report["failed"] == 0
    assert [e["image_id"] for e in report["entries"]] == list(range(1, corpus["count"] + 1))
    assert (serial / LABELS_FILE).read_text().startswith("file_name,image_id,kind,level\n")
    assert (serial / "instances.json").exists()


def test_apply_rerun_with_overwrite(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    out = tmp_path / "out"
    assert _apply(corpus, manifest, out) == EXIT_OK
    first = _hashes(out)
    assert _apply(corpus, manifest, out, "--overwrite", "--jobs", "4") == EXIT_OK
    assert _hashes(out) == first


def test_apply_keeps_existing_outputs(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    out = tmp_path / "out"
    assert _apply(corpus, manifest, out) == EXIT_OK
    assert _apply(corpus, manifest, out) == EXIT_OK
    entries = _report(out)["entries"]
    assert all(e["status"] == EntryStatus.COMPLETED.value for e in entries)
    assert all("kept" in e["error_message"] for e in entries)


def test_fog_without_depth_fails_alone(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    # image 5 has no depth map in the fixture corpus
    def to_fog(m):
        entry = next(e for e in m.entries if e.image_id == 5)
        entry.kind = DistortionKind.FOG
        entry.level = None
        entry.params = {}

    _edit_manifest(manifest, to_fog)
    out = tmp_path / "out"
    assert _apply(corpus, manifest, out) == EXIT_OK
    report = _report(out)
    failed = [e for e in report["entries"] if e["status"] == EntryStatus.FAILED.value]
    assert [e["image_id"] for e in failed] == [5]
    assert "depth" in failed[0]["error_message"]
    assert report["succeeded"] + report["failed"] == report["total"]


def test_apply_fails_when_every_entry_fails(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    out = tmp_path / "out"
    code = main(["apply", "--images", str(tmp_path / "nowhere"), "--manifest", manifest, "--out", str(out)])
    assert code == EXIT_FAILURE


def test_apply_rejects_output_inside_inputs(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    assert main(["apply", "--images", corpus["images"], "--manifest", manifest, "--out", corpus["images"]]) == EXIT_USAGE


def test_validate_clean_plan(corpus, tmp_path, capsys):
    manifest = _plan(corpus, tmp_path)
    capsys.readouterr()
    assert main(["validate", *_corpus_flags(corpus), "--manifest", manifest]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["ok"] is True


def test_validate_flags_rain_indoors(corpus, tmp_path, capsys):
    manifest = _plan(corpus, tmp_path)
    # image 3 is indoor in the fixture corpus
    def to_rain(m):
        entry = next(e for e in m.entries if e.image_id == 3)
        entry.kind = DistortionKind.RAIN
        entry.level = None
        entry.params = {"alpha": 0.8, "angle": 90.0, "density": 1000}

    _edit_manifest(manifest, to_rain)
    capsys.readouterr()
    assert main(["validate", *_corpus_flags(corpus), "--manifest", manifest]) == EXIT_FAILURE
    report = json.loads(capsys.readouterr().out)
    assert {"code": "inapplicable", "image_id": 3} in [{"code": v["code"], "image_id": v["image_id"]} for v in report["violations"]]


def test_validate_empty_manifest(corpus, tmp_path, capsys):
    manifest = _plan(corpus, tmp_path)
    _edit_manifest(manifest, lambda m: m.entries.clear())
    capsys.readouterr()
    assert main(["validate", *_corpus_flags(corpus), "--manifest", manifest]) == EXIT_FAILURE
    assert "empty" in capsys.readouterr().out


def test_validate_unreadable_manifest(corpus, tmp_path):
    assert main(["validate", *_corpus_flags(corpus), "--manifest", str(tmp_path / "missing.json")]) == EXIT_FAILURE


def test_preview_global_kind_needs_only_the_image(corpus, tmp_path):
    image = os.path.join(corpus["images"], "000000000001.png")
    out = tmp_path / "noise.png"
    assert main(["preview", "--image", image, "--kind", "gaussian_noise", "--level", "3", "--out", str(out)]) == EXIT_OK
    assert Image.open(out).size == (2 * 64, 48)


def test_preview_local_defocus_without_depth(corpus, tmp_path, capsys):
    image = os.path.join(corpus["images"], "000000000001.png")
    code = main([
        "preview", "--image", image, "--annotations", corpus["annotations"],
        "--kind", "local_defocus", "--out", str(tmp_path / "p.png"),
    ])
    assert code == EXIT_USAGE
    assert "depth" in capsys.readouterr().err


def test_preview_local_kind_has_four_panels(corpus, tmp_path):
    image = os.path.join(corpus["images"], "000000000001.png")
    depth = os.path.join(corpus["depth"], "000000000001.png")
    for kind in ("local_motion_blur", "local_defocus", "local_backlight"):
        out = tmp_path / f"{kind}.png"
        code = main([
            "preview", "--image", image, "--depth", depth, "--annotations", corpus["annotations"],
            "--kind", kind, "--out", str(out), "--seed", "3",
        ])
        assert code == EXIT_OK
        panels = np.asarray(Image.open(out))
        assert panels.shape == (48, 4 * 64, 3)
        assert np.array_equal(panels[:, :64], np.asarray(Image.open(image).convert("RGB")))


def test_preview_rejects_non_object_params(corpus, tmp_path):
    image = os.path.join(corpus["images"], "000000000001.png")
    code = main(["preview", "--image", image, "--kind", "contrast_change", "--params", "[1]", "--out", str(tmp_path / "p.png")])
    assert code == EXIT_USAGE


def test_errors_name_the_offending_file(corpus, tmp_path, capsys):
    scenes = tmp_path / "scenes.csv"
    scenes.write_text("image_id,locale\n1,attic\n")
    code = main(["plan", *_corpus_flags(corpus, scene_index=False), "--scene-index", str(scenes), "--out", str(tmp_path / "m.json")])
    assert code == EXIT_FAILURE
    err = capsys.readouterr().err
    assert any(line.startswith(f"{scenes}: ") and "attic" in line for line in err.splitlines())

    manifest = tmp_path / "broken.json"
    manifest.write_text('{"entries": 3}')
    assert main(["validate", *_corpus_flags(corpus), "--manifest", str(manifest)]) == EXIT_FAILURE
    assert any(line.startswith(f"{manifest}: ") for line in capsys.readouterr().err.splitlines())


def test_apply_rechecks_the_scene_index(corpus, tmp_path):
    manifest = _plan(corpus, tmp_path)
    # image 3 is indoor and has depth, so only its locale rules rain out
    def to_rain(m):
        entry = next(e for e in m.entries if e.image_id == 3)
        entry.kind = DistortionKind.RAIN
        entry.level = None
        entry.params = {"alpha": 0.8, "angle": 90.0, "density": 1000}

    _edit_manifest(manifest, to_rain)
    out = tmp_path / "out"
    assert _apply(corpus, manifest, out) == EXIT_OK
    failed = [e for e in _report(out)["entries"] if e["status"] == EntryStatus.FAILED.value]
    assert [e["image_id"] for e in failed] == [3]
    assert "does not apply" in failed[0]["error_message"]
    assert not (out / "000000000003.png").exists()


def test_output_name_collisions_are_caught(corpus, tmp_path, capsys):
    manifest = _plan(corpus, tmp_path)
    # a.jpg next to a.png: both would render to a.png
    shutil.copyfile(os.path.join(corpus["images"], "000000000001.png"), os.path.join(corpus["images"], "000000000001.jpg"))

    def rename(m):
        entry = next(e for e in m.entries if e.image_id == 2)
        entry.file_name = "000000000001.jpg"

    _edit_manifest(manifest, rename)
    capsys.readouterr()
    assert main(["validate", *_corpus_flags(corpus), "--manifest", manifest]) == EXIT_FAILURE
    violations = json.loads(capsys.readouterr().out)["violations"]
    assert {"code": "collision", "image_id": 2} in [{"code": v["code"], "image_id": v["image_id"]} for v in violations]

    out = tmp_path / "out"
    assert _apply(corpus, manifest, out, "--jobs", "4") == EXIT_OK
    entries = {e["image_id"]: e for e in _report(out)["entries"]}
    assert entries[1]["status"] == EntryStatus.COMPLETED.value
    assert entries[2]["status"] == EntryStatus.FAILED.value
    assert "image 1" in entries[2]["error_message"]


def test_unexpected_entry_error_is_reported(corpus, tmp_path, monkeypatch):
    manifest = _plan(corpus, tmp_path)
    real = runner.apply_distortion

    def crash_on_four(kind, level, params, seed, inputs, **kwargs):
        if inputs.annotations is not None and inputs.annotations.image_id == 4:
            raise RuntimeError("worker blew up")
        return real(kind, level, params, seed, inputs, **kwargs)

    monkeypatch.setattr(runner, "apply_distortion", crash_on_four)
    out = tmp_path / "out"
    assert _apply(corpus, manifest, out, "--jobs", "4") == EXIT_OK
    report = _report(out)
    failed = [e for e in report["entries"] if e["status"] == EntryStatus.FAILED.value]
    assert [e["image_id"] for e in failed] == [4]
    assert "RuntimeError" in failed[0]["error_message"]
    assert report["succeeded"] == corpus["count"] - 1
