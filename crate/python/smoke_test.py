"""Smoke test for the Python bindings.

Build first with `cargo build --release -p vehicle-amodal-py`, then run
`python3 python/smoke_test.py`. Set VEHICLE_AMODAL_PY_LIB to use a library
from somewhere other than target/release.
"""

import importlib.util
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

MICRO = """
seed = 11
[data]
train_samples = 4
val_samples = 2
test_samples = 4
proxy_samples = 4
[pool]
size = 8
[arch]
gen_width = 4
res_blocks = 1
disc_width = 4
disc_stages = 3
disc_max_width = 8
[seg.schedule]
steps = 3
eval_every = 3
batch_size = 2
[app.schedule]
steps = 3
eval_every = 3
batch_size = 2
"""


def load_module(tmp):
    lib = os.environ.get("VEHICLE_AMODAL_PY_LIB")
    lib = Path(lib) if lib else ROOT / "target" / "release" / "libvehicle_amodal_py.so"
    if not lib.exists():
        import vehicle_amodal_py  # installed wheel

        return vehicle_amodal_py
    # The import system wants the file named after the module.
    dest = Path(tmp) / "vehicle_amodal_py.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("vehicle_amodal_py", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    with tempfile.TemporaryDirectory() as tmp:
        va = load_module(tmp)

        samples = va.generate_dataset(4, 7)
        assert len(samples) == 4
        s = samples[0]
        h, w = s.height, s.width
        vis, full = s.visible_mask(), s.full_mask()
        assert len(s.image_occluded()) == h * w * 3 and len(vis) == h * w
        assert all(f >= v for v, f in zip(vis, full)), "visible mask outside full mask"
        print("dataset:", s)

        again = va.generate_dataset(4, 7)
        assert [x.image_occluded() for x in again] == [x.image_occluded() for x in samples]

        m = va.mask_metrics(h, w, full, full)
        assert m["iou"] == 1.0 and m["l1"] == 0.0
        m = va.mask_metrics(h, w, vis, full)
        print("visible vs full IoU: %.4f" % m["iou"])

        manifest = va.write_dataset(samples, Path(tmp) / "ds")
        back = va.read_dataset(manifest)
        assert [x.full_mask() for x in back] == [x.full_mask() for x in samples]

        cfg = va.Config.from_toml(MICRO)
        assert va.Config.from_toml(cfg.to_toml()).fingerprint() == cfg.fingerprint()
        train = cfg.load_split("train")
        seg = va.train_seg(cfg, train)
        full_ckpt = va.train_app(cfg, train, seg)
        assert set(full_ckpt.roles()) >= {"g1", "g2"}, full_ckpt.roles()
        path = Path(tmp) / "model.ckpt"
        full_ckpt.save(path)
        assert va.Checkpoint.load(path).to_bytes() == full_ckpt.to_bytes()
        print("checkpoint roles:", full_ckpt.roles())

        pipe = va.Pipeline(full_ckpt)
        passes = pipe.recover(h, w, s.image_occluded(), vis, 2)
        assert len(passes) == 2
        first = passes[0]
        assert all(c >= v for v, c in zip(vis, first["completed_mask"]))
        img = s.image_occluded()
        rec = first["recovered_image"]
        for i, r in enumerate(first["invisible_region"]):
            if r == 0.0:
                assert rec[3 * i : 3 * i + 3] == img[3 * i : 3 * i + 3]
        out, region = va.composite(h, w, img, first["generator_image"], first["completed_mask"], vis)
        assert out == rec and region == first["invisible_region"]

        test = cfg.load_split("test")
        copy = va.evaluate(test, "copy", iterations=1)[0]
        gt = va.evaluate(test, "ground_truth", iterations=1)[0]
        ours = va.evaluate(test, "pipeline", full_ckpt, 2)
        assert gt["iou"] == 1.0 and len(ours) == 2
        print("copy IoU %.4f, untrained pipeline IoU %.4f" % (copy["iou"], ours[-1]["iou"]))

        try:
            va.evaluate(test, "pipeline")
        except ValueError as e:
            print("expected error:", e)
        else:
            raise AssertionError("pipeline without checkpoint should fail")

        assert va.run_cli(["--help"]) == 0
    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
