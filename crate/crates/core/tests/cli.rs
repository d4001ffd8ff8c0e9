use std::path::Path;

use tempfile::TempDir;
use vehicle_amodal::cli::run;
use vehicle_amodal::image::{ImageTensor, MaskTensor};
use vehicle_amodal::synth_data::{generate_dataset, read_dataset, SynthConfig, MANIFEST_NAME};

const MICRO: &str = r#"
seed = 9
[data]
train_samples = 4
val_samples = 2
test_samples = 4
proxy_samples = 8
[pool]
size = 8
[arch]
gen_width = 4
res_blocks = 1
disc_width = 4
disc_stages = 3
disc_max_width = 8
[seg.schedule]
steps = 2
eval_every = 2
batch_size = 2
[app.schedule]
steps = 2
eval_every = 2
batch_size = 2
[joint]
steps = 1
[segmenter]
steps = 2
[segmenter.arch]
gen_width = 4
res_blocks = 1
[proxy]
classifier_steps = 2
[proxy.segmenter]
steps = 2
"#;

struct Env {
    tmp: TempDir,
    config: String,
}

impl Env {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let config = tmp.path().join("micro.toml");
        std::fs::write(&config, MICRO).unwrap();
        Self { config: config.to_str().unwrap().into(), tmp }
    }

    fn path(&self, name: &str) -> String {
        self.tmp.path().join(name).to_str().unwrap().into()
    }

    fn run(&self, args: &[&str]) -> i32 {
        let mut argv = vec!["amodal", "--config", &self.config];
        argv.extend_from_slice(args);
        run(argv)
    }
}

#[test]
fn synth_writes_a_readable_deterministic_split() {
    let env = Env::new();
    let (a, b) = (env.path("a"), env.path("b"));
    assert_eq!(env.run(&["synth", "--out", &a, "--split", "test"]), 0);
    assert_eq!(env.run(&["synth", "--out", &b, "--split", "test"]), 0);
    let read = |d: &str| read_dataset(&Path::new(d).join(MANIFEST_NAME)).unwrap();
    let (sa, sb) = (read(&a), read(&b));
    assert_eq!(sa.len(), 4);
    assert!(sa.iter().zip(&sb).all(|(x, y)| x.bit_eq(y)));
    assert_eq!(std::fs::read(Path::new(&a).join(MANIFEST_NAME)).unwrap(), std::fs::read(Path::new(&b).join(MANIFEST_NAME)).unwrap());
}

#[test]
fn full_workflow_and_inference_outputs() {
    let env = Env::new();
    let rd = env.path("run");
    assert_ne!(env.run(&["eval", "--run", &rd]), 0, "eval before training must fail");
    for cmd in ["train-seg", "train-app", "eval"] {
        assert_eq!(env.run(&[cmd, "--run", &rd]), 0, "{cmd}");
    }
    let reports = std::fs::read_dir(Path::new(&rd).join("reports")).unwrap().count();
    assert!(reports >= 2);

    let sample = &generate_dataset(&SynthConfig::default(), 5, 1).unwrap()[0];
    let (img, mask) = (env.path("in.png"), env.path("vis.png"));
    sample.image_occluded.write_png(Path::new(&img)).unwrap();
    sample.visible_mask.write_png(Path::new(&mask)).unwrap();
    let out = env.path("out");
    assert_eq!(env.run(&["infer", "--run", &rd, "--image", &img, "--mask", &mask, "--iterations", "2", "--out", &out]), 0);
    let completed = MaskTensor::read_png(&Path::new(&out).join("iter2_mask.png")).unwrap();
    assert!(sample.visible_mask.is_subset_of(&completed));
    let recovered = ImageTensor::read_png(&Path::new(&out).join("iter1_recovered.png")).unwrap();
    assert_eq!((recovered.height(), recovered.width()), (64, 64));

    // Without a mask the trained segmenter from train-seg is used.
    assert_eq!(env.run(&["infer", "--run", &rd, "--image", &img, "--out", &env.path("out2")]), 0);
}

#[test]
fn a_changed_config_cannot_reuse_a_run_directory() {
    let env = Env::new();
    let rd = env.path("run");
    assert_eq!(env.run(&["train-seg", "--run", &rd]), 0);
    let other = env.path("other.toml");
    std::fs::write(&other, MICRO.replace("seed = 9", "seed = 10")).unwrap();
    assert_ne!(run(["amodal", "--config", &other, "train-seg", "--run", &rd]), 0);
}

#[test]
fn bad_invocations_fail_cleanly() {
    let env = Env::new();
    let bad = env.path("bad.toml");
    std::fs::write(&bad, "seed = 1\nunknown_key = 2\n").unwrap();
    assert_ne!(run(["amodal", "--config", &bad, "synth", "--out", &env.path("x")]), 0);
    assert_ne!(run(["amodal", "--config", &env.path("missing.toml"), "synth", "--out", &env.path("x")]), 0);
    assert_ne!(env.run(&["infer", "--run", &env.path("run"), "--image", &env.path("nope.png"), "--checkpoint", &env.path("nope.ckpt")]), 0);
    assert_ne!(run(["amodal", "frobnicate"]), 0);
}

#[test]
fn ablation_variants_write_reports() {
    let env = Env::new();
    let rd = env.path("run");
    assert_eq!(env.run(&["ablate", "--run", &rd, "one-path"]), 0);
    let found = walk(Path::new(&rd)).into_iter().filter(|p| p.contains("one-path") && p.ends_with(".json")).count();
    assert!(found > 0);
}

fn walk(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.display().to_string());
        }
    }
    out
}
