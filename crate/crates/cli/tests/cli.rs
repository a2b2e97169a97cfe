use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Small budgets so the full chain runs in seconds.
const FAST: &str = r#"
seed = 3

[morph]
intermediates = 2
resolution = 24

[optim.object]
iterations = 40

[optim.human]
iterations = 40

[beam]
width = 2
iterations = 2
initial_sample = 2

[discriminator]
epochs = 3
hidden = [16]
negatives_per_sequence = 4
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collab-retarget"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out").arg(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> serde_json::Value {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Fixture {
    /// Box, widened box, carry and handover scenes, pairs and a model.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("fast.toml");
        std::fs::write(&config, FAST).unwrap();
        let f = Fixture { dir, config };
        let d = f.path();
        let c = p(&f.config);
        ok(d, &["toy-scene", "--config", c, "--kind", "carry", "--frames", "20", "--cell", "0.05", "--name", "box"]);
        ok(d, &["toy-scene", "--config", c, "--kind", "handover", "--frames", "20", "--cell", "0.05", "--name", "handover"]);
        ok(d, &["toy-scene", "--config", c, "--half", "0.45,0.2,0.15", "--cell", "0.05", "--frames", "20", "--name", "wide"]);
        ok(
            d,
            &[
                "disc", "gen-pairs", "--config", c, "--mesh", p(&f.file("box.obj")), "--motion", p(&f.file("box.json")), "--motion",
                p(&f.file("handover.json")),
            ],
        );
        ok(d, &["disc", "train", "--config", c, "--pairs", p(&f.file("pairs.json"))]);
        f
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn pipeline_equals_stage_composition() {
    let f = Fixture::new();
    let c = p(&f.config);
    let (src, tgt, model) = (f.file("box.obj"), f.file("wide.obj"), f.file("model.rnk"));
    let motions = [f.file("box.json"), f.file("handover.json")];

    let whole = f.file("whole");
    let summary = ok(
        &whole,
        &[
            "pipeline", "--config", c, "--source-mesh", p(&src), "--target", p(&tgt), "--motion", p(&motions[0]),
            "--motion", p(&motions[1]), "--model", p(&model),
        ],
    );
    assert_eq!(summary["motions"], 2);

    let staged = f.file("staged");
    ok(&staged, &["contacts", "extract", "--mesh", p(&src), "--motion", p(&motions[0]), "--motion", p(&motions[1])]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(whole.join("wide/manifest.json")).unwrap()).unwrap();
    for (k, m) in motions.iter().enumerate() {
        let name = m.file_stem().unwrap().to_str().unwrap();
        ok(&staged, &["retarget", "object", "--config", c, "--motion", p(m), "--target", p(&tgt)]);
        ok(
            &staged,
            &[
                "select", "--config", c, "--source-mesh", p(&src), "--target-mesh", p(&tgt), "--motion", p(m), "--track",
                p(&staged.join(format!("{name}.track.json"))), "--pool", p(&staged.join("pool.json")), "--model", p(&model),
            ],
        );
        let a = std::fs::read(whole.join(format!("wide/{name}.json"))).unwrap();
        let b = std::fs::read(staged.join(format!("{name}.json"))).unwrap();
        assert!(a == b, "{name}: pipeline and staged outputs differ");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(staged.join(format!("{name}.select.json"))).unwrap()).unwrap();
        assert_eq!(report, manifest["sequences"][k]);
    }
}

#[test]
fn same_seed_gives_identical_manifests() {
    let f = Fixture::new();
    let c = p(&f.config);
    let args = |dir: &Path| {
        ok(
            dir,
            &[
                "pipeline", "--config", c, "--seed", "11", "--jobs", "2", "--source-mesh", p(&f.file("box.obj")), "--target",
                p(&f.file("wide.obj")), "--motion", p(&f.file("box.json")), "--model", p(&f.file("model.rnk")),
            ],
        )
    };
    let (a, b) = (f.file("a"), f.file("b"));
    args(&a);
    args(&b);
    assert_eq!(std::fs::read(a.join("wide/manifest.json")).unwrap(), std::fs::read(b.join("wide/manifest.json")).unwrap());
}

#[test]
fn metrics_on_identical_files_report_zero_error() {
    let f = Fixture::new();
    let m = f.file("box.json");
    let v = ok(f.path(), &["metrics", "--pred", p(&m), "--gt", p(&m), "--mesh", p(&f.file("box.obj"))]);
    let r = &v["report"];
    assert_eq!(r["J_e"], 0.0);
    assert_eq!(r["T_e"], 0.0);
    assert_eq!(r["R_e"], 0.0);
    assert_eq!(r["C_acc"], 100.0);
    let csv = std::fs::read_to_string(f.file("metrics.csv")).unwrap();
    assert!(csv.starts_with("J_e,T_e,R_e,C_acc,P_r\n0,0,0,100,"));
}

#[test]
fn malformed_config_exits_with_code_two_and_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[beam]\nwidth = \"four\"\n", "beam.width"),
        ("[weights.human]\nbogus = 1.0\n", "weights.human.bogus"),
        ("[morph\nresolution = 8\n", ""),
    ];
    for (text, field) in cases {
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, text).unwrap();
        let out = run(dir.path(), &["toy-scene", "--config", p(&cfg)]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], "config_error");
        assert_eq!(err["path"], field);
    }
}

#[test]
fn missing_input_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["sdf", "build", "--mesh", p(&dir.path().join("absent.obj"))]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io_error");
}

#[test]
fn toy_scene_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        ok(&out, &["toy-scene", "--seed", seed, "--frames", "15", "--name", "scene"]);
        std::fs::read(out.join("scene.json")).unwrap()
    };
    assert_eq!(gen("5", "a"), gen("5", "b"));
    assert_ne!(gen("5", "c"), gen("6", "d"));
}

#[test]
fn stage_commands_write_their_outputs() {
    let f = Fixture::new();
    let c = p(&f.config);
    let d = f.path();
    ok(d, &["sdf", "build", "--config", c, "--mesh", p(&f.file("box.obj"))]);
    assert!(f.file("box.sdf").exists());
    ok(d, &["contacts", "extract", "--mesh", p(&f.file("box.obj")), "--motion", p(&f.file("box.json"))]);
    ok(d, &["morph", "--config", c, "--source", p(&f.file("box.obj")), "--target", p(&f.file("wide.obj")), "--pool", p(&f.file("pool.json"))]);
    assert!(f.file("morph_3.obj").exists() && f.file("constraint_0.json").exists());
    ok(d, &["retarget", "object", "--config", c, "--motion", p(&f.file("box.json")), "--target", p(&f.file("wide.obj"))]);
    ok(
        d,
        &[
            "retarget", "human", "--config", c, "--motion", p(&f.file("box.json")), "--source-mesh", p(&f.file("box.obj")),
            "--track", p(&f.file("box.track.json")), "--constraint", p(&f.file("constraint_0.json")),
        ],
    );
    assert!(f.file("box.human.json").exists());
    let v = ok(d, &["disc", "score", "--model", p(&f.file("model.rnk")), "--motion", p(&f.file("box.human.json"))]);
    assert!(v["scores"][0]["score"].as_f64().unwrap().is_finite());
    let h = "[humanoid.optim]\niterations = 50\n";
    std::fs::write(f.file("h.toml"), h).unwrap();
    ok(d, &["humanoid", "--config", p(&f.file("h.toml")), "--motion", p(&f.file("box.json"))]);
    assert!(f.file("box.agent1.h4d.json").exists() && f.file("box.agent2.h4d.json").exists());
}
