use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use renewgan_core::data::read_archive;
use renewgan_core::{CopulaModel, TrainedModel};

fn renewgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewgan"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SYNTH: &str = r#"
[synth]
kind = "wind"
n_days = 60
temporal_persistence = 0.9
spatial_coupling = 0.7
[synth.parks_per_terrain]
flatland = 4
forest = 2
offshore = 2
"#;

const TINY_GAN: &str = r#"
[gan]
epochs = 5
batch_size = 16
channel_plan = [100, 8, 8, 4, 1]
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes the 8-farm desk set into `dir/synth`.
fn synth(dir: &Path) -> PathBuf {
    let cfg = write(dir, "synth.toml", SYNTH);
    let out = dir.join("synth");
    ok(renewgan(&["synth", "--config", s(&cfg), "--seed", "3", "--out", s(&out)]));
    out
}

#[test]
fn synth_prints_summary_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "synth.toml", SYNTH);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = ok(renewgan(&["synth", "--config", s(&cfg), "--seed", "3", "--out", s(&a)]));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("samples: 60"), "{text}");
    assert!(text.contains("offshore: 2 farms, mean"), "{text}");
    ok(renewgan(&["synth", "--config", s(&cfg), "--seed", "3", "--out", s(&b)]));
    for f in ["meta.csv", "samples.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn synth_reference_sized_wind_archive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "big.toml",
        r#"
        [synth]
        kind = "wind"
        n_days = 426
        temporal_persistence = 0.9
        spatial_coupling = 0.7
        [synth.parks_per_terrain]
        flatland = 32
        forest = 10
        offshore = 6
        "#,
    );
    let out = dir.path().join("big");
    ok(renewgan(&["synth", "--config", s(&cfg), "--out", s(&out)]));
    let ds = read_archive(&out).unwrap();
    assert_eq!((ds.len(), ds.parks(), ds.horizon()), (426, 48, 24));
}

#[test]
fn synth_without_parks_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "zero.toml",
        &SYNTH.replace("flatland = 4", "flatland = 0").replace("forest = 2", "forest = 0").replace("offshore = 2", "offshore = 0"),
    );
    let out = dir.path().join("never");
    let o = renewgan(&["synth", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("synth.parks_per_terrain"));
    assert!(!out.exists());
}

#[test]
fn train_generate_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let cfg = write(dir.path(), "train.toml", &format!("model = \"dcwgan\"\ndata = {{ archive = \"synth\" }}\n{TINY_GAN}"));
    let run = dir.path().join("run");
    let o = ok(renewgan(&["train", "--config", s(&cfg), "--seed", "1", "--out", s(&run)]));
    let log = String::from_utf8_lossy(&o.stderr);
    let max_abs: f64 = log
        .lines()
        .find_map(|l| l.split("critic max |parameter| = ").nth(1))
        .and_then(|rest| rest.split_whitespace().next())
        .expect("critic bound logged")
        .parse()
        .unwrap();
    assert!(max_abs <= 0.01);

    // Checkpoint reloads bit-exact: re-saving yields the same bytes.
    let ckpt = run.join("checkpoint.json");
    let model = TrainedModel::load(&ckpt).unwrap();
    let again = dir.path().join("again.json");
    model.save(&again).unwrap();
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());

    let history = fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);
    assert!(history.starts_with("epoch,d_loss,g_loss\n"));
    let train = read_archive(run.join("train")).unwrap();
    let test = read_archive(run.join("test")).unwrap();
    assert_eq!((train.len(), test.len()), (48, 12));
    assert_eq!(read_archive(&data).unwrap().len(), 60);

    let gen = dir.path().join("gen");
    ok(renewgan(&["generate", "--model", s(&ckpt), "--n", "30", "--seed", "4", "--out", s(&gen)]));
    let body = fs::read_to_string(gen.join("samples.csv")).unwrap();
    assert!(body.starts_with("day_index,farm_id,step,power_normalized,source\n"));
    assert_eq!(body.lines().count(), 1 + 30 * 8 * 24);
    assert!(body.lines().nth(1).unwrap().ends_with(",dcwgan"));
    let gen2 = dir.path().join("gen2");
    ok(renewgan(&["generate", "--model", s(&ckpt), "--n", "30", "--seed", "4", "--out", s(&gen2)]));
    assert_eq!(body, fs::read_to_string(gen2.join("samples.csv")).unwrap());

    let test_dir = run.join("test");
    let rep = dir.path().join("rep");
    ok(renewgan(&[
        "evaluate",
        "--real",
        s(&test_dir),
        "--generated",
        &format!("dcwgan={}", s(&gen)),
        "--out",
        s(&rep),
    ]));
    let kld = fs::read_to_string(rep.join("kld_global.csv")).unwrap();
    assert!(kld.starts_with("group,farms,kld_dcwgan,kld_uniform\n"), "{kld}");
    for f in ["report.json", "kld_terrain.csv", "stress_dcwgan.csv", "temporal_corr_real.csv", "pdf_forest.csv", "moments.csv"] {
        assert!(rep.join(f).exists(), "{f}");
    }
}

#[test]
fn copula_branch_shares_the_generate_interface() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = write(dir.path(), "train.toml", "model = \"copula\"\ndata = { archive = \"synth\" }\n");
    let run = dir.path().join("run");
    ok(renewgan(&["train", "--config", s(&cfg), "--out", s(&run)]));
    let m = CopulaModel::load(run.join("copula.json")).unwrap();
    assert_eq!(m.dims(), 8 * 24);
    assert!(!run.join("loss_history.csv").exists());

    let gen_cfg = write(dir.path(), "gen.toml", "model = \"run/copula.json\"\nn = 12\nout = \"gen\"\n");
    ok(renewgan(&["generate", "--config", s(&gen_cfg)]));
    let body = fs::read_to_string(dir.path().join("gen/samples.csv")).unwrap();
    assert!(body.starts_with("day_index,farm_id,step,power_normalized,source\n"));
    assert!(body.lines().nth(1).unwrap().ends_with(",copula"));
    assert_eq!(read_archive(dir.path().join("gen")).unwrap().len(), 12);
}

#[test]
fn evaluating_real_against_itself_gives_zero_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let eval = write(
        dir.path(),
        "eval.toml",
        r#"
        real = "synth"
        uniform_baseline = false
        out = "rep"
        [[generated]]
        name = "a"
        path = "synth"
        [[generated]]
        name = "b"
        path = "synth/samples.csv"
        [[generated]]
        name = "c"
        path = "synth"
        "#,
    );
    ok(renewgan(&["evaluate", "--config", s(&eval)]));
    let kld = fs::read_to_string(dir.path().join("rep/kld_global.csv")).unwrap();
    assert_eq!(kld, "group,farms,kld_a,kld_b,kld_c\nall,8,0,0,0\n");
    let terr = fs::read_to_string(dir.path().join("rep/kld_terrain.csv")).unwrap();
    assert_eq!(terr.lines().count(), 4);
    assert!(terr.lines().skip(1).all(|l| l.ends_with(",0,0,0")));
    assert!(data.exists());
}

#[test]
fn evaluate_rejects_empty_and_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let empty = write(dir.path(), "empty.csv", "");
    let out = dir.path().join("rep");
    let o = renewgan(&["evaluate", "--real", s(&data), "--generated", &format!("x={}", s(&empty)), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());

    let short = write(
        dir.path(),
        "short.csv",
        "day_index,farm_id,step,power_normalized\n0,flatland_00,0,0.5\n0,flatland_00,1,0.5\n",
    );
    let o = renewgan(&["evaluate", "--real", s(&data), "--generated", &format!("x={}", s(&short)), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("short.csv"));
    assert!(!out.exists());
}

#[test]
fn missing_inputs_and_corrupt_models_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nowhere");
    let o = renewgan(&["train", "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());

    let bad = write(dir.path(), "ckpt.json", "{\"format\":\"renewgan-checkpoint/1\",\"model\":{}}");
    let o = renewgan(&["generate", "--model", s(&bad), "--n", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 5);
    let garbage = write(dir.path(), "garbage.json", "\u{0}\u{1}not json");
    assert_eq!(code(&renewgan(&["generate", "--model", s(&garbage), "--n", "3", "--out", s(&out)])), 5);
    assert!(!out.exists());

    let o = renewgan(&["generate", "--model", s(&bad), "--n", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_training_config_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let cfg = write(
        dir.path(),
        "train.toml",
        "data = { archive = \"synth\" }\n[gan]\nepochs = 1\nlayers = [{ kernel = [1, 3], stride = [1, 1], padding = [0, 0] }]\nchannel_plan = [100, 1]\n",
    );
    let out = dir.path().join("run");
    let o = renewgan(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("1×1 → 1×3"));
    assert!(!out.exists());
}
