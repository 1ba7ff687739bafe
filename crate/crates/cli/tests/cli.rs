use std::path::Path;
use std::process::{Command, Output};

fn wconv(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wconv"))
        .arg("--out-dir")
        .arg(out)
        .args(["--threads", "1"])
        .args(args)
        .env_remove("WCONV_OUT_DIR")
        .output()
        .expect("run wconv")
}

const SMALL: &[&str] = &["--n-images", "4", "--rows", "16", "--cols", "16"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = wconv(dir.path(), &["optimize-density"]);
    assert_eq!(o.status.code(), Some(2));
    let o = wconv(dir.path(), &["train", "--epochs", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("epochs") && stderr.contains("Usage: wconv train"), "{stderr}");
    assert_eq!(wconv(dir.path(), &["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(wconv(dir.path(), &["sweep", "--axis", "depth", "--values", "1"]).status.code(), Some(2));
    assert_eq!(wconv(dir.path(), &["compare-densities", "--families", "triangular"]).status.code(), Some(2));
    assert_eq!(wconv(dir.path(), &["bench", "--repeats", "3"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = wconv(dir.path(), &with_small(&["train", "--lr", "1e300"]));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_prints_seven_pass_lines() {
    let dir = tempfile::tempdir().unwrap();
    let o = wconv(dir.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.ends_with("PASS")).count(), 7, "{stdout}");
    assert!(dir.path().join("verify.txt").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "[model]\nepochs = 2\nchannels = 1\n[dataset]\nn_images = 3\nrows = 8\ncols = 8\n").unwrap();
    let out = dir.path().join("out");
    let o = wconv(&out, &["--config", cfg.to_str().unwrap(), "train", "--epochs", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("train.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let h = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let get = |name: &str| row[h.iter().position(|c| c == name).unwrap()].to_string();
    assert_eq!(get("epochs"), "4");
    assert_eq!(get("channels"), "1");
    assert_eq!(std::fs::read_to_string(out.join("losses.csv")).unwrap().lines().count(), 5);

    std::fs::write(&cfg, "[model]\nepoch = 2\n").unwrap();
    assert_eq!(wconv(&out, &["--config", cfg.to_str().unwrap(), "train"]).status.code(), Some(2));
}

#[test]
fn train_reads_generated_data_and_named_density() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wconv(dir.path(), &with_small(&["gen-data"])).status.code(), Some(0));
    let d = dir.path().to_str().unwrap();
    let o = wconv(dir.path(), &["train", "--data", d, "--density", "gaussian", "--epochs", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("0,3,0.8007"), "{text}");
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wconv"))
        .args(["--threads", "1", "gen-data"])
        .args(SMALL)
        .env("WCONV_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("noisy.wct").exists());
}

#[test]
fn optimize_with_budget_one_reports_uniform_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let o = wconv(dir.path(), &with_small(&["optimize-density", "--kernel", "3", "--max-evals", "1", "--epochs", "2"]));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("optimize.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha_1,objective,baseline,improvement,evals,iterations"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[1], row[2]);
    assert_eq!(row[3], "0");
    assert!(std::fs::read_to_string(dir.path().join("optimize.txt")).unwrap().contains("by 0.00%"));
}
