use std::path::Path;
use std::process::{Command, Output};

fn sepnet(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sepnet"));
    cmd.args(args).env_remove("SEPNET_OUTPUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("SEPNET_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const BSC: &str = "seed = 1\n[scenario]\nkind = \"capacity\"\nchannel = { kind = \"bsc\", p = 0.1 }\n";

#[test]
fn capacity_of_bsc() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(tmp.path(), "m.toml", BSC);
    let out = tmp.path().join("out");
    let o = sepnet(&["capacity", "--manifest", &m, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("capacity 0.531004"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    // 1 - h2(0.1)
    let want = 1.0 + 0.1 * 0.1f64.log2() + 0.9 * 0.9f64.log2();
    assert!((summary["capacity"].as_f64().unwrap() - want).abs() < 1e-9);
    let table = std::fs::read_to_string(out.join("capacity.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("input,probability"));
}

#[test]
fn rate_distortion_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(
        tmp.path(),
        "m.toml",
        "seed = 1\n[scenario]\nkind = \"rd\"\nsource = [0.5, 0.5]\nmeasure = { kind = \"hamming\", size = 2 }\ndistortions = [0.0, 0.1, 0.5]\n",
    );
    let out = tmp.path().join("out");
    let o = sepnet(&["rd", "--manifest", &m, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    let rates: Vec<f64> = summary["rates"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let h = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
    for (got, want) in rates.iter().zip([1.0, 1.0 - h, 0.0]) {
        assert!((got - want).abs() < 1e-6, "{rates:?}");
    }
}

#[test]
fn stack_check_reports_exact_match() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(
        tmp.path(),
        "m.toml",
        "seed = 6\ntrials = 3\n[scenario]\nkind = \"stack_check\"\nrho = 0.1\ncrossovers = [0.1, 0.05]\nlen = 12\nlayers = 8\n",
    );
    let out = tmp.path().join("out");
    let o = sepnet(&["stack-check", "--manifest", &m, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("EXACT-MATCH"));
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write(tmp.path(), "m.toml", BSC);
    let env_dir = tmp.path().join("from_env");
    assert_eq!(sepnet(&["capacity", "--manifest", &m], Some(&env_dir)).status.code(), Some(0));
    assert!(env_dir.join("summary.json").exists());
    let flag_dir = tmp.path().join("from_flag");
    let o = sepnet(&["capacity", "--manifest", &m, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("summary.json").exists());
    let manifest_dir = tmp.path().join("from_manifest");
    let with_output = format!("output = {:?}\n{BSC}", manifest_dir.to_str().unwrap());
    let m2 = write(tmp.path(), "m2.toml", &with_output);
    assert_eq!(sepnet(&["capacity", "--manifest", &m2], Some(&env_dir)).status.code(), Some(0));
    assert!(manifest_dir.join("summary.json").exists());
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(sepnet(&["teleport"], None).status.code(), Some(2));
    assert_eq!(sepnet(&["capacity"], None).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(
        sepnet(&["capacity", "--manifest", missing.to_str().unwrap(), "--out", out], None).status.code(),
        Some(2)
    );
    let unknown = write(tmp.path(), "u.toml", &format!("{BSC}colour = \"red\"\n"));
    let o = sepnet(&["capacity", "--manifest", &unknown, "--out", out], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    let m = write(tmp.path(), "m.toml", BSC);
    assert_eq!(sepnet(&["rd", "--manifest", &m, "--out", out], None).status.code(), Some(2));
    let bad_channel = write(tmp.path(), "b.toml", &BSC.replace("0.1", "1.5"));
    assert_eq!(sepnet(&["capacity", "--manifest", &bad_channel, "--out", out], None).status.code(), Some(2));
    let no_trials = write(
        tmp.path(),
        "t.toml",
        "seed = 6\n[scenario]\nkind = \"stack_check\"\nrho = 0.1\ncrossovers = [0.1, 0.05]\nlen = 12\nlayers = 2\n",
    );
    assert_eq!(sepnet(&["stack-check", "--manifest", &no_trials, "--out", out], None).status.code(), Some(2));
    // a patch whose base is too noisy
    let noisy = write(
        tmp.path(),
        "p.toml",
        "seed = 1\ntrials = 5\n[scenario]\nkind = \"patch\"\nsessions = 4\npilot_sessions = 50\nmargin = 3.0\ninner_bits = 2\ndelta = 0.05\n[scenario.base]\nkind = \"uncoded_link\"\ncrossover = 0.4\nlen = 12\n",
    );
    assert_eq!(sepnet(&["patch", "--manifest", &noisy, "--out", out], None).status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = sepnet(&["--help"], None);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["capacity", "rd", "emulate", "separate", "patch", "awgn-sweep", "stack-check"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn convergence_failures_map_to_three() {
    let e = sepnet::Error::Convergence {
        iterations: 1,
        best: 0.0,
        gap: 1.0,
    };
    assert_eq!(sepnet::experiments::exit_code(&e), 3);
}

#[test]
fn shipped_manifests_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut seen = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            sepnet::experiments::Manifest::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}
