use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_spreadspeed"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .env_remove("SPREADSPEED_OUT")
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SINGLE: &str = "mu = \"inf\"\n[scenario]\ntype = \"single_shift\"\nc1 = 2.5\nminus = [0.25, 0.0]\nplus = [1.0, 0.0]\n";

/// Short homogeneous run on a small domain.
const QUICK_SIM: &str = "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n[sim]\nauto_domain = false\n[sim.grid]\nx_lo = -20.0\nx_hi = 150.0\nt_end = 50.0\n";

#[test]
fn speed_homogeneous_kpp() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["speed", "--out", "o"], "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("o/speed.json"));
    assert!((v["s_hat"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let stdout: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, v);
}

#[test]
fn speed_single_shift_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["speed", "--out", "o", "--set", "output.lambda_table=true"], SINGLE);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("o/speed.json"))["s_hat"].as_f64().unwrap();
    assert!((s - 1.035_059_335_8).abs() < 1e-8, "{s}");
    assert!(dir.path().join("o/lambda_0.csv").exists() && dir.path().join("o/lambda_1.csv").exists());

    let o = run(dir.path(), &["speed", "--out", "p", "--set", "scenario.c1=0.5"], SINGLE);
    assert_eq!(code(&o), 0);
    let s = json(&dir.path().join("p/speed.json"))["s_hat"].as_f64().unwrap();
    assert!((s - 2.0).abs() < 1e-9, "{s}");
}

#[test]
fn failed_hypothesis_exits_two_and_names_the_clause() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["speed", "--out", "o"], "[scenario]\ntype = \"homogeneous\"\nr1 = -1.0\n");
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("positivity"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn hj_writes_profile_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["hj", "--out", "o", "--set", "hj.h=0.02"], "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let meta = json(&dir.path().join("o/meta.json"));
    assert!((meta["s_hat"].as_f64().unwrap() - 2.0).abs() < 0.05);
    assert_eq!(meta["config"]["hj"]["h"].as_f64(), Some(0.02));
    let rho = std::fs::read_to_string(dir.path().join("o/rho.csv")).unwrap();
    assert!(rho.starts_with("s,rho,rho_over_s\n0,0,\n"));
}

#[test]
fn simulate_writes_front_with_speed_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--out", "o"], QUICK_SIM);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("o/front.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| r.unwrap())
        .filter(|r| !r[1].is_empty())
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    let (a, b) = (rows[rows.len() / 2], rows[rows.len() - 1]);
    let slope = (b.1 - a.1) / (b.0 - a.0);
    assert!((slope - 2.0).abs() < 0.1, "{slope}");
    let meta = json(&dir.path().join("o/meta.json"));
    assert!((meta["simulation"]["speed"]["c"].as_f64().unwrap() - 2.0).abs() < 0.1);
    assert!(dir.path().join("o/snapshots.csv").exists());
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n[output]\ndir = \"from_config\"\n";
    assert_eq!(code(&run(dir.path(), &["speed"], cfg)), 0);
    assert!(dir.path().join("from_config/speed.json").exists());
    assert_eq!(code(&run(dir.path(), &["speed", "--out", "deep/nested/flag"], cfg)), 0);
    assert!(dir.path().join("deep/nested/flag/speed.json").exists());

    let cfg_path = dir.path().join("plain.toml");
    std::fs::write(&cfg_path, "").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spreadspeed"))
        .args(["speed", "--config"])
        .arg(&cfg_path)
        .env("SPREADSPEED_OUT", "from_env")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("from_env/speed.json").exists());
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "a file").unwrap();
    let o = run(dir.path(), &["speed", "--out", "blocker/sub"], "");
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["speed"], "this is not toml")), 1);
    assert_eq!(code(&run(dir.path(), &["speed"], "[hj]\nstep = 0.1\n")), 1);
    let o = run(dir.path(), &["speed", "--set", "scenario.colour=3"], "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n");
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
    let kernel = "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\nr2 = 0.5\n[scenario.kernel]\ntype = \"uniform\"\ntau0 = -1.0\ny_min = 0.0\ny_max = 1.0\nn_tau = 3\nn_y = 3\n";
    assert_eq!(code(&run(dir.path(), &["speed"], kernel)), 1);
}

#[test]
fn validate_passes_and_detects_a_wrong_speed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{QUICK_SIM}[hj]\nh = 0.02\n[validate]\nsim_rel = 0.05\n");
    let o = run(dir.path(), &["validate", "--out", "ok"], &cfg);
    assert_eq!(code(&o), 0, "{}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    assert!(json(&dir.path().join("ok/meta.json"))["passed"].as_bool().unwrap());
    assert!(std::fs::read_to_string(dir.path().join("ok/validate.csv")).unwrap().starts_with("check,value,reference"));

    let o = run(dir.path(), &["validate", "--out", "bad", "--set", "validate.force_s_hat=2.5"], &cfg);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SINGLE}[sweep]\ncommand = \"speed\"\nkey = \"scenario.c1\"\nvalues = [0.5, 2.5, 3.0]\n");
    let o = run(dir.path(), &["sweep", "--out", "s", "--jobs", "2"], &cfg);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("s/sweep.csv")).unwrap();
    let speeds: Vec<f64> = rdr.deserialize::<std::collections::HashMap<String, String>>().map(|r| r.unwrap()["analytic"].parse().unwrap()).collect();
    assert_eq!(speeds.len(), 3);
    assert!((speeds[0] - 2.0).abs() < 1e-9 && (speeds[1] - 1.035_059_335_8).abs() < 1e-8);
    assert!(dir.path().join("s/002/speed.json").exists());
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[scenario]\ntype = \"homogeneous\"\nr1 = 1.0\n[hj]\nh = 0.04\n";
    assert_eq!(code(&run(dir.path(), &["hj", "--out", "a"], cfg)), 0);
    assert_eq!(code(&run(dir.path(), &["hj", "--out", "b", "--jobs", "1"], cfg)), 0);
    for f in ["rho.csv", "meta.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}
