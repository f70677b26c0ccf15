use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rvetherm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rvetherm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = "[spec]\nn_sp = 4\nn_cyl = 4\nf_sp = 0.05\nf_cyl = 0.05\na = 4\n\
                     resolution = 16\nruns = 3\ncontrast = 16\nf_def = 0.02\nn_def = 5\n";

#[test]
fn batch_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name).display().to_string();
        let o = rvetherm(&["batch", "--config", &config, "--seed", "5", "--out", &out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(dir.path().join(name).join("batch.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("run,")).count(), 3);
    assert!(text.lines().last().unwrap().starts_with("summary,"));
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("gen").display().to_string();
    let o = rvetherm(&["generate", "--config", &config, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = dir.path().join("gen/grid.rveg");
    assert_eq!(fs::metadata(&grid).unwrap().len(), 16 + 16u64.pow(3));
    assert!(fs::read_to_string(dir.path().join("gen/geometry.txt"))
        .unwrap()
        .starts_with("RVE v1 4 4"));

    let solved = dir.path().join("solved").display().to_string();
    let o = rvetherm(&[
        "solve",
        grid.to_str().unwrap(),
        "--contrast",
        "1",
        "--out",
        &solved,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("trace/3 1.00000000"), "{stdout}");
    assert!(dir.path().join("solved/tensor.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "[spec]\nn_sp = 3\nf_sp = 0.1\nshape = \"cube\"\n",
    );
    assert_eq!(
        rvetherm(&["batch", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(rvetherm(&["sweep"]).status.code(), Some(2));
    assert_eq!(rvetherm(&["frobnicate"]).status.code(), Some(2));

    let missing = dir.path().join("missing.rveg").display().to_string();
    assert_eq!(rvetherm(&["solve", &missing]).status.code(), Some(1));

    let dense = write_config(
        dir.path(),
        "[spec]\nn_sp = 20\nf_sp = 0.6\nresolution = 16\nruns = 1\n",
    );
    let out = dir.path().join("dense").display().to_string();
    let o = rvetherm(&["generate", "--config", &dense, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("placement exhausted"));
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let config = write_config(
        dir.path(),
        &format!(
            "output_dir = {:?}\nescalate = false\n[spec]\nn_sp = 3\nf_sp = 0.05\nresolution = 16\nruns = 2\n\
             [[axes]]\nname = \"contrast\"\noctaves = [-1, 1]\n",
            out.display().to_string()
        ),
    );
    let o = rvetherm(&["sweep", "--config", &config]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(out.join("plot_contrast.csv").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn validate_passes() {
    let o = rvetherm(&["validate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
