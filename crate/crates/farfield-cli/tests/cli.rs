//! End-to-end checks of the command line: exit codes, schema headers, and
//! manifest-driven reproducibility.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_farfield"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("farfield-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn coefficients_benchmark_and_exit_codes() {
    let d = tmpdir("coeff");
    let out = bin()
        .args(["coefficients", "--model", "mkdv", "--p", "2", "--q", "1", "--cos-k", "0", "--m2", "4"])
        .args(["--out", d.join("a").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&read(&d.join("a/coefficients.json"))).unwrap();
    assert_eq!(report["m1"], serde_json::json!(-5.0));
    assert!((report["C3"]["re"].as_f64().unwrap() - 0.48).abs() < 1e-12);
    assert!((report["continuum_coeff"]["re"].as_f64().unwrap() + 6.0).abs() < 1e-10);

    // inadmissible carrier -> exit 3
    let out = bin()
        .args(["coefficients", "--model", "mkdv", "--p", "2", "--q", "1", "--cos-k", "1/2", "--m2", "4"])
        .args(["--out", d.join("b").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // missing parameters -> exit 2
    let out = bin()
        .args(["coefficients", "--model", "mkdv", "--cos-k", "0"])
        .args(["--out", d.join("c").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn dispersion_schema_and_reality_flags() {
    let d = tmpdir("disp");
    // nikdv with alpha = 2 violates reality where |alpha sin^3 k| > 1:
    // those rows are flagged, not fatal
    let out = bin()
        .args(["dispersion", "--model", "nikdv", "--alpha", "2", "--beta", "0"])
        .args(["--out", d.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&d.join("dispersion.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "# farfield-dispersion-csv v1");
    assert_eq!(lines.next().unwrap(), "k,omega,group_velocity,abs_omega,reality_ok");
    assert!(csv.lines().any(|l| l.ends_with(",0")), "expected flagged rows");
    assert!(csv.lines().any(|l| l.ends_with(",1")), "expected valid rows");
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn admissible_table_contains_benchmark_row() {
    let d = tmpdir("adm");
    let out = bin()
        .args(["admissible", "--model", "mkdv", "--p", "2", "--q", "1"])
        .args(["--out", d.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&d.join("admissible.csv"));
    assert!(csv.lines().any(|l| l.starts_with("0,-5,4,")), "missing (0, -5, 4): {csv}");
    let regions = read(&d.join("regions.csv"));
    assert!(regions.starts_with("# farfield-regions-csv v1"));
    // empty bounds are not an error: vkvm alpha = 1/2 is degenerate -> empty table
    let out = bin()
        .args(["admissible", "--model", "vkvm", "--alpha", "1/2"])
        .args(["--out", d.join("deg").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = read(&d.join("deg/admissible.csv"));
    assert_eq!(csv.lines().count(), 2, "header lines only: {csv}");
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn manifest_reruns_bit_identical() {
    let d = tmpdir("manifest");
    let first = d.join("first");
    let out = bin()
        .args(["validate", "--model", "mkdv", "--p", "2", "--q", "1", "--cos-k", "0", "--m2", "4"])
        .args(["--config", write_small_validate_config(&d).to_str().unwrap()])
        .args(["--out", first.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // rerun from the emitted manifest into a second directory
    let manifest = first.join("manifest.toml");
    let second = d.join("second");
    let out = bin()
        .args(["validate", "--config", manifest.to_str().unwrap()])
        .args(["--out", second.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read(&first.join("validation.csv"));
    let b = read(&second.join("validation.csv"));
    assert_eq!(a, b, "manifest rerun must be bit-identical");
    let _ = std::fs::remove_dir_all(&d);
}

fn write_small_validate_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(
        &p,
        r#"
[model]
kind = "mkdv"
p = "2"
q = "1"

[carrier]
cos_k = "0"
sin_sign = 1

[scales]
m2 = 4

[validate]
n_list = [4, 6]
slow_time = 2
amplitude = 0.2
width_per_n = 1.5
second_harmonic_rows = 6
"#,
    )
    .unwrap();
    p
}

#[test]
fn simulate_writes_envelopes_and_grid() {
    let d = tmpdir("sim");
    let cfgp = d.join("sim.toml");
    std::fs::write(
        &cfgp,
        r#"
[model]
kind = "mkdv"
p = "2"
q = "1"

[carrier]
cos_k = "0"

[scales]
m2 = 4

[packet]
profile = "sech"
amplitude = 0.2
width = 8.0
n = 6
harmonics = 2

[simulate]
slow_time = 1
write_grid = true
"#,
    )
    .unwrap();
    let out = bin()
        .args(["simulate", "--config", cfgp.to_str().unwrap()])
        .args(["--out", d.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&d.join("envelope_t0.csv")).starts_with("# farfield-envelope-csv v1"));
    assert!(read(&d.join("envelope_t1.csv")).lines().count() > 10);
    assert!(d.join("grid.bin").exists());
    assert!(read(&d.join("grid.csv")).starts_with("# farfield-grid-csv v1"));
    let _ = std::fs::remove_dir_all(&d);
}

#[test]
fn derive_verifies_closed_forms() {
    let d = tmpdir("derive");
    let out = bin()
        .args(["derive", "--model", "hietarinta", "--e1", "2", "--e2", "1", "--o1", "3"])
        .args(["--cos-k", "0", "--m2", "7"])
        .args(["--out", d.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(&d.join("derive.json"))).unwrap();
    assert_eq!(report["verify"]["max_rel_dev"], serde_json::json!(0.0));
    assert!(report["determining_equations"]["equations"].as_array().unwrap().len() >= 5);
    let _ = std::fs::remove_dir_all(&d);
}
