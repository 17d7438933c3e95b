use std::path::Path;
use std::process::{Command, Output};

fn fockchip(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockchip"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("FOCKCHIP_THREADS", "1")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/configs/paper-default.json"
    ))
    .unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut cfg);
    let path = dir.join("chip.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn rate_budget_writes_json_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = fockchip(&["rate-budget"], &out);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("four-fold"));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("budget.json")).unwrap()).unwrap();
    assert!((v["fourfold_counts"].as_f64().unwrap() - 61.92).abs() < 0.01);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{").unwrap();
    let out = dir.path().join("out");
    let res = fockchip(&["rate-budget", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn out_of_range_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| c["coupling_loss_db"] = (-1.0).into());
    let out = dir.path().join("out");
    let res = fockchip(&["purity", "--config", &cfg], &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        fockchip(&["hom-scan", "--delays", "0,1,2"], &out)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        fockchip(&["purity", "--g2", "2.5"], &out).status.code(),
        Some(2)
    );
    assert!(!out.exists());
}

#[test]
fn empty_scan_exits_3_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |c| {
        for s in c["sources"].as_array_mut().unwrap() {
            s["mean_pairs_override"] = 0.0.into();
        }
        for d in c["detectors"].as_object_mut().unwrap().values_mut() {
            d["dark_rate_hz"] = 0.0.into();
        }
    });
    let out = dir.path().join("out");
    let res = fockchip(&["hom-scan", "--config", &cfg, "--pulses", "1000000"], &out);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    assert_eq!(fockchip(&["rate-budget"], &file).status.code(), Some(4));
}
