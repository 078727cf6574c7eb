use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn thermoreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoreg"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn small_overrides<'a>(out: &'a str) -> Vec<&'a str> {
    vec![
        "--out",
        out,
        "--override",
        "mesh.simulation_n=21",
        "--override",
        "mesh.design_n=11",
        "--override",
        "controller.order=4",
        "--override",
        "simulation.t_end=3",
    ]
}

#[test]
fn malformed_config_exits_with_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[physics]\nre = -3\n").unwrap();
    let out = dir.path().join("out");
    let o = thermoreg(&["mesh", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = thermoreg(&["flow", "--override", "physics.mach=2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = thermoreg(&["synth", "--controller", "h-infinity"]);
    assert_eq!(o.status.code(), Some(2));
    let o = thermoreg(&["mesh", "--config", dir.path().join("missing.ini").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_prerequisites_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = thermoreg(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("report.csv").exists());
}

#[test]
fn bundled_presets_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let cfg = thermoreg::config::RunConfig::from_file(&path, &[]).unwrap();
        assert_eq!((cfg.simulation_n, cfg.design_n), (81, 41), "{}", path.display());
        n += 1;
    }
    assert_eq!(n, 6);
}

#[test]
fn end_to_end_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    for stage in ["mesh", "flow", "synth"] {
        let mut args = vec![stage];
        args.extend(small_overrides(out));
        let o = thermoreg(&args);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for kind in ["dual-reduced", "low-gain"] {
        let mut args = vec!["simulate", "--controller", kind];
        args.extend(small_overrides(out));
        let o = thermoreg(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut args = vec!["report"];
    args.extend(small_overrides(out));
    let o = thermoreg(&args);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("dual-reduced") && table.contains("low-gain"), "{table}");
    assert!(!table.contains("dual-full"));
    assert_eq!(table.matches("(slowest decay)").count(), 1);
}
