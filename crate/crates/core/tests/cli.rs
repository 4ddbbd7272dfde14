mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oxnoise::structure::{write_trajectory, TrajectoryFormat};

fn oxnoise(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oxnoise"))
        .args(args)
        .current_dir(cwd)
        .env_remove(oxnoise::cli::OUT_DIR_ENV)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let traj = common::amorphous_like();
    fs::write(
        dir.path().join("XDATCAR"),
        write_trajectory(&traj, TrajectoryFormat::Xdatcar),
    )
    .unwrap();
    fs::write(
        dir.path().join("traj.xyz"),
        write_trajectory(&traj, TrajectoryFormat::ExtxyzMulti),
    )
    .unwrap();
    fs::write(dir.path().join("single.csv"), common::single_vacancy_csv()).unwrap();
    fs::write(dir.path().join("counts.csv"), common::vacancy_count_csv()).unwrap();
    dir
}

#[test]
fn missing_input_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = oxnoise(&["pcf", "missing.xyz"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("file not found"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn unknown_flag_is_exit_2_with_help() {
    let dir = tempfile::tempdir().unwrap();
    let o = oxnoise(&["rabi", "--t2", "1", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
    assert!(stderr(&o).contains("--tmax-us"));
    assert_eq!(oxnoise(&["nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(oxnoise(&["rabi", "--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn decohere_reproduces_single_vacancy_table() {
    let dir = workspace();
    let o = oxnoise(&["decohere", "--input", "single.csv", "--tphi0", "1.0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let t: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for (g, want) in t.iter().zip([1.000, 0.949, 0.967, 0.993]) {
        assert!((g - want).abs() <= 0.001, "{t:?}");
    }
}

#[test]
fn decohere_overrides_and_warnings() {
    let dir = workspace();
    let mut args = vec!["decohere", "--input", "counts.csv", "--reference", "N0"];
    let flags: Vec<String> = common::LISTED_FLUCT.iter().map(|(k, v)| format!("{k}={v}")).collect();
    for f in &flags {
        args.push("--fluct-override");
        args.push(f);
    }
    let o = oxnoise(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: Vec<f64> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for (g, want) in t.iter().zip([1.000, 0.967, 0.999, 0.634, 0.053]) {
        assert!((g - want).abs() <= 0.001, "{t:?}");
    }
    assert!(stderr(&o).contains("warning: N9"));

    let o = oxnoise(&["decohere", "--input", "counts.csv"], dir.path());
    assert!(stderr(&o).contains("-0.759"), "{}", stderr(&o));
    let o = oxnoise(
        &["decohere", "--input", "counts.csv", "--fluct-override", "N9"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rabi_envelope_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = oxnoise(
        &["rabi", "--t2", "0.053", "--tmax-us", "200", "-o", "env.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("env.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_us,upper,lower");
    assert_eq!(lines.len(), 2001);
    assert!(lines[1].starts_with("0.000000,1.0"));
    let o = oxnoise(&["rabi", "--model", "a=1", "--model", "b=0.5", "--curve"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_oxnoise"))
        .args(["rabi", "--t2", "1", "--points", "3"])
        .env(oxnoise::cli::OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("rabi.csv").exists());
}

#[test]
fn pcf_coord_and_formats_agree() {
    let dir = workspace();
    for input in ["XDATCAR", "traj.xyz"] {
        let o = oxnoise(
            &["pcf", input, "--pair", "Al-O", "-o", "g.csv", "--summary", "peak.json"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let peak: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("peak.json")).unwrap()).unwrap();
        let r = peak["peak"]["r_peak"].as_f64().unwrap();
        assert!((r - 1.8).abs() < 0.1, "{r}");
    }
    let o = oxnoise(&["coord", "XDATCAR", "--pair", "Al-O", "--cutoff", "2.6"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("# mean="));
    let o = oxnoise(&["pcf", "XDATCAR", "--pair", "Al-Zr"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn vacancy_writes_structure_and_sidecar() {
    let dir = workspace();
    let o = oxnoise(
        &["vacancy", "XDATCAR", "--count", "3", "--seed", "5", "-o", "v.vasp"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frame = oxnoise::structure::parse_poscar(&fs::read_to_string(dir.path().join("v.vasp")).unwrap()).unwrap();
    assert_eq!(frame.count_of("O"), 81 - 3);
    let side: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v.vasp.json")).unwrap()).unwrap();
    assert_eq!(side["removed_indices"].as_array().unwrap().len(), 3);
    assert_eq!(side["relaxed"], false);
    assert_eq!(side["master_seed"], 5);
    let o = oxnoise(&["vacancy", "XDATCAR", "--seed", "5", "-o", "v.vasp"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noise_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("j.json"),
        r#"{"I0_uA": 1.0, "A_um2": 10000, "Lambda": 100, "Omega_GHz": 1, "T_K": 0.1}"#,
    )
    .unwrap();
    let o = oxnoise(&["noise", "--junction", "j.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["t_dephasing_ms"].as_f64().unwrap() - 0.357).abs() < 0.001);
    assert!((v["S_I0_sqrt_1Hz_pA_per_rtHz"].as_f64().unwrap() - 1.44).abs() < 1e-12);
}

#[test]
fn slice_from_chgcar() {
    use oxnoise::grid::*;
    let dir = tempfile::tempdir().unwrap();
    let lat = oxnoise::structure::Lattice::cubic(4.0).unwrap();
    let g = VolumetricGrid::from_fn(lat, [4, 4, 4], "rho", |f| f[2]).unwrap();
    fs::write(dir.path().join("CHGCAR"), write_grid(&g, GridFormat::ChgcarLike)).unwrap();
    let o = oxnoise(&["slice", "CHGCAR", "--axis", "a3", "--offset", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let body: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(String::from)
        .collect();
    assert_eq!(body.len(), 4);
    assert!(body
        .iter()
        .all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.5)));
}

#[test]
fn rts_single_and_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = oxnoise(
        &[
            "rts",
            "--seed",
            "1",
            "--samples",
            "200000",
            "-o",
            "s.csv",
            "--fit-out",
            "fit.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let tau = fit["fit"]["tau_fit"].as_f64().unwrap();
    assert!((tau - 0.5).abs() < 0.1, "{tau}");
    assert!(fs::read_to_string(dir.path().join("s.csv"))
        .unwrap()
        .starts_with("f_hz,psd\n"));
    let o = oxnoise(
        &["rts", "--seed", "1", "--amplitude", "0", "--samples", "100000"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

fn report_config(dir: &Path, seed: Option<u64>) -> PathBuf {
    let mut cfg = serde_json::json!({
        "trajectory": "XDATCAR",
        "pcf": {"pair": "Al-O", "dr": 0.05},
        "coordination": {"pair": "Al-O", "cutoff": 2.6},
        "vacancy": {"count": 2},
        "decoherence": {"input": "single.csv", "tphi0_ms": 1.0},
        "rabi": {"n_points": 201}
    });
    if let Some(s) = seed {
        cfg["seed"] = s.into();
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    oxnoise::cli::REPORT_OUTPUTS
        .iter()
        .map(|n| (n.to_string(), fs::read(dir.join(n)).unwrap()))
        .collect()
}

#[test]
fn report_bundle_and_rerun_from_manifest() {
    let dir = workspace();
    report_config(dir.path(), Some(2024));
    let o = oxnoise(&["report", "--config", "config.json", "--out-dir", "run1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run1 = dir.path().join("run1");
    let csvs = fs::read_dir(&run1)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 2024);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);

    let o = oxnoise(
        &["report", "--manifest", "run1/manifest.json", "--out-dir", "run2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_outputs(&run1), read_outputs(&dir.path().join("run2")));

    let o = oxnoise(&["report", "--config", "config.json", "--out-dir", "run3"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_outputs(&run1), read_outputs(&dir.path().join("run3")));
}

#[test]
fn report_failures() {
    let dir = workspace();
    report_config(dir.path(), None);
    let o = oxnoise(&["report", "--config", "config.json", "--out-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
    assert!(!dir.path().join("out").exists());

    report_config(dir.path(), Some(1));
    fs::write(dir.path().join("single.csv"), "label,sigma_over_tau,N\nx,-1,1\n").unwrap();
    let o = oxnoise(&["report", "--config", "config.json", "--out-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("report stage decohere"), "{}", stderr(&o));
}

#[test]
fn manifest_detects_changed_input() {
    let dir = workspace();
    report_config(dir.path(), Some(3));
    assert_eq!(
        oxnoise(&["report", "--config", "config.json", "--out-dir", "a"], dir.path())
            .status
            .code(),
        Some(0)
    );
    fs::write(
        dir.path().join("single.csv"),
        common::single_vacancy_csv().replace("3.51e19", "3.50e19"),
    )
    .unwrap();
    let o = oxnoise(
        &["report", "--manifest", "a/manifest.json", "--out-dir", "b"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("differs"));
}
