use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_transient-bench"));
    c.env_remove("TRANSIENT_BENCH_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn key(report: &str, k: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("no {k} in\n{report}"))
        .to_string()
}

const CASE_B_SHORT: &str = "case_kind = \"case_b\"\nphases = 1\n[sim]\nt_end_s = 0.03\n";

fn simulate(dir: &Path, name: &str, scenario: &str, extra: &[&str]) -> PathBuf {
    let path = write(dir, &format!("{name}.toml"), scenario);
    let out = dir.join(name);
    let mut args = vec![
        "simulate",
        path.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", text(&o.stderr));
    out
}

#[test]
fn simulate_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "b", "case_kind = \"case_b\"\n", &[]);
    let csv = std::fs::read_to_string(out.join("waveforms.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "time_s,hv_a,lv_a,line_end_a,hv_b,lv_b,line_end_b,hv_c,lv_c,line_end_c"
    );
    assert!(!csv.contains('\r'));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["probes"].as_array().unwrap().len(), 9);
    assert_eq!(
        manifest["samples"].as_u64().unwrap() as usize,
        csv.lines().count() - 1
    );
    assert!(manifest["wall_clock_s"].as_f64().unwrap() >= 0.0);
    assert!(out.join("resolved.toml").exists());
}

#[test]
fn reruns_produce_identical_bytes_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", CASE_B_SHORT, &[]);
    let b = simulate(dir.path(), "b", CASE_B_SHORT, &[]);
    let read = |p: &Path, f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read(&a, "waveforms.csv"), read(&b, "waveforms.csv"));
    let digest = |p: &Path| {
        let m: serde_json::Value = serde_json::from_slice(&read(p, "manifest.json")).unwrap();
        m["config_sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&a), digest(&b));

    // the resolved config re-simulates to the same digest
    let again = simulate(
        dir.path(),
        "c",
        &std::fs::read_to_string(a.join("resolved.toml")).unwrap(),
        &[],
    );
    assert_eq!(digest(&a), digest(&again));
}

#[test]
fn flags_and_overrides_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        "o",
        CASE_B_SHORT,
        &[
            "--dt",
            "1e-6",
            "--t-end",
            "0.01",
            "--override",
            "transformer.tap=21",
        ],
    );
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["dt_s"].as_f64().unwrap(), 1e-6);
    assert_eq!(m["t_end_s"].as_f64().unwrap(), 0.01);
    let resolved = std::fs::read_to_string(out.join("resolved.toml")).unwrap();
    assert!(resolved.contains("tap = 21"), "{resolved}");
}

#[test]
fn config_errors_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        (
            "unknown",
            "case_kind = \"case_b\"\n[source]\nvoltage = 1.0\n",
        ),
        ("tap", "case_kind = \"case_b\"\n[transformer]\ntap = 25\n"),
        ("syntax", "case_kind = \"case_b\n"),
        ("dt", "case_kind = \"case_b\"\n[sim]\ndt_s = 1e-5\n"),
    ] {
        let path = write(dir.path(), &format!("{name}.toml"), body);
        let out = dir.path().join(format!("out-{name}"));
        let o = run(&[
            "simulate",
            path.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", text(&o.stderr));
        assert!(!out.exists(), "{name} left outputs");
    }
    let o = run(&["simulate", "/nonexistent/x.toml", "-o", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tap_error_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "s.toml",
        "case_kind = \"case_b\"\n[transformer]\ntap = 25\n",
    );
    let o = run(&[
        "simulate",
        path.to_str().unwrap(),
        "-o",
        dir.path().join("x").to_str().unwrap(),
    ]);
    let err = text(&o.stderr);
    assert!(
        err.contains("transformer.tap") && err.contains("out of range"),
        "{err}"
    );
}

#[test]
fn batch_runs_in_parallel_into_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "b.toml", CASE_B_SHORT);
    let batch = write(
        dir.path(),
        "batch.toml",
        "[[run]]\nname = \"t1\"\nscenario = \"b.toml\"\noverrides = { transformer = { tap = 1 } }\n\
         [[run]]\nname = \"t21\"\nscenario = \"b.toml\"\n[run.overrides]\n\"transformer.tap\" = 21\n",
    );
    let out = dir.path().join("out");
    let o = bin()
        .args([
            "simulate",
            batch.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ])
        .env("TRANSIENT_BENCH_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    for (name, tap) in [("t1", 1), ("t21", 21)] {
        let resolved = std::fs::read_to_string(out.join(name).join("resolved.toml")).unwrap();
        assert!(resolved.contains(&format!("tap = {tap}\n")), "{resolved}");
    }

    let bad = write(
        dir.path(),
        "bad.toml",
        "[[run]]\nname = \"ok\"\nscenario = \"b.toml\"\n[[run]]\nname = \"broken\"\nscenario = \"b.toml\"\noverrides = { transformer = { tap = 99 } }\n",
    );
    let out = dir.path().join("bad-out");
    let o = run(&[
        "simulate",
        bad.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let o = bin()
        .args([
            "simulate",
            batch.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ])
        .env("TRANSIENT_BENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_case_b_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "b", "case_kind = \"case_b\"\n", &[]);
    let csv = out.join("waveforms.csv");
    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "lv_a",
        "--base-kv",
        "52.5",
        "--window",
        "0.005:0.045",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let report = text(&o.stdout);
    let f: f64 = key(&report, "dominant_freq_hz").parse().unwrap();
    let oracle = 1.0 / (2.0 * std::f64::consts::PI * (15.13e-3f64 * 118e-9).sqrt());
    assert!(((f - oracle) / oracle).abs() < 0.02, "{f} vs {oracle}");
    let pu: f64 = key(&report, "per_unit").parse().unwrap();
    assert!(pu > 1.0);
}

#[test]
fn analyze_case_a_per_unit() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        "a",
        "case_kind = \"case_a\"\nprobes = [\"lv\"]\n",
        &[],
    );
    let csv = out.join("waveforms.csv");
    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "lv_a",
        "--base-kv",
        "52.5",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let pu: f64 = key(&text(&o.stdout), "per_unit").parse().unwrap();
    assert!((pu - 3.0).abs() <= 0.45, "{pu}");
}

#[test]
fn analyze_zero_waveform_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("time_s,z\n");
    for k in 0..64 {
        body.push_str(&format!("{:e},0\n", k as f64 * 1e-6));
    }
    let csv = write(dir.path(), "z.csv", &body);
    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "z",
        "--base-kv",
        "150",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let report = text(&o.stdout);
    assert!(report.contains("no peak"));
    assert_eq!(key(&report, "per_unit").parse::<f64>().unwrap(), 0.0);
    assert_eq!(key(&report, "dominant_freq_hz"), "none");

    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "missing",
        "--base-kv",
        "150",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "z",
        "--base-kv",
        "150",
        "--window",
        "1:2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "analyze",
        csv.to_str().unwrap(),
        "--probe",
        "z",
        "--base-kv",
        "-1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_is_deterministic_with_one_polyline_per_probe() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "b", CASE_B_SHORT, &[]);
    let csv = out.join("waveforms.csv");
    let svg = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec![
            "plot",
            csv.to_str().unwrap(),
            "--probes",
            "hv,lv,line_end",
            "-o",
            path.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(o.status.success(), "{}", text(&o.stderr));
        (std::fs::read_to_string(path).unwrap(), text(&o.stderr))
    };
    let (a, _) = svg("a.svg", &[]);
    let (b, _) = svg("b.svg", &[]);
    assert_eq!(a, b);
    assert_eq!(a.matches("<polyline").count(), 3);

    let (zoomed, _) = svg("z.svg", &["--zoom", "0.005:0.0052"]);
    assert_eq!(zoomed.matches("<polyline").count(), 6);

    let (_, warning) = svg("c.svg", &["--t-range", "0:1"]);
    assert!(warning.contains("clipped"), "{warning}");
}

#[test]
fn plot_rejects_empty_selections() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), "b", CASE_B_SHORT, &["--t-end", "0.002"]);
    let csv = out.join("waveforms.csv");
    let svg = dir.path().join("x.svg");
    for extra in [
        vec!["--probes", "nope"],
        vec!["--probes", ""],
        vec!["--probes", "lv", "--t-range", "5:6"],
    ] {
        let mut args = vec!["plot", csv.to_str().unwrap(), "-o", svg.to_str().unwrap()];
        args.extend_from_slice(&extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{extra:?}");
        assert!(!svg.exists());
    }
}
