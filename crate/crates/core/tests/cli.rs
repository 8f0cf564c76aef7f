//! End-to-end runs of the `solar` binary.

use std::path::Path;
use std::process::{Command, Output};

use solar::format::read_npy;
use solar::pipeline::relative_error;

fn solar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solar"))
        .current_dir(dir)
        .env_remove("SOLAR_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_into(dir: &Path, seed: &str) {
    let o = solar(
        dir,
        &[
            "synth", "--m", "24", "--n", "20", "--r", "2", "--synth-seed", seed, "--out-weights", "w.npy", "--out-a",
            "a.npy", "--out-b", "b.npy", "--out-delta", "dw.npy",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn compress_reconstruct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d, "3");
    let compress = [
        "compress", "--weights", "w.npy", "--adapter-a", "a.npy", "--adapter-b", "b.npy", "--pool-a", "60",
        "--pool-b", "60", "--topk", "60", "--seed", "5", "--out", "x.solar",
    ];
    let o = solar(d, &compress);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("tensor=delta k_A=60 k_B=60 err_product="), "{line}");
    assert!(line.contains("footprint_params=125 "), "{line}");

    let o = solar(
        d,
        &["reconstruct", "--weights", "w.npy", "--in", "x.solar", "--out-a", "ra.npy", "--out-b", "rb.npy", "--out-delta", "rd.npy"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let original = read_npy(d.join("dw.npy")).unwrap();
    let rebuilt = read_npy(d.join("rd.npy")).unwrap();
    // 60 >= 2 x 20 and 2 x 24 generic bases span both targets
    assert!(relative_error(&rebuilt, &original).unwrap() < 1e-7);

    // same inputs, same bytes
    let first = std::fs::read(d.join("x.solar")).unwrap();
    assert!(solar(d, &compress).status.success());
    assert_eq!(std::fs::read(d.join("x.solar")).unwrap(), first);

    let o = solar(d, &["footprint", "--artifact", "x.solar", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let overhead: u64 = report["container_overhead"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["value"].as_u64().unwrap())
        .sum();
    assert_eq!(report["byte_count"].as_u64().unwrap() + overhead, first.len() as u64);
}

#[test]
fn wrong_weights_exit_with_fingerprint_status() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d, "1");
    let o = solar(
        d,
        &[
            "compress", "--weights", "w.npy", "--adapter-a", "a.npy", "--adapter-b", "b.npy", "--pool-a", "10",
            "--pool-b", "10", "--topk-a", "3", "--topk-b", "4", "--quant", "8", "--out", "x.solar",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::rename(d.join("w.npy"), d.join("w1.npy")).unwrap();
    synth_into(d, "2");
    let o = solar(d, &["reconstruct", "--weights", "w.npy", "--in", "x.solar", "--out-a", "ra.npy", "--out-b", "rb.npy"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("fingerprint"));
    assert!(!d.join("ra.npy").exists());
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = solar(d, &["compress", "--weights", "missing.npy"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim().lines().count(), 1, "{}", stderr(&o));

    synth_into(d, "4");
    let o = solar(
        d,
        &[
            "compress", "--weights", "w.npy", "--adapter-a", "a.npy", "--adapter-b", "b.npy", "--pool-a", "10",
            "--pool-b", "10", "--topk", "11", "--out", "x.solar",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k=11"), "{}", stderr(&o));
    assert!(!d.join("x.solar").exists());

    let o = solar(
        d,
        &[
            "compress", "--weights", "w.npy", "--adapter-a", "b.npy", "--adapter-b", "a.npy", "--pool-a", "10",
            "--pool-b", "10", "--topk", "2", "--out", "x.solar",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = solar(d, &["footprint", "--preset", "vitb-solar-4000-1600", "--bits", "3", "--mode", "byte", "--layers", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_map_to_status_3() {
    assert_eq!(solar::Error::SvdNoConvergence { iterations: 1 }.exit_code(), 3);
    assert_eq!(solar::Error::Singular("x").exit_code(), 3);
}

#[test]
fn thread_variable_is_validated_and_output_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["sweep", "--m", "16", "--n", "16", "--r", "2", "--pools", "20,40", "--topk", "5,10"];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_solar"))
            .current_dir(d)
            .env("SOLAR_THREADS", threads)
            .args(args)
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    assert!(one.status.success(), "{}", stderr(&one));
    assert_eq!(one.stdout, four.stdout);
    let csv = stdout(&one);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# metric:"));
    assert_eq!(lines.next().unwrap(), "N,k,mode,err_product,err_A,err_B,c2,ms");
    assert_eq!(lines.count(), 8);

    let bad = run("zero");
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("SOLAR_THREADS"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# footprint defaults\npreset = gpt2m-solar-100-90\njson = true\n").unwrap();
    let o = solar(d, &["footprint", "--config", "run.cfg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["param_count"], 8791);

    let o = solar(d, &["footprint", "--config", "run.cfg", "--preset", "gpt2m-lora-r4"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["param_count"], 393216);

    std::fs::write(d.join("bad.cfg"), "preset\n").unwrap();
    let o = solar(d, &["footprint", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn analyze_and_bound_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_into(d, "6");
    let o = solar(d, &["analyze", "--weights", "w.npy", "--adapter-a", "a.npy", "--adapter-b", "b.npy", "--max-i", "4", "--max-j", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next(), Some("i,j,phi"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    // synthetic updates sit in the top-r directions, so phi(2, 2) = 2
    let last: f64 = csv.lines().find(|l| l.starts_with("2,2,")).unwrap()[4..].parse().unwrap();
    assert!((last - 2.0).abs() < 1e-9, "{last}");

    let o = solar(
        d,
        &["bound", "--delta", "dw.npy", "--weights", "w.npy", "--pool-a", "30", "--pool-b", "30", "--topk", "20", "--trials", "20"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rank_source"], "sketch");
    assert_eq!(v["r_A"], 2);
    assert!(v["c2"]["total"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["rangefinder"]["holds"], true);
}
