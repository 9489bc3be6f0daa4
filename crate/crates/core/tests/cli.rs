use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const EXAMPLE: &str = r#"
mode = "saturated_directed"

[game]
kind = "ring"
n = 6

[graph]
kind = "cycle"
n = 6

[players]
order = 3
theta = 0.3333333333333333
delta = 1.0
u_limit = 0.48148148148148145

[init]
x0 = [[1, 1, 1], [2, 1, 1], [3, 1, 1], [4, 1, 1], [5, 1, 1], [6, 1, 1]]
z0 = 1.0
c0 = 1.0

[sim]
t_end = 2.05
log_every = 150
conv_window = 0.5
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nash-seek"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_trajectory_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "example.toml", EXAMPLE);
    let out = dir.path().join("out");
    let o = bin(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // 2050 steps logged every 150
    assert_eq!(lines.len(), 1 + 2050 / 150);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header[0], "t");
    assert_eq!(header[1..7], ["y_1", "y_2", "y_3", "y_4", "y_5", "y_6"]);
    assert_eq!(header[7], "u_1");
    assert_eq!(
        header[13..],
        ["err", "tilde_norm", "z_residual", "xbar_tail_max"]
    );
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), header.len());
        for c in cells {
            let mantissa = c.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.len(), 18, "{c}");
            c.parse::<f64>().unwrap();
        }
    }
    let first_t: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    assert!((first_t - 0.15).abs() < 1e-12);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for key in [
        "converged",
        "t_converge",
        "final_err",
        "max_abs_u",
        "certified_bounds",
        "bound_violated",
        "c_final_range",
        "c_monotone",
        "c_trailing_drift",
        "lemma1_entry_time",
        "final_tilde_norm",
        "final_z_residual",
        "final_y",
        "steps",
        "resolved_config",
    ] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["steps"], 2050);
    let bounds = summary["certified_bounds"].as_array().unwrap();
    assert_eq!(bounds.len(), 6);
    for b in bounds {
        assert!((b.as_f64().unwrap() - 13.0 / 27.0).abs() < 1e-15);
    }
    assert_eq!(summary["resolved_config"]["sim"]["step_size"], 1e-3);
    assert_eq!(
        summary["resolved_config"]["players"]
            .as_array()
            .unwrap()
            .len(),
        6
    );
}

#[test]
fn summary_alone_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "example.toml", EXAMPLE);
    let first = dir.path().join("first");
    assert_eq!(
        bin(&["run", &cfg, "--out", first.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(first.join("summary.json")).unwrap()).unwrap();
    let resolved: nash_seek::config::ScenarioConfig =
        serde_json::from_value(summary["resolved_config"].clone()).unwrap();
    let again = write_config(dir.path(), "again.toml", &resolved.to_toml().unwrap());
    let second = dir.path().join("second");
    assert_eq!(
        bin(&["run", &again, "--out", second.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );

    for file in ["trajectory.csv", "summary.json"] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn zero_initial_gain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c0.toml",
        &EXAMPLE.replace("c0 = 1.0", "c0 = 0.0"),
    );
    let o = bin(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c_ij(0) > 0"), "{}", stderr(&o));
    assert!(!dir.path().join("o").join("trajectory.csv").exists());
}

#[test]
fn disconnected_graph_names_assumption_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = EXAMPLE.replace(
        "[graph]\nkind = \"cycle\"\nn = 6",
        "[graph]\nkind = \"explicit\"\nweights = [[0,0,0,0,0,0],[1,0,0,0,0,0],[0,1,0,0,0,0],[0,0,1,0,0,0],[0,0,0,1,0,0],[0,0,0,0,1,0]]",
    );
    let cfg = write_config(dir.path(), "path.toml", &text);
    let o = bin(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Assumption 3"), "{}", stderr(&o));
}

#[test]
fn parse_errors_report_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &EXAMPLE.replace("delta = 1.0", "delta = one"),
    );
    let o = bin(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 15"), "{}", stderr(&o));
}

#[test]
fn paper_example_prints_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pe");
    let o = bin(&[
        "paper-example",
        "--t-end",
        "1",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let checks: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    assert_eq!(checks.len(), 5, "{text}");
    assert!(text.contains("PASS control bound"), "{text}");
    for sub in ["saturated", "unsaturated"] {
        assert!(out.join(sub).join("trajectory.csv").exists());
        assert!(out.join(sub).join("summary.json").exists());
    }
}

#[test]
fn solve_ne_ring_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "example.toml", EXAMPLE);
    let o = bin(&["solve-ne", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.matches("-0.500000000000").count(), 12, "{text}");

    let diag = EXAMPLE.replace(
        "[game]\nkind = \"ring\"\nn = 6",
        "[game]\nkind = \"explicit\"\njacobian = [[2,0,0,0,0,0],[0,2,0,0,0,0],[0,0,2,0,0,0],[0,0,0,2,0,0],[0,0,0,0,2,0],[0,0,0,0,0,2]]\noffset = [1,1,1,1,1,1]",
    );
    let o = bin(&["solve-ne", &write_config(dir.path(), "diag.toml", &diag)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("-0.500000000000").count(), 12);
}

#[test]
fn solve_ne_rejects_skew_game() {
    let dir = tempfile::tempdir().unwrap();
    let text = "mode = \"saturated_directed\"\n\
        [game]\nkind = \"explicit\"\njacobian = [[0, 1], [-1, 0]]\noffset = [1, 1]\n\
        [graph]\nkind = \"cycle\"\nn = 2\n\
        [players]\norder = 1\ntheta = 0.25\ndelta = 1.0\nu_limit = 1.0\n";
    let o = bin(&["solve-ne", &write_config(dir.path(), "skew.toml", text)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("Assumption 2"), "{}", stderr(&o));
}

#[test]
fn check_passes_on_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["check", &write_config(dir.path(), "example.toml", EXAMPLE)]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("13/27 <= U = 13/27"), "{text}");
    assert!(text.contains("PASS Assumption 3"), "{text}");
    assert!(text.contains("PASS H matrix"), "{text}");
}

#[test]
fn check_flags_large_theta_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let large = EXAMPLE.replace("theta = 0.3333333333333333", "theta = 0.6");
    let cfg = write_config(dir.path(), "large.toml", &large);
    let o = bin(&["check", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("Lemma 1"), "{}", stdout(&o));
    let o = bin(&["check", "--allow-large-theta", &cfg]);
    assert!(stdout(&o).contains("override set"), "{}", stdout(&o));

    let wide = EXAMPLE.replace("delta = 1.0", "delta = 2.0");
    let o = bin(&["check", &write_config(dir.path(), "wide.toml", &wide)]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(
        text.contains("FAIL player 0 control bound: 26/27 > U = 13/27"),
        "{text}"
    );
    assert!(text.contains("Remark 2"), "{text}");
}

#[test]
fn run_rejects_large_theta_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let large = EXAMPLE.replace("theta = 0.3333333333333333", "theta = 0.6");
    let cfg = write_config(dir.path(), "large.toml", &large);
    let out = dir.path().join("o");
    let o = bin(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Lemma 1"), "{}", stderr(&o));
    let o = bin(&[
        "run",
        "--allow-large-theta",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn replicates_are_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "example.toml",
        &EXAMPLE.replace("t_end = 2.05", "t_end = 0.5"),
    );
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    for (out, jobs) in [(&serial, "1"), (&parallel, "3")] {
        let o = bin(&[
            "run",
            &cfg,
            "--replicates",
            "3",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().count(), 3);
    }
    let traj = |d: &Path, k: usize| {
        fs::read(d.join(format!("replicate_{k}")).join("trajectory.csv")).unwrap()
    };
    for k in 0..3 {
        assert_eq!(traj(&serial, k), traj(&parallel, k));
    }
    assert_ne!(traj(&serial, 0), traj(&serial, 1));
}
