use std::path::Path;
use std::process::{Command, Output};

use lem::terrain_io::{generate_terrain, read_raster};

fn lem(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lem"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn lem")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_with_defaults_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(&["run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = read_raster(&dir.path().join("out.lem")).unwrap();
    assert_eq!((r.width(), r.height()), (500, 500));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("erosion"));
}

#[test]
fn zero_steps_writes_generated_terrain() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(
        &["run", "--width", "20", "--height", "10", "--seed", "3", "--timesteps", "0", "-o", "t.lem"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_raster(&dir.path().join("t.lem")).unwrap(), generate_terrain(20, 10, 3).unwrap());
}

#[test]
fn invalid_config_is_a_usage_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(&["run", "--n-exp", "0", "-o", "x.lem"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_exp"));
    assert!(!dir.path().join("x.lem").exists());

    std::fs::write(dir.path().join("bad.cfg"), "colour=red\n").unwrap();
    let o = lem(&["run", "--config", "bad.cfg", "-o", "x.lem"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));

    assert_eq!(lem(&["fly"], dir.path()).status.code(), Some(1));
}

#[test]
fn runtime_error_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(
        &["run", "--width", "10", "--height", "10", "--timesteps", "1", "--routing", "mfd", "--strategy", "rb+pq"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file_and_snapshots_are_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "width=12 height=9 # small\ntimesteps=10\nsnapshot_interval=5\nseed=1\noutput=snap.lem\n",
    )
    .unwrap();
    let o = lem(&["run", "--config", "run.cfg", "--seed", "2", "--text-output", "snap.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["snap.lem", "snap.05.lem", "snap.10.lem", "snap.txt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let o = lem(&["run", "--config", "run.cfg", "--timesteps", "0", "-o", "zero.lem"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    // config seed 1 survives, flag-less keys come from the file
    assert_eq!(read_raster(&dir.path().join("zero.lem")).unwrap(), generate_terrain(12, 9, 1).unwrap());
}

#[test]
fn compare_all_strategies_matches() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(
        &[
            "compare", "--width", "100", "--height", "100", "--seed", "1", "--timesteps", "120", "--strategies", "all",
            "--workers-list", "2,8",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn compare_needs_two_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(&["compare", "--strategies", "rb_serial"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_reports_perturbed_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(
        &[
            "compare", "--width", "30", "--height", "30", "--timesteps", "5", "--strategies", "rb_serial,rb_par_all:4",
            "--perturb-cell", "345",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("cell 345"), "{}", stderr(&o));
}

#[test]
fn bench_emits_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = lem(
        &[
            "bench", "--sizes", "100,200", "--strategies", "rb_serial,rb_par_all:2", "--timesteps", "2", "--json",
            "b.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), lem::cli::BENCH_COLUMNS.join("\t"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2 * 2 * lem::timing::Phase::ALL.len());
    let mut pairs: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[2])).collect();
    pairs.dedup();
    assert_eq!(pairs.len(), 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    let entries = json["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[0]["per_step"].as_array().unwrap().len(), 2);
}
