use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn finray(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finray"))
        .args(args)
        .current_dir(dir)
        .env_remove("FINRAY_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_OBJECTS: &str = r#"
[[objects]]
id = "ball"
shape = "sphere"
radius = 12.0
mass = 0.05

[[objects]]
id = "can"
shape = "cylinder"
radius = 15.0
height = 40.0
corner_radius = 2.0
mass = 0.1
"#;

fn small_config(dir: &Path, seed: u64) {
    fs::write(dir.join("objects.toml"), SMALL_OBJECTS).unwrap();
    fs::write(
        dir.join("run.toml"),
        format!("seed = {seed}\ngenerations = 2\nobjects = \"objects.toml\"\nthreads = 1\nqd.batch = 4\nsim.h_max = 4.0\n"),
    )
    .unwrap();
}

#[test]
fn malformed_config_exits_2_with_line() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("bad.toml"), "seed = 3\ngenerations = 2\n[sim]\nstep = 0.1\n").unwrap();
    let o = finray(&["optimize", "--config", "bad.toml"], t.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn invalid_design_file_exits_2() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("d.json"), "{\"fingers\": 3}").unwrap();
    let o = finray(&["evaluate", "--design", "d.json", "--out", "o"], t.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_object_set_exits_2() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("none.toml"), "objects = []\n").unwrap();
    let o = finray(&["benchmark", "--objects", "none.toml", "--out", "o"], t.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_subcommand_is_usage_error() {
    let t = TempDir::new().unwrap();
    assert_eq!(finray(&[], t.path()).status.code(), Some(2));
    assert_eq!(finray(&["evaluate"], t.path()).status.code(), Some(2));
}

#[test]
fn benchmark_echo_and_rate() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("objects.toml"), SMALL_OBJECTS).unwrap();
    let o = finray(&["benchmark", "--objects", "objects.toml", "--out", "o"], t.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("finger1: H=94.5 L=37.5 W=21.3 L_tip=15 t_flex=0 t_back=8 N=2 t_rib=2 D_angle=2"), "{s}");
    assert!(s.contains("d_mount=35"));

    // printed rate equals the mean of the 0/1 column
    let csv = fs::read_to_string(t.path().join("o/success_matrix.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let held: Vec<f64> = row[1..row.len() - 1].iter().map(|v| v.parse().unwrap()).collect();
    let mean = held.iter().sum::<f64>() / held.len() as f64;
    let printed: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("success_rate = "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(printed, mean);
}

#[test]
fn unreachable_design_scores_zero() {
    let t = TempDir::new().unwrap();
    let mut d = finray_core::design::benchmark_design();
    d.d_mount = 5.0;
    fs::write(t.path().join("d.json"), serde_json::to_string(&d).unwrap()).unwrap();
    let o = finray(&["evaluate", "--design", "d.json", "--out", "o"], t.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("success_rate = 0\n"), "{}", stdout(&o));
}

#[test]
fn mesh_writes_identical_objs() {
    let t = TempDir::new().unwrap();
    let o = finray(&["mesh", "--benchmark", "--out", "m"], t.path());
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<Vec<u8>> = (1..=3).map(|k| fs::read(t.path().join(format!("m/finger{k}.obj"))).unwrap()).collect();
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);

    let text = String::from_utf8(files[0].clone()).unwrap();
    let vertices = text.lines().filter(|l| l.starts_with("v ")).count();
    let (models, _) = tobj::load_obj(t.path().join("m/finger1.obj"), &tobj::LoadOptions::default()).unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!(models[0].mesh.positions.len(), 3 * vertices);

    let report = fs::read_to_string(t.path().join("m/mesh_report.csv")).unwrap();
    let h_min = finray_core::fem2d::SimConfig::default().h_min;
    for line in report.lines().skip(1) {
        let min_edge: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(min_edge >= h_min / 2.0);
    }
}

#[test]
fn mesh_geometry_failure_exits_1() {
    let t = TempDir::new().unwrap();
    let mut d = finray_core::design::benchmark_design();
    d.fingers[1].back_thickness = 30.0;
    fs::write(t.path().join("d.json"), serde_json::to_string(&d).unwrap()).unwrap();
    let o = finray(&["mesh", "--design", "d.json", "--out", "m"], t.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn small_run_is_reproducible_and_replays() {
    let t = TempDir::new().unwrap();
    small_config(t.path(), 5);
    for out in ["a", "b"] {
        let o = finray(&["optimize", "--config", "run.toml", "--out", out], t.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(t.path().join("a/archive.csv")).unwrap();
    let b = fs::read(t.path().join("b/archive.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(t.path().join("a/metrics.csv")).unwrap(),
        fs::read(t.path().join("b/metrics.csv")).unwrap()
    );

    let metrics = fs::read_to_string(t.path().join("a/metrics.csv")).unwrap();
    let rows: Vec<Vec<f64>> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][1], 8.0);
    assert!(rows[1][2] >= rows[0][2] && rows[1][3] >= rows[0][3]);

    let log = fs::read_to_string(t.path().join("a/runlog.jsonl")).unwrap();
    let evals = log.lines().filter(|l| l.contains("\"type\":\"evaluation\"")).count();
    assert_eq!(evals, 8);

    let svg = fs::read_to_string(t.path().join("a/heatmap.svg")).unwrap();
    assert_eq!(svg.matches("class=\"cell").count(), 400);
    assert_eq!(svg.matches("class=\"benchmark\"").count(), 1);

    // echo alone reproduces the run
    let echo = fs::read_to_string(t.path().join("a/config.toml")).unwrap();
    assert!(echo.contains("objects = \"objects.toml\""));

    let archive = String::from_utf8(a).unwrap();
    let cells: Vec<(String, String)> = archive
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert!(!cells.is_empty());
    for (i, j) in &cells {
        let o = finray(&["replay", "a/archive.csv", i, j], t.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_path_from_env() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("bad.toml"), "nonsense = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_finray"))
        .args(["benchmark", "--out", "o"])
        .current_dir(t.path())
        .env("FINRAY_CONFIG", "bad.toml")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonsense"));
}
