//! Command implementations behind the `finray` binary.

pub mod config;
pub mod heatmap;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use finray_core::design::{
    benchmark_design, validate, DesignBounds, GripperDesign, Severity, FINGER_PARAMS, PARAM_NAMES,
};
use finray_core::fem2d::{finger_outline, triangulate, TriMesh2D};
use finray_core::grasp::{evaluate_design, write_success_matrix, EvalConfig, EvaluationResult};
use finray_core::qd::{
    default_archive, read_archive_csv, write_metrics_header, write_metrics_row, AddStatus, Evaluator,
    GripperEvaluator, QdMetrics, QdRunner,
};
use serde_json::json;
use thiserror::Error;

pub use config::{RunConfig, CONFIG_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("determinism audit failed: {0}")]
    Audit(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Audit(_) => 3,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        sim: cfg.sim.clone(),
        grasp: cfg.grasp.clone(),
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

/// Reads a JSON design record.
pub fn load_design(path: &Path) -> Result<GripperDesign, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Parameter listing, one finger per line in genotype order.
pub fn describe_design(d: &GripperDesign) -> String {
    let mut s = String::new();
    for (k, f) in d.fingers.iter().enumerate() {
        let p = f.params();
        let cols: Vec<String> = (0..FINGER_PARAMS).map(|i| format!("{}={}", PARAM_NAMES[i], p[i])).collect();
        s.push_str(&format!("finger{}: {}\n", k + 1, cols.join(" ")));
    }
    s.push_str(&format!("d_mount={}\n", d.d_mount));
    s
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub metrics: Vec<QdMetrics>,
    pub evaluations: usize,
    pub filled: usize,
    pub benchmark_cell: (usize, usize),
    pub wall_time: f64,
}

/// Runs the full search and writes the run directory.
pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<OptimizeReport, CliError> {
    let start = Instant::now();
    let objects = cfg.object_set()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    // config echo with the object set copied alongside
    let mut echo = cfg.clone();
    echo.objects = Some(PathBuf::from("objects.toml"));
    write_file(&out.join("objects.toml"), &objects.to_toml())?;
    write_file(&out.join("config.toml"), &echo.to_toml())?;

    let evaluator = GripperEvaluator {
        bounds: DesignBounds::default(),
        objects: objects.clone(),
        config: eval_config(cfg),
    };
    let archive = default_archive(cfg.qd.archive_rows, cfg.qd.archive_cols, &evaluator.bounds).map_err(CliError::Runtime)?;
    let mut runner = QdRunner::new(&cfg.qd, archive, evaluator.bounds.dims(), cfg.seed);

    let log_path = out.join("runlog.jsonl");
    let mut log = create(&log_path)?;
    let metrics_path = out.join("metrics.csv");
    let mut metrics_out = create(&metrics_path)?;
    write_metrics_header(&mut metrics_out).map_err(|e| io_err(&metrics_path, e))?;
    let line = |log: &mut BufWriter<File>, v: serde_json::Value| -> Result<(), CliError> {
        writeln!(log, "{v}").and_then(|_| log.flush()).map_err(|e| io_err(&log_path, e))
    };
    line(&mut log, json!({ "type": "config", "config": echo }))?;

    let pool = thread_pool(cfg.threads)?;
    let mut details: HashMap<usize, Box<EvaluationResult>> = HashMap::new();
    let mut metrics = Vec::with_capacity(cfg.generations);
    for _ in 0..cfg.generations {
        let (m, records) = pool.install(|| runner.run_generation(&evaluator));
        for r in records {
            let status = match r.status {
                AddStatus::NewCell(_) => "new_cell",
                AddStatus::Improved(_) => "improved",
                AddStatus::Rejected => "rejected",
            };
            line(
                &mut log,
                json!({
                    "type": "evaluation",
                    "id": r.id,
                    "generation": r.generation,
                    "genotype": r.genotype,
                    "objective": r.objective,
                    "features": r.features,
                    "status": status,
                    "error": r.error,
                    "wall_time": r.wall_time,
                }),
            )?;
            if let Some(d) = r.detail {
                details.insert(r.id, d);
            }
        }
        line(&mut log, json!({ "type": "generation", "metrics": m }))?;
        write_metrics_row(&m, &mut metrics_out)
            .and_then(|_| metrics_out.flush())
            .map_err(|e| io_err(&metrics_path, e))?;
        eprintln!(
            "generation {}: evaluations {} coverage {:.4} qd_score {:.3} best {:.3}",
            m.generation, m.evaluations, m.coverage, m.qd_score, m.best
        );
        metrics.push(m);
    }

    let archive_path = out.join("archive.csv");
    let mut w = create(&archive_path)?;
    runner
        .archive
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&archive_path, e))?;

    let bench = benchmark_design();
    let bench_result = pool
        .install(|| evaluate_design(&bench, &objects, &evaluator.config))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let bench_features = bench.features().map_err(|e| CliError::Runtime(format!("benchmark: {e}")))?;
    let benchmark_cell = runner.archive.cell_index(&bench_features);
    write_file(&out.join("heatmap.svg"), &heatmap::render(&runner.archive, Some(benchmark_cell)))?;

    let mut rows: Vec<(String, &EvaluationResult)> = vec![("benchmark".into(), &bench_result)];
    for ((i, j), e) in runner.archive.iter() {
        if let Some(d) = details.get(&e.evaluation_id) {
            rows.push((format!("cell_{i}_{j}"), d));
        }
    }
    let sm_path = out.join("success_matrix.csv");
    let mut w = create(&sm_path)?;
    write_success_matrix(&rows, &objects, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&sm_path, e))?;

    let wall_time = start.elapsed().as_secs_f64();
    line(
        &mut log,
        json!({
            "type": "summary",
            "evaluations": runner.evaluations,
            "filled_cells": runner.archive.len(),
            "benchmark_cell": [benchmark_cell.0, benchmark_cell.1],
            "benchmark_success_rate": bench_result.success_rate,
            "total_wall_time": wall_time,
        }),
    )?;
    Ok(OptimizeReport {
        metrics,
        evaluations: runner.evaluations,
        filled: runner.archive.len(),
        benchmark_cell,
        wall_time,
    })
}

/// Scores one design and prints a per-object table.
pub fn evaluate(design: &GripperDesign, label: &str, cfg: &RunConfig, out: &Path) -> Result<EvaluationResult, CliError> {
    let objects = cfg.object_set()?;
    if objects.is_empty() {
        return Err(CliError::Usage("object set is empty".into()));
    }
    for v in validate(design, &DesignBounds::default(), false) {
        let tag = if v.severity == Severity::Error { "error" } else { "warning" };
        eprintln!("{tag}: {}", v.message);
    }
    let pool = thread_pool(cfg.threads)?;
    let r = pool
        .install(|| evaluate_design(design, &objects, &eval_config(cfg)))
        .map_err(|e| CliError::Usage(e.to_string()))?;

    println!("design: {label}");
    print!("{}", describe_design(design));
    println!("{:<16} {:>4}  {:<18} normal forces (N)", "object", "held", "failure");
    for o in &r.outcomes {
        let reason = o.failure.map_or("-", |f| f.name());
        println!(
            "{:<16} {:>4}  {:<18} {:.3} {:.3} {:.3}",
            o.object,
            u8::from(o.held),
            reason,
            o.normal_forces[0],
            o.normal_forces[1],
            o.normal_forces[2]
        );
    }
    println!("success_rate = {}", r.success_rate);
    match r.features {
        Some(f) => println!("workspace = {} mm^2, volume = {} mm^3", f.workspace, f.volume),
        None => println!("features unavailable: invalid geometry"),
    }

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join("success_matrix.csv");
    let mut w = create(&path)?;
    write_success_matrix(&[(label.to_string(), &r)], &objects, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&path, e))?;
    Ok(r)
}

/// Meshes each finger and writes `finger{k}.obj` plus a quality report.
/// Identical fingers are meshed once.
pub fn mesh(design: &GripperDesign, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut meshes: Vec<([u64; FINGER_PARAMS], TriMesh2D)> = Vec::new();
    let mut written = Vec::new();
    let mut report = String::from("finger,elements,nodes,min_angle_deg,min_edge,max_edge\n");
    for (k, f) in design.fingers.iter().enumerate() {
        let idx = match meshes.iter().position(|(key, _)| *key == f.key()) {
            Some(i) => i,
            None => {
                let outline = finger_outline(f).map_err(|e| CliError::Runtime(format!("finger{}: {e}", k + 1)))?;
                let m = triangulate(&outline.outline, cfg.sim.h_min, cfg.sim.h_max)
                    .map_err(|e| CliError::Runtime(format!("finger{}: {e}", k + 1)))?;
                meshes.push((f.key(), m));
                meshes.len() - 1
            }
        };
        let m = &meshes[idx].1;
        let path = out.join(format!("finger{}.obj", k + 1));
        let mut w = create(&path)?;
        m.write_obj(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
        let q = m.quality();
        println!(
            "finger{}: {} elements, {} nodes, min angle {:.2} deg, edges {:.3}..{:.3} mm",
            k + 1,
            q.elements,
            q.nodes,
            q.min_angle_deg,
            q.min_edge,
            q.max_edge
        );
        report.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k + 1,
            q.elements,
            q.nodes,
            q.min_angle_deg,
            q.min_edge,
            q.max_edge
        ));
        written.push(path);
    }
    write_file(&out.join("mesh_report.csv"), &report)?;
    Ok(written)
}

/// Re-evaluates the elite in cell (i, j) and checks its stored objective.
pub fn replay(archive: &Path, i: usize, j: usize, cfg: &RunConfig) -> Result<f64, CliError> {
    let f = File::open(archive).map_err(|e| CliError::Runtime(format!("{}: {e}", archive.display())))?;
    let rows = read_archive_csv(BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", archive.display())))?;
    let row = rows
        .into_iter()
        .find(|r| r.cell == (i, j))
        .ok_or_else(|| CliError::Runtime(format!("cell ({i}, {j}) is empty")))?;
    let evaluator = GripperEvaluator {
        bounds: DesignBounds::default(),
        objects: cfg.object_set()?,
        config: eval_config(cfg),
    };
    let design = evaluator.design(&row.genotype).map_err(CliError::Runtime)?;
    print!("{}", describe_design(&design));
    let pool = thread_pool(cfg.threads)?;
    let objective = pool.install(|| evaluator.evaluate(&row.genotype)).map_or(0.0, |e| e.objective);
    println!("stored objective = {}, replayed objective = {objective}", row.objective);
    if objective.to_bits() != row.objective.to_bits() {
        return Err(CliError::Audit(format!(
            "cell ({i}, {j}): stored {} but replay gives {objective}",
            row.objective
        )));
    }
    Ok(objective)
}

/// Config for replaying `archive`: an explicit path or env var wins, then the
/// run directory's echo, then defaults.
pub fn replay_config(archive: &Path, explicit: Option<&Path>) -> Result<RunConfig, CliError> {
    if explicit.is_some() || std::env::var_os(CONFIG_ENV).is_some() {
        return RunConfig::resolve(explicit);
    }
    let echo = archive.parent().unwrap_or(Path::new(".")).join("config.toml");
    if echo.exists() {
        RunConfig::load(&echo)
    } else {
        Ok(RunConfig::default())
    }
}
