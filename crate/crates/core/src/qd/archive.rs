//! MAP-Elites grid over (volume, workspace).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::design::FeatureDescriptor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub genotype: Vec<f64>,
    pub objective: f64,
    pub features: FeatureDescriptor,
    pub evaluation_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AddStatus {
    NewCell(f64),
    Improved(f64),
    Rejected,
}

impl AddStatus {
    pub fn is_improvement(&self) -> bool {
        !matches!(self, AddStatus::Rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMetrics {
    pub coverage: f64,
    pub qd_score: f64,
    pub best: f64,
}

/// Rows bin the volume feature, columns bin the workspace feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveGrid {
    pub rows: usize,
    pub cols: usize,
    pub volume_range: (f64, f64),
    pub workspace_range: (f64, f64),
    cells: BTreeMap<(usize, usize), Elite>,
}

fn bin(v: f64, (lo, hi): (f64, f64), n: usize) -> usize {
    let t = (v - lo) / (hi - lo);
    if !(t > 0.0) {
        // also catches NaN
        return 0;
    }
    ((t * n as f64).floor() as usize).min(n - 1)
}

impl ArchiveGrid {
    pub fn new(rows: usize, cols: usize, volume_range: (f64, f64), workspace_range: (f64, f64)) -> Self {
        assert!(rows > 0 && cols > 0);
        assert!(volume_range.1 > volume_range.0 && workspace_range.1 > workspace_range.0);
        ArchiveGrid {
            rows,
            cols,
            volume_range,
            workspace_range,
            cells: BTreeMap::new(),
        }
    }

    pub fn cell_index(&self, f: &FeatureDescriptor) -> (usize, usize) {
        (bin(f.volume, self.volume_range, self.rows), bin(f.workspace, self.workspace_range, self.cols))
    }

    pub fn add(&mut self, e: Elite) -> AddStatus {
        debug_assert!((0.0..=1.0).contains(&e.objective));
        let key = self.cell_index(&e.features);
        match self.cells.get(&key) {
            None => {
                let d = e.objective;
                self.cells.insert(key, e);
                AddStatus::NewCell(d)
            }
            Some(inc) if e.objective > inc.objective => {
                let d = e.objective - inc.objective;
                self.cells.insert(key, e);
                AddStatus::Improved(d)
            }
            Some(_) => AddStatus::Rejected,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Elite> {
        self.cells.get(&(i, j))
    }

    /// Elites in row-major cell order.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Elite)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn metrics(&self) -> ArchiveMetrics {
        let qd_score = self.cells.values().map(|e| e.objective).sum();
        let best = self.cells.values().map(|e| e.objective).fold(0.0, f64::max);
        ArchiveMetrics {
            coverage: self.cells.len() as f64 / (self.rows * self.cols) as f64,
            qd_score,
            best,
        }
    }

    /// `cell_i, cell_j, workspace, volume, objective, g0..`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let glen = self.cells.values().next().map_or(0, |e| e.genotype.len());
        write!(w, "cell_i,cell_j,workspace,volume,objective")?;
        for k in 0..glen {
            write!(w, ",g{k}")?;
        }
        writeln!(w)?;
        for ((i, j), e) in &self.cells {
            write!(w, "{i},{j},{},{},{}", e.features.workspace, e.features.volume, e.objective)?;
            for g in &e.genotype {
                write!(w, ",{g}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One row of an archive CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveRow {
    pub cell: (usize, usize),
    pub features: FeatureDescriptor,
    pub objective: f64,
    pub genotype: Vec<f64>,
}

pub fn read_archive_csv<R: BufRead>(r: R) -> Result<Vec<ArchiveRow>, String> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            return Err(format!("line {}: expected at least 5 columns", n + 1));
        }
        let num = |k: usize| -> Result<f64, String> {
            f[k].trim().parse::<f64>().map_err(|e| format!("line {}, column {}: {e}", n + 1, k + 1))
        };
        let idx = |k: usize| -> Result<usize, String> {
            f[k].trim().parse::<usize>().map_err(|e| format!("line {}, column {}: {e}", n + 1, k + 1))
        };
        rows.push(ArchiveRow {
            cell: (idx(0)?, idx(1)?),
            features: FeatureDescriptor {
                workspace: num(2)?,
                volume: num(3)?,
            },
            objective: num(4)?,
            genotype: (5..f.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}
