//! Run directories: `config.cfg`, `blocks.csv`, `bounds.csv`, and per
//! snapshot `snap_NNNNN.txt`, `ls_NNNNN.txt`, `est_NNNNN.csv` (plus
//! `snap_NNNNN.vtk` on request), numbered by accepted block.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{parse_config, RunConfig};
use super::snapshot::{read_snapshot, write_snapshot, write_vtk};
use crate::adapt::{run, BlockEvent, RunSummary, BLOCK_CSV_HEADER};
use crate::chsolver::dudt_with;
use crate::error::{Error, Result};
use crate::estimator::{local_estimators_with, EstimateSet, BOUND_CSV_HEADER, ESTIMATE_CSV_HEADER};
use crate::interface::{extract_zero_level_set, rate_study, LevelSet, RateSample, RateStudy};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output_dir` from the config.
    pub output_dir: Option<PathBuf>,
    pub vtk: bool,
    pub quiet: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub output_dir: PathBuf,
    pub snapshots: usize,
}

struct Writers {
    dir: PathBuf,
    blocks: BufWriter<File>,
    bounds: BufWriter<File>,
    vtk: bool,
    snapshots: usize,
}

impl Writers {
    fn create(dir: &Path, cfg: &RunConfig, vtk: bool) -> Result<Writers> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.cfg"), cfg.to_text())?;
        let mut blocks = BufWriter::new(File::create(dir.join("blocks.csv"))?);
        writeln!(blocks, "{BLOCK_CSV_HEADER}")?;
        let mut bounds = BufWriter::new(File::create(dir.join("bounds.csv"))?);
        writeln!(bounds, "{BOUND_CSV_HEADER}")?;
        Ok(Writers {
            dir: dir.to_path_buf(),
            blocks,
            bounds,
            vtk,
            snapshots: 0,
        })
    }

    fn block(&mut self, ev: &BlockEvent, snapshot: bool) -> Result<()> {
        writeln!(self.blocks, "{}", ev.record.csv_row())?;
        if let Some(b) = ev.bound {
            writeln!(self.bounds, "{}", b.csv_row())?;
        }
        if snapshot {
            let tag = format!("{:05}", ev.accepted);
            fs::write(self.dir.join(format!("snap_{tag}.txt")), write_snapshot(ev.state))?;
            let ls = extract_zero_level_set(&ev.state.u).at_time(ev.state.t);
            fs::write(self.dir.join(format!("ls_{tag}.txt")), ls.to_text())?;
            let mut est = BufWriter::new(File::create(self.dir.join(format!("est_{tag}.csv")))?);
            writeln!(est, "{ESTIMATE_CSV_HEADER}")?;
            ev.estimates.write_csv(&mut est)?;
            est.flush()?;
            if self.vtk {
                fs::write(self.dir.join(format!("snap_{tag}.vtk")), write_vtk(ev.state))?;
            }
            self.snapshots += 1;
        }
        self.blocks.flush()?;
        self.bounds.flush()?;
        Ok(())
    }
}

/// Run the adaptive algorithm and write the run directory.
pub fn execute(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let mut out = Writers::create(&dir, cfg, opts.vtk)?;
    let t_end = cfg.adapt.t_end;
    let every = cfg.snapshot_every_blocks;
    let quiet = opts.quiet;
    let summary = run(&cfg.problem(), &mut |ev| {
        let last = ev.state.t >= t_end * (1.0 - 1e-14);
        let snapshot = ev.bound.is_some() && (ev.accepted % every == 0 || last);
        if !quiet {
            let r = ev.record;
            eprintln!(
                "block {:>4} t={:.6e} E={:.4e} {:<14} elements={} dofs={}",
                r.block, r.t, r.estimate, r.action.to_string(), r.elements, r.dofs
            );
        }
        out.block(ev, snapshot)
    })?;
    Ok(RunOutcome {
        summary,
        snapshots: out.snapshots,
        output_dir: dir,
    })
}

/// Estimator of a stored snapshot under the given configuration.
pub fn estimate_snapshot(cfg: &RunConfig, snapshot: &Path) -> Result<EstimateSet> {
    let text = fs::read_to_string(snapshot)?;
    let state = read_snapshot(&text, &snapshot.display().to_string())?;
    let forcing = cfg.preset.forcing(cfg.epsilon());
    let u_dot = dudt_with(&state, forcing.as_ref());
    local_estimators_with(&state, &u_dot, cfg.epsilon(), forcing.as_ref())
}

fn latest_level_set(dir: &Path) -> Result<LevelSet> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("ls_") && n.ends_with(".txt"))
        })
        .collect();
    files.sort();
    let path = files
        .pop()
        .ok_or_else(|| Error::Precondition(format!("no ls_*.txt in {}", dir.display())))?;
    LevelSet::parse(&fs::read_to_string(&path)?, &path.display().to_string())
}

/// DOFs of the last non-redo block at time `t` in `blocks.csv`.
fn dofs_at(dir: &Path, t: f64) -> Result<usize> {
    let path = dir.join("blocks.csv");
    let name = path.display().to_string();
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |c: &str| {
        header.iter().position(|h| *h == c).ok_or_else(|| Error::Parse {
            source_name: name.clone(),
            line: 1,
            message: format!("missing column {c}"),
        })
    };
    let (ct, ca, cd) = (col("t")?, col("action")?, col("dofs")?);
    let mut found = None;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            source_name: name.clone(),
            line: i + 2,
            message: "malformed row".into(),
        };
        let row_t: f64 = f.get(ct).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let dofs: usize = f.get(cd).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if f.get(ca) != Some(&"refine+redo") && (row_t - t).abs() <= 1e-12 * (1.0 + t.abs()) {
            found = Some(dofs);
        }
    }
    found.ok_or_else(|| Error::Precondition(format!("{name} has no block at t = {t}")))
}

/// Rate study over run directories ordered by decreasing TOL, comparing
/// each run's latest level set.
pub fn rate_study_dirs(dirs: &[PathBuf]) -> Result<(Vec<RateSample>, RateStudy)> {
    let samples = dirs
        .iter()
        .map(|dir| {
            let cfg_path = dir.join("config.cfg");
            let cfg = parse_config(&fs::read_to_string(&cfg_path)?)?;
            let level_set = latest_level_set(dir)?;
            let dofs = dofs_at(dir, level_set.t)?;
            Ok(RateSample {
                tol: cfg.adapt.tol,
                epsilon: cfg.epsilon(),
                dofs,
                level_set,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let study = rate_study(&samples)?;
    Ok((samples, study))
}
