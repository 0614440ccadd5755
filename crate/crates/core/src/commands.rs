//! The command-line operations as pure functions: each returns the files to
//! write, the text for standard output and error, and an exit code. The
//! binary only parses arguments and writes the files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::project::{is_fatal, Project, ProjectError};
use crate::scenario::{
    enumerate_scenarios, merge_results, read_csv, render_table, run_scenarios, write_csv, ScenarioError, ScenarioSpec,
    BASELINE,
};
use crate::sched::{check_schedule, solve_best_case, CheckOptions, Mode, SolveOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Invalid = 1,
    Infeasible = 2,
    Internal = 3,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmdOutput {
    pub exit: Exit,
    /// Directory the files belong in.
    pub out_dir: PathBuf,
    /// File name and contents, written in order.
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    fn new(out_dir: PathBuf) -> Self {
        Self {
            exit: Exit::Ok,
            out_dir,
            files: Vec::new(),
            stdout: String::new(),
            stderr: String::new(),
        }
    }

    fn fail(exit: Exit, message: impl std::fmt::Display) -> Self {
        let mut o = Self::new(PathBuf::new());
        o.exit = exit;
        o.stderr = format!("error: {message}\n");
        o
    }

    fn file(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), body.into()));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

fn load(manifest: &Path, ov: &Overrides) -> Result<Project, CmdOutput> {
    let mut p = Project::load(manifest).map_err(|e| CmdOutput::fail(Exit::Invalid, e))?;
    if let Some(out) = &ov.out {
        // relative to the working directory, like any other flag
        p.manifest.out = std::env::current_dir()
            .map(|d| d.join(out))
            .unwrap_or_else(|_| out.clone());
    }
    if let Some(s) = ov.seed {
        p.manifest.seed = s;
    }
    if let Some(m) = ov.mode {
        p.manifest.solver.mode = m;
    }
    Ok(p)
}

fn graph_or_fail(p: &Project) -> Result<crate::graph::TaskGraph, CmdOutput> {
    let g = p.graph().map_err(|e| CmdOutput::fail(Exit::Invalid, e))?;
    let findings = p.static_findings(&g);
    if findings.iter().any(is_fatal) {
        let mut o = CmdOutput::fail(Exit::Invalid, "static checks failed");
        for f in &findings {
            let _ = writeln!(o.stderr, "  {f}");
        }
        return Err(o);
    }
    Ok(g)
}

fn grouped(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn cmd_validate(manifest: &Path, ov: &Overrides) -> CmdOutput {
    let p = match load(manifest, ov) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let mut o = CmdOutput::new(p.out_dir());
    let g = match p.graph() {
        Ok(g) => g,
        Err(e) => return CmdOutput::fail(Exit::Invalid, e),
    };
    let findings = p.static_findings(&g);
    for f in &findings {
        let sev = if is_fatal(f) { "error" } else { "warning" };
        let _ = writeln!(o.stderr, "{sev}: {f}");
    }
    if findings.iter().any(is_fatal) {
        o.exit = Exit::Invalid;
    } else {
        let _ = writeln!(
            o.stdout,
            "ok: {} flows, {} tasks, {} buffers, {} patterns",
            p.flows.defs.len(),
            g.tasks.len(),
            g.buffers.len(),
            p.catalog.len()
        );
    }
    o
}

pub fn cmd_elaborate(manifest: &Path, ov: &Overrides) -> CmdOutput {
    let p = match load(manifest, ov) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let g = match graph_or_fail(&p) {
        Ok(g) => g,
        Err(o) => return o,
    };
    let mut o = CmdOutput::new(p.out_dir());
    o.file("graph.json", g.to_json() + "\n");
    let _ = writeln!(o.stdout, "{} tasks, {} buffers", g.tasks.len(), g.buffers.len());
    o
}

pub fn cmd_solve(manifest: &Path, ov: &Overrides) -> CmdOutput {
    let p = match load(manifest, ov) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let g = match graph_or_fail(&p) {
        Ok(g) => g,
        Err(o) => return o,
    };
    let opts = p.manifest.solver.options();
    let out = match solve_best_case(&g, &p.topology, &p.catalog, &opts) {
        Ok(out) => out,
        Err(e) => return CmdOutput::fail(Exit::Invalid, e),
    };
    let mut o = CmdOutput::new(p.out_dir());
    let mut s = String::new();
    let _ = writeln!(s, "status: {}", out.status());
    let _ = writeln!(s, "seed: {}", p.manifest.seed);
    match &out {
        SolveOutcome::Infeasible { witness } => {
            let _ = writeln!(s, "infeasible: {witness}");
            o.exit = Exit::Infeasible;
        }
        SolveOutcome::Unknown { incumbent: None } => {
            let _ = writeln!(s, "no schedule found within the search budget");
            o.exit = Exit::Internal;
        }
        _ => {
            let sched = out.schedule().expect("feasible outcome has a schedule");
            let slot = g.deadline;
            if slot == u64::MAX {
                let _ = writeln!(s, "makespan: {} cycles (no deadline)", grouped(sched.makespan));
            } else {
                let _ = writeln!(
                    s,
                    "makespan: {} / {} = {:.2} of slot",
                    grouped(sched.makespan),
                    grouped(slot),
                    sched.makespan as f64 / slot as f64
                );
            }
            for (core, u) in sched.utilization(&p.topology) {
                let _ = writeln!(s, "core {core}: {:.1}% busy", u * 100.0);
            }
            let v = check_schedule(sched, &g, &p.topology, &p.catalog, &CheckOptions::default());
            if !v.is_empty() {
                for x in &v {
                    let _ = writeln!(o.stderr, "internal: solver schedule violates {x}");
                }
                o.exit = Exit::Internal;
            }
        }
    }
    o.file("schedule.json", out.to_json() + "\n");
    o.file("summary.txt", s.clone());
    o.stdout = s;
    o
}

/// Manifest scenarios plus, unless disabled, the built-in families.
pub fn scenario_specs(p: &Project, g: &crate::graph::TaskGraph) -> Vec<ScenarioSpec> {
    let builtin = p.manifest.builtin_scenarios.unwrap_or(p.scenarios.is_empty());
    let mut specs = if builtin {
        enumerate_scenarios(g, &p.catalog, &p.manifest.strategy)
    } else {
        Vec::new()
    };
    for s in &p.scenarios {
        if !specs.iter().any(|x| x.name == s.name) {
            specs.push(s.clone());
        }
    }
    specs
}

pub fn cmd_scenarios(manifest: &Path, ov: &Overrides) -> CmdOutput {
    let p = match load(manifest, ov) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let g = match graph_or_fail(&p) {
        Ok(g) => g,
        Err(o) => return o,
    };
    let specs = scenario_specs(&p, &g);
    let th = p.manifest.thresholds;
    let results = if specs.iter().all(|s| s.name == BASELINE) && p.manifest.builtin_scenarios == Some(false) {
        Ok(Vec::new())
    } else {
        run_scenarios(&specs, &g, &p.topology, &p.catalog, &p.manifest.solver.options(), &th)
    };
    let results = match results {
        Ok(r) => r,
        Err(ScenarioError::InfeasibleBaseline(w)) => {
            return CmdOutput::fail(Exit::Infeasible, format!("baseline is infeasible ({w})"));
        }
        Err(
            e @ (ScenarioError::Injection { .. }
            | ScenarioError::DuplicateName(_)
            | ScenarioError::UnknownBaseline { .. }),
        ) => {
            return CmdOutput::fail(Exit::Invalid, e);
        }
        Err(e) => return CmdOutput::fail(Exit::Internal, e),
    };
    let mut o = CmdOutput::new(p.out_dir());
    let table = render_table(&results, &th);
    o.file("scenarios.csv", write_csv(&results));
    o.file("scenarios.txt", table.clone());
    o.stdout = table;
    o
}

pub const REPORT_CSV: &str = "report.csv";

/// Merges every scenario CSV in the output directory other than the
/// report itself.
pub fn cmd_report(manifest: &Path, ov: &Overrides) -> CmdOutput {
    let p = match load(manifest, ov) {
        Ok(p) => p,
        Err(o) => return o,
    };
    let dir = p.out_dir();
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv") && p.file_name().is_some_and(|n| n != REPORT_CSV))
            .collect(),
        Err(e) => {
            return CmdOutput::fail(
                Exit::Invalid,
                ProjectError::Io {
                    path: dir,
                    message: e.to_string(),
                },
            )
        }
    };
    paths.sort();
    let mut sets = Vec::new();
    for path in &paths {
        let parsed = fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| read_csv(&t).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => sets.push(r),
            Err(e) => return CmdOutput::fail(Exit::Invalid, format!("{}: {e}", path.display())),
        }
    }
    let merged = match merge_results(&sets) {
        Ok(m) => m,
        Err(e) => return CmdOutput::fail(Exit::Invalid, e),
    };
    let mut o = CmdOutput::new(dir);
    let table = render_table(&merged, &p.manifest.thresholds);
    o.file(REPORT_CSV, write_csv(&merged));
    o.file("report.txt", table.clone());
    o.stdout = table;
    o
}
