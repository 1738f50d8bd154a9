//! Subcommand implementations. Each writes its files under the output directory and returns the
//! rendered display table.

use std::fs;
use std::path::{Path, PathBuf};

use hdg_core::analysis::{estimate_inf_sup, run_convergence_study, solution_errors, StudyOptions, StudyReport};
use hdg_core::cdr::verify_convection_identity;
use hdg_core::mesh::{load_mesh, save_mesh};
use hdg_core::oseen::verify_oseen_identity;
use hdg_core::solver::{condense, solve_condensed, solve_monolithic};
use hdg_core::{Equation, FacetTag, HdgError, Mesh};
use sha2::{Digest, Sha256};

use crate::config::StudyConfig;
use crate::report::{ensure_dir, write_plot_data, write_text, Cell, Table};
use crate::CliError;

/// Random trials per identity check in `solve`.
const IDENTITY_TRIALS: usize = 20;

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub level_override: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Convergence,
    InfSup,
    MeshGenerate,
}

/// Reads, overrides and validates a configuration.
///
/// `--level-override n` replaces the levels by `[n]`, except for `convergence`, where it drops
/// every configured level above `n`.
pub fn load_config(path: &Path, ov: &Overrides, cmd: Command) -> Result<StudyConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HdgError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = StudyConfig::parse(&text)?;
    if let Some(dir) = &ov.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = ov.seed {
        cfg.checks.seed = seed;
    }
    if let Some(n) = ov.level_override {
        cfg.mesh.levels = match cmd {
            Command::Convergence => cfg.mesh.levels.iter().copied().filter(|&l| l <= n).collect(),
            _ => vec![n],
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finest(cfg: &StudyConfig) -> usize {
    *cfg.mesh.levels.last().expect("validated levels are non-empty")
}

fn stem(cfg: &StudyConfig) -> Vec<Cell> {
    vec![Cell::Text(cfg.problem.case.clone()), Cell::Int(cfg.problem.k)]
}

fn finish(cfg: &StudyConfig, name: &str, table: &Table) -> Result<String, CliError> {
    let dir = &cfg.output.dir;
    ensure_dir(dir)?;
    table.write_csv(&dir.join(format!("{name}.csv")))?;
    let shown = table.render();
    write_text(&dir.join(format!("{name}_table.txt")), &shown)?;
    Ok(shown)
}

/// Solves the finest configured level and writes `solve.csv`.
pub fn cmd_solve(cfg: &StudyConfig) -> Result<String, CliError> {
    let case = cfg.case()?;
    let k = cfg.problem.k;
    let stab = cfg.stabilization();
    let n = finest(cfg);
    let mesh = case.mesh(n)?;
    let sys = case.assemble(&mesh, k, stab)?;
    let cs = condense(&sys)?;
    let sol = solve_condensed(&sys, &cs)?;
    let gap = if cfg.checks.monolithic {
        let mono = solve_monolithic(&sys)?.solution;
        let scale = mono.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        Some(mono.iter().zip(&sol.solution).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale)
    } else {
        None
    };
    let seed = cfg.checks.seed;
    let identity = match case.equation {
        Equation::Cdr => Some(verify_convection_identity(&mesh, &case.beta, &case.div_beta, &case.reaction, k, IDENTITY_TRIALS, seed)?),
        Equation::Oseen => Some(verify_oseen_identity(&mesh, &case.beta, k, IDENTITY_TRIALS, seed)?),
        _ => None,
    };
    let names = hdg_core::analysis::error_names(case.equation);
    let errors: Vec<Option<f64>> = if cfg.has_overrides() {
        vec![None; names.len()]
    } else {
        let norm = case.norm(&mesh, sys.layout.clone(), stab);
        solution_errors(&case, &norm, &sol.solution, &sys.dirichlet_values).into_iter().map(Some).collect()
    };

    let mut header = vec!["case", "k", "n", "h", "dofs", "condensed_dofs", "factorization", "residual", "monolithic_gap", "identity_gap"];
    let error_cols: Vec<String> = names.iter().map(|e| format!("e_{e}")).collect();
    header.extend(error_cols.iter().map(String::as_str));
    let mut table = Table::new(&cfg.hash(), &header);
    let mut row = stem(cfg);
    row.extend([
        Cell::Int(n),
        Cell::Num(Some(mesh.max_h())),
        Cell::Int(sys.dim()),
        Cell::Int(cs.dim()),
        Cell::Text(format!("{:?}", sol.factorization).to_lowercase()),
        Cell::Num(Some(sol.residual)),
        Cell::Num(gap),
        Cell::Num(identity),
    ]);
    row.extend(errors.into_iter().map(Cell::Num));
    table.push(row);
    finish(cfg, "solve", &table)
}

fn check_study(cfg: &StudyConfig, report: &StudyReport) -> Result<(), CliError> {
    let mut failures = Vec::new();
    if let Some(name) = &cfg.checks.rate_error {
        match report.last_rate(name) {
            Some(r) => {
                let lo = cfg.checks.min_rate.unwrap_or(f64::NEG_INFINITY);
                let hi = cfg.checks.max_rate.unwrap_or(f64::INFINITY);
                if !(r >= lo && r <= hi) {
                    failures.push(format!("last-pair rate of {name} is {r:.4}, outside [{lo}, {hi}]"));
                }
            }
            None => failures.push(format!("no last-pair rate for {name}: the two finest levels are not a uniform refinement")),
        }
    }
    for l in &report.levels {
        for c in l.bounds.iter().flat_map(|b| &b.checks) {
            if !c.unit_constant && !c.holds() {
                failures.push(format!("n={}: {} {:.6e} > {:.6e}", l.n, c.name, c.lhs, c.rhs));
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failures.join("; ")))
    }
}

/// Convergence study over the configured levels: `convergence.csv`, the display table, plot data,
/// then the configured rate band and bound checks.
pub fn cmd_convergence(cfg: &StudyConfig) -> Result<String, CliError> {
    if cfg.has_overrides() {
        return Err(HdgError::Config("coefficient overrides leave no exact solution to measure errors against".into()).into());
    }
    let case = cfg.case()?;
    let mut opts = StudyOptions::new(cfg.mesh.levels.clone());
    opts.stab = cfg.stabilization();
    opts.inf_sup = cfg.checks.inf_sup || cfg.checks.error_bounds;
    opts.check_monolithic = cfg.checks.monolithic;
    opts.verify_bounds = cfg.checks.error_bounds;
    opts.seed = cfg.checks.seed;
    let report = run_convergence_study(&case, cfg.problem.k, &opts)?;

    let names = &report.error_names;
    let e_cols: Vec<String> = names.iter().map(|e| format!("e_{e}")).collect();
    let r_cols: Vec<String> = names.iter().map(|e| format!("rate_{e}")).collect();
    let mut header = vec!["case", "k", "n", "h", "dofs", "condensed_dofs", "residual"];
    header.extend(e_cols.iter().map(String::as_str));
    header.extend(r_cols.iter().map(String::as_str));
    if opts.inf_sup {
        header.push("gamma");
    }
    if opts.check_monolithic {
        header.push("monolithic_gap");
    }
    if opts.verify_bounds {
        header.extend(["projection_residual", "bound_ratio", "bounds_hold"]);
    }
    let mut table = Table::new(&cfg.hash(), &header);
    let rates = report.rates();
    for (i, l) in report.levels.iter().enumerate() {
        let mut row = stem(cfg);
        row.extend([Cell::Int(l.n), Cell::Num(Some(l.h)), Cell::Int(l.dofs), Cell::Int(l.condensed_dofs), Cell::Num(Some(l.residual))]);
        row.extend(l.errors.iter().map(|e| Cell::Num(Some(*e))));
        let r = if i == 0 { None } else { rates[i - 1].as_ref() };
        row.extend((0..names.len()).map(|j| Cell::Rate(r.map(|r| r[j]))));
        if opts.inf_sup {
            row.push(Cell::Num(l.gamma));
        }
        if opts.check_monolithic {
            row.push(Cell::Num(l.monolithic_gap));
        }
        if opts.verify_bounds {
            row.push(Cell::Num(l.projection_residual));
            let ratio = l.bounds.as_ref().map(|b| {
                b.checks.iter().filter(|c| !c.unit_constant).fold(0.0f64, |m, c| m.max(c.lhs / c.rhs.max(f64::MIN_POSITIVE)))
            });
            row.push(Cell::Num(ratio));
            let hold = l.bounds.as_ref().map(|b| b.checks.iter().all(|c| c.unit_constant || c.holds()).to_string());
            row.push(Cell::Text(hold.unwrap_or_default()));
        }
        table.push(row);
    }
    let shown = finish(cfg, "convergence", &table)?;
    if cfg.output.plot_data {
        for (j, name) in names.iter().enumerate() {
            let pts: Vec<(f64, f64)> = report.levels.iter().map(|l| (l.h, l.errors[j])).collect();
            write_plot_data(&cfg.output.dir.join(format!("convergence_{name}.dat")), &cfg.hash(), &format!("e_{name}"), &pts)?;
        }
    }
    check_study(cfg, &report)?;
    Ok(shown)
}

/// `gamma_h` on every configured level: `infsup.csv`, the display table and plot data.
pub fn cmd_infsup(cfg: &StudyConfig) -> Result<String, CliError> {
    let case = cfg.case()?;
    let stab = cfg.stabilization();
    let method = cfg.inf_sup_method()?;
    let mut table = Table::new(&cfg.hash(), &["case", "k", "n", "h", "dim", "method", "iterations", "gamma", "ratio"]);
    let mut prev: Option<f64> = None;
    let mut pts = Vec::new();
    for &n in &cfg.mesh.levels {
        let mesh = case.mesh(n)?;
        let sys = case.assemble(&mesh, cfg.problem.k, stab)?;
        let norm = case.norm(&mesh, sys.layout.clone(), stab);
        let est = estimate_inf_sup(&sys, &norm, method, cfg.checks.seed)?;
        let mut row = stem(cfg);
        row.extend([
            Cell::Int(n),
            Cell::Num(Some(mesh.max_h())),
            Cell::Int(est.dim),
            Cell::Text(format!("{:?}", est.method).to_lowercase()),
            Cell::Int(est.iterations),
            Cell::Num(Some(est.gamma)),
            Cell::Rate(prev.map(|p| est.gamma / p)),
        ]);
        table.push(row);
        prev = Some(est.gamma);
        pts.push((mesh.max_h(), est.gamma));
    }
    let shown = finish(cfg, "infsup", &table)?;
    if cfg.output.plot_data {
        write_plot_data(&cfg.output.dir.join("infsup_gamma.dat"), &cfg.hash(), "gamma", &pts)?;
    }
    Ok(shown)
}

fn mesh_row(mesh: &Mesh) -> Vec<Cell> {
    let h_min = mesh.h_cell.iter().cloned().fold(f64::INFINITY, f64::min);
    vec![
        Cell::Int(mesh.vertices.len()),
        Cell::Int(mesh.num_cells()),
        Cell::Int(mesh.num_facets()),
        Cell::Int(mesh.count_tag(FacetTag::Interior)),
        Cell::Int(mesh.count_tag(FacetTag::Dirichlet)),
        Cell::Int(mesh.count_tag(FacetTag::Neumann)),
        Cell::Num(Some(mesh.max_h())),
        Cell::Num(Some(h_min)),
        Cell::Num(Some(mesh.domain_area)),
    ]
}

const MESH_COLUMNS: [&str; 9] = ["vertices", "cells", "facets", "interior", "dirichlet", "neumann", "h_max", "h_min", "area"];

/// Writes the case mesh of every level as `mesh_n<n>.hdgmesh` plus `mesh.csv`.
pub fn cmd_mesh_generate(cfg: &StudyConfig) -> Result<String, CliError> {
    let case = cfg.case()?;
    let mut header = vec!["case", "n"];
    header.extend(MESH_COLUMNS);
    let mut table = Table::new(&cfg.hash(), &header);
    ensure_dir(&cfg.output.dir)?;
    for &n in &cfg.mesh.levels {
        let mesh = case.mesh(n)?;
        mesh.check_invariants()?;
        write_text(&cfg.output.dir.join(format!("mesh_n{n}.hdgmesh")), &save_mesh(&mesh))?;
        let mut row = vec![Cell::Text(cfg.problem.case.clone()), Cell::Int(n)];
        row.extend(mesh_row(&mesh));
        table.push(row);
    }
    finish(cfg, "mesh", &table)
}

/// Loads a mesh file, checks its invariants and summarizes it; writes `mesh_inspect.csv` when
/// `out` is given. The hash column is the SHA-256 prefix of the file.
pub fn cmd_mesh_inspect(path: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HdgError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mesh = load_mesh(&text)?;
    mesh.check_invariants()?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()))[..16].to_string();
    let mut table = Table::new(&hash, &MESH_COLUMNS);
    table.push(mesh_row(&mesh));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        table.write_csv(&dir.join("mesh_inspect.csv"))?;
    }
    Ok(table.render())
}
