use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdg_core::generate_structured;
use tempfile::TempDir;

fn hdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdg")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(extra);
    hdg(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().unwrap();
    (header, lines.collect())
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const POISSON: &str = "[problem]\ncase = \"poisson-smooth\"\nk = 1\n\n[mesh]\nlevels = [2, 4, 8, 16]\n";

#[test]
fn smooth_poisson_solve_writes_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", POISSON);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &["--level-override", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = read_csv(&out.join("solve.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "n")], "8");
    for e in ["e_u", "e_p", "e_trace"] {
        let v: f64 = rows[0][col(&h, e)].parse().unwrap();
        assert!(v > 0.0 && v < 0.2, "{e} = {v}");
    }
    let res: f64 = rows[0][col(&h, "residual")].parse().unwrap();
    assert!(res < 1e-10);
    assert!(out.join("solve_table.txt").exists());
}

#[test]
fn negative_tau_is_an_assembly_error_with_facet() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &format!("{POISSON}\n[stabilization]\ntau = -1.0\n"));
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("facet"), "{}", stderr(&o));
}

/// Parses `facet <f>` and `seen from cell <c>` out of the diagnostic.
fn named_facet(msg: &str) -> (usize, usize) {
    let after = |key: &str| -> usize {
        let s = &msg[msg.find(key).unwrap_or_else(|| panic!("`{key}` missing in: {msg}")) + key.len()..];
        s.chars().take_while(char::is_ascii_digit).collect::<String>().parse().unwrap()
    };
    (after("on facet "), after("seen from cell "))
}

#[test]
fn cdr_with_strong_inflow_names_the_violating_facet() {
    // tau = 1 and beta = (10, 0): every vertical facet has |beta.n| / 2 = 5 > tau on one side.
    let tmp = TempDir::new().unwrap();
    let text = "[problem]\ncase = \"cdr-smooth\"\nk = 1\nbeta = [10.0, 0.0]\n\n[mesh]\nlevels = [4]\n";
    let cfg = write_config(tmp.path(), "c.toml", text);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let (f, c) = named_facet(&stderr(&o));
    let mesh = generate_structured(4).unwrap();
    let l = (0..3).find(|&l| mesh.cell_facets[c][l].facet == f).expect("facet belongs to the cell");
    let n = mesh.outward_normal(c, l);
    assert!(1.0 - 0.5 * (10.0 * n[0]) <= 0.0, "facet {f} of cell {c} has normal {n:?}");
    assert!(!out_exists(&tmp.path().join("out")));
}

fn out_exists(p: &Path) -> bool {
    p.join("solve.csv").exists()
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &POISSON.replace("k = 1", "k = 1\ndegree = 2"));
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degree"));
    let o = run("solve", &tmp.path().join("missing.toml"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(hdg(&["solve"]).status.code(), Some(1));
}

#[test]
fn convergence_csv_has_full_precision_rates_and_hash() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &format!("{POISSON}\n[checks]\nrate_error = \"p\"\nmin_rate = 1.9\n"));
    let out = tmp.path().join("out");
    let o = run("convergence", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = read_csv(&out.join("convergence.csv"));
    assert_eq!(&h[..5], ["config_hash", "case", "k", "n", "h"]);
    for name in ["e_u", "e_p", "e_trace", "rate_u", "rate_p", "rate_trace"] {
        col(&h, name);
    }
    assert_eq!(rows.len(), 4);
    let hash = &rows[0][0];
    assert_eq!(hash.len(), 16);
    assert!(rows.iter().all(|r| &r[0] == hash));
    // 17 significant digits: one leading digit and 16 decimals.
    let e = &rows[2][col(&h, "e_p")];
    let mantissa = e.split('e').next().unwrap();
    assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{e}");
    // Rates recomputed from the written errors.
    assert_eq!(rows[0][col(&h, "rate_p")], "");
    for i in 1..4 {
        for name in ["u", "p", "trace"] {
            let a: f64 = rows[i - 1][col(&h, &format!("e_{name}"))].parse().unwrap();
            let b: f64 = rows[i][col(&h, &format!("e_{name}"))].parse().unwrap();
            let r: f64 = rows[i][col(&h, &format!("rate_{name}"))].parse().unwrap();
            assert!((r - (a / b).log2()).abs() < 1e-14);
        }
    }
    let plot = fs::read_to_string(out.join("convergence_u.dat")).unwrap();
    let data: Vec<&str> = plot.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 4);
    assert!(data.iter().all(|l| l.split_whitespace().count() == 2));
    assert!(plot.contains(hash.as_str()));
}

#[test]
fn rate_below_threshold_exits_4_after_writing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &format!("{POISSON}\n[checks]\nrate_error = \"p\"\nmin_rate = 2.5\n"));
    let out = tmp.path().join("out");
    let o = run("convergence", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("rate of p"));
    assert!(out.join("convergence.csv").exists());
}

#[test]
fn lshape_flux_rate_lies_in_configured_band() {
    // p = r^(2/3) sin(2 theta / 3) has u = -grad p in H^(2/3 - eps); the flux rate approaches 2/3.
    let tmp = TempDir::new().unwrap();
    let text = "[problem]\ncase = \"poisson-lshape\"\nk = 1\n\n[mesh]\nlevels = [2, 4, 8, 16]\n\n\
                [checks]\nerror_bounds = true\nrate_error = \"u\"\nmin_rate = 0.52\nmax_rate = 0.82\n";
    let cfg = write_config(tmp.path(), "l.toml", text);
    let out = tmp.path().join("out");
    let o = run("convergence", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = read_csv(&out.join("convergence.csv"));
    assert!(rows.iter().all(|r| r[col(&h, "bounds_hold")] == "true"));
    let narrow = write_config(tmp.path(), "n.toml", &text.replace("max_rate = 0.82", "max_rate = 0.6"));
    assert_eq!(run("convergence", &narrow, &out, &[]).status.code(), Some(4));
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &format!("{POISSON}\n[checks]\ninf_sup = true\nmonolithic = true\n"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run("convergence", &cfg, out, &["--level-override", "8"]).status.code(), Some(0));
        assert_eq!(run("infsup", &cfg, out, &["--seed", "3", "--level-override", "4"]).status.code(), Some(0));
    }
    for f in ["convergence.csv", "convergence_table.txt", "convergence_p.dat", "infsup.csv", "infsup_gamma.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (_, rows) = read_csv(&a.join("convergence.csv"));
    assert_eq!(rows.len(), 3);
    // The seed is part of the provenance hash.
    let c = tmp.path().join("c");
    assert_eq!(run("infsup", &cfg, &c, &["--seed", "4", "--level-override", "4"]).status.code(), Some(0));
    let (_, three) = read_csv(&a.join("infsup.csv"));
    let (_, four) = read_csv(&c.join("infsup.csv"));
    assert_ne!(three[0][0], four[0][0]);
}

#[test]
fn infsup_csv_reports_each_level() {
    let tmp = TempDir::new().unwrap();
    let text = "[problem]\ncase = \"stokes-smooth\"\nk = 1\n\n[mesh]\nlevels = [2, 4]\n\n[checks]\ninf_sup_method = \"dense\"\n";
    let cfg = write_config(tmp.path(), "s.toml", text);
    let out = tmp.path().join("out");
    let o = run("infsup", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = read_csv(&out.join("infsup.csv"));
    assert_eq!(rows.len(), 2);
    let g: Vec<f64> = rows.iter().map(|r| r[col(&h, "gamma")].parse().unwrap()).collect();
    assert!(g.iter().all(|g| *g > 0.0 && *g <= 1.0 + 1e-12));
    let ratio: f64 = rows[1][col(&h, "ratio")].parse().unwrap();
    assert!((ratio - g[1] / g[0]).abs() < 1e-15);
    assert!(rows.iter().all(|r| r[col(&h, "method")] == "dense"));
}

#[test]
fn generated_meshes_can_be_inspected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "p.toml", &POISSON.replace("poisson-smooth", "poisson-mixed"));
    let out = tmp.path().join("out");
    let o = hdg(&["mesh", "generate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (h, rows) = read_csv(&out.join("mesh.csv"));
    assert_eq!(rows.len(), 4);
    let last = &rows[3];
    assert_eq!(last[col(&h, "cells")], "512");
    assert!(last[col(&h, "neumann")].parse::<usize>().unwrap() > 0);
    let o = hdg(&["mesh", "inspect", out.join("mesh_n16.hdgmesh").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (hi, ri) = read_csv(&out.join("mesh_inspect.csv"));
    for name in ["vertices", "cells", "facets", "interior", "dirichlet", "neumann", "area"] {
        assert_eq!(ri[0][col(&hi, name)], last[col(&h, name)], "{name}");
    }
    let broken = write_config(tmp.path(), "broken.hdgmesh", "hdgmesh 1\nvertices 1\n0 0\n");
    assert_eq!(hdg(&["mesh", "inspect", broken.to_str().unwrap()]).status.code(), Some(1));
}
