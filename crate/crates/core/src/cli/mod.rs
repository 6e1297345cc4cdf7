//! Command-line front end: `check`, `solve`, `verify` and `catalog`.
//!
//! Exit codes: 0 on success, 1 when the mathematics says no (map not
//! admissible or not free, rank loss, failed verification), 2 for bad input
//! (parse, I/O, grid or file errors).

pub mod catalog;
pub mod fieldfile;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid};
use crate::jetcalc::{
    n_pairs, pairs, parse_expr, parse_expr_list, parse_map_spec, MapSpec, DEFAULT_RANK_TOL,
};
use crate::kernelfield::{admissibility_with, AdmissibilityReport, DEFAULT_ADM_TOL};
use crate::linsolve::{solve_auto, symtensor_from_fn, LinearizedSolution, SolverOptions};
use crate::verify::{richardson_check, verify_solution, VerificationReport};

use catalog::{lookup, CatalogEntry, Expectation};
use fieldfile::{read_field, write_field};

pub const DEFAULT_GRID_N: usize = 33;
pub const DEFAULT_VERIFY_FACTOR: f64 = 50.0;

#[derive(Debug, Parser)]
#[command(
    name = "pullback",
    version,
    about = "Invert the linearized pullback-metric operator on a grid"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a map for admissibility and report the transversal coordinate.
    Check(CheckArgs),
    /// Solve the linearized equation for a metric perturbation.
    Solve(SolveArgs),
    /// Check a perturbation field against the linearized operator.
    Verify(VerifyArgs),
    /// List or emit the built-in examples.
    Catalog(CatalogArgs),
}

#[derive(Debug, Clone, Args)]
#[group(id = "map_source", required = true, multiple = false)]
pub struct MapArgs {
    /// Map-spec file: `m=2,q=4; x1; x2; x1^2; x1*x2` (`#` starts a comment line).
    #[arg(long, value_name = "FILE", group = "map_source")]
    pub map: Option<PathBuf>,
    /// Inline map; the `m=..,q=..;` header may be omitted.
    #[arg(long, value_name = "EXPRS", group = "map_source")]
    pub map_expr: Option<String>,
    /// Built-in example (see `catalog --list`).
    #[arg(long, value_name = "NAME", group = "map_source")]
    pub catalog: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct DropArgs {
    /// Quadratic component dropped by `fpi-m<k>` entries, as a one-based pair `i,j`.
    #[arg(long, value_name = "I,J")]
    pub drop: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Nodes per axis, `n` or `n1,..,nm`.
    #[arg(long, value_name = "N")]
    pub grid: Option<String>,
    /// Box bounds, `a,b` or `a1,b1,..,am,bm`.
    #[arg(long, value_name = "A,B", allow_hyphen_values = true)]
    pub bounds: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TolArgs {
    /// Minimum accepted sigma_q / sigma_1 of the coefficient matrix.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Minimum accepted transversality.
    #[arg(long, default_value_t = DEFAULT_ADM_TOL)]
    pub adm_tol: f64,
    /// Force the transversal coordinate (one-based).
    #[arg(long, value_name = "K")]
    pub alpha0: Option<usize>,
}

#[derive(Debug, Clone, Args)]
#[group(id = "dg_source", multiple = false)]
pub struct DgArgs {
    /// Metric perturbation as a symtensor field file.
    #[arg(long, value_name = "FILE", group = "dg_source")]
    pub dg: Option<PathBuf>,
    /// Metric perturbation as `m(m+1)/2` expressions in `(a <= b)` order.
    #[arg(
        long,
        value_name = "EXPRS",
        group = "dg_source",
        allow_hyphen_values = true
    )]
    pub dg_expr: Option<String>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub drop: DropArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    /// Write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub drop: DropArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub tol: TolArgs,
    #[command(flatten)]
    pub dg: DgArgs,
    /// Pointwise residual tolerance (default 50 h^2 max(|dg|, 1)).
    #[arg(long)]
    pub solve_tol: Option<f64>,
    /// Characteristic sub-step as a fraction of the grid spacing.
    #[arg(long, default_value_t = 0.5)]
    pub substep: f64,
    /// Vector field file for the solution.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Scalar field file for the transport solution (default `<out>.h.json`).
    #[arg(long, value_name = "PATH")]
    pub h_out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub drop: DropArgs,
    #[command(flatten)]
    pub dg: DgArgs,
    /// Vector field file to check.
    #[arg(long, value_name = "FILE")]
    pub df: PathBuf,
    /// Pass threshold on the sup-norm residual (default 50 h^2).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Also measure the nonlinear defect for the listed `t` values.
    #[arg(long, value_name = "T1,T2,..", num_args = 0..=1, default_missing_value = "1e-2,5e-3,2.5e-3")]
    pub richardson: Option<String>,
    /// Write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[group(id = "catalog_action", required = true, multiple = false)]
pub struct CatalogArgs {
    /// List entries with their expected outcomes.
    #[arg(long, group = "catalog_action")]
    pub list: bool,
    /// Print (or with --out, write) the inputs of one entry.
    #[arg(long, value_name = "NAME", group = "catalog_action")]
    pub emit: Option<String>,
    #[command(flatten)]
    pub drop: DropArgs,
    /// Directory receiving `<name>.map` and `<name>.dg.json`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotAdmissible(_)
        | Error::NotFree(_)
        | Error::RankDeficient { .. }
        | Error::TransversalityLost { .. }
        | Error::SignAmbiguous { .. } => 1,
        _ => 2,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check(a) => cmd_check(&a, out),
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Catalog(a) => cmd_catalog(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run() -> i32 {
    run_with(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}

fn parse_drop(d: &DropArgs) -> Result<Option<(usize, usize)>> {
    let Some(s) = &d.drop else { return Ok(None) };
    let v = parse_usize_list(s, "--drop")?;
    match v.as_slice() {
        [i, j] if *i >= 1 && *j >= 1 => Ok(Some((i - 1, j - 1))),
        _ => Err(Error::Options(format!(
            "--drop expects two one-based indices, got `{s}`"
        ))),
    }
}

fn parse_usize_list(s: &str, flag: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Options(format!("bad integer `{t}` in {flag}")))
        })
        .collect()
}

fn parse_f64_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Options(format!("bad number `{t}` in {flag}")))
        })
        .collect()
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a map with or without its header; without one, `m` is the largest
/// variable index used and `q` the number of components.
pub fn parse_inline_map(text: &str) -> Result<MapSpec> {
    let text = strip_comments(text);
    let first = text.split(';').next().unwrap_or("");
    if first.contains('=') {
        return parse_map_spec(&text);
    }
    let mut m = 0;
    let mut q = 0;
    for part in text.split(';').filter(|p| !p.trim().is_empty()) {
        q += 1;
        if let Some(v) = parse_expr(part)?.max_var() {
            m = m.max(v + 1);
        }
    }
    if m == 0 {
        return Err(Error::Arity(
            "cannot infer m from a map without variables; add an `m=..,q=..;` header".into(),
        ));
    }
    parse_map_spec(&format!("m={m},q={q}; {text}"))
}

struct Source {
    spec: MapSpec,
    entry: Option<CatalogEntry>,
}

fn load_map(args: &MapArgs, drop: &DropArgs) -> Result<Source> {
    let drop = parse_drop(drop)?;
    if let Some(path) = &args.map {
        let spec = parse_map_spec(&strip_comments(&fs::read_to_string(path)?))?;
        return Ok(Source { spec, entry: None });
    }
    if let Some(text) = &args.map_expr {
        return Ok(Source {
            spec: parse_inline_map(text)?,
            entry: None,
        });
    }
    let name = args
        .catalog
        .as_deref()
        .ok_or_else(|| Error::Options("no map given".into()))?;
    let entry = lookup(name, drop)?;
    Ok(Source {
        spec: entry.spec(),
        entry: Some(entry),
    })
}

fn expand_axes<T: Copy>(values: Vec<T>, m: usize, per_axis: usize, flag: &str) -> Result<Vec<T>> {
    if values.len() == per_axis {
        Ok(values.iter().cycle().take(per_axis * m).copied().collect())
    } else if values.len() == per_axis * m {
        Ok(values)
    } else {
        Err(Error::Options(format!(
            "{flag} needs {per_axis} or {} values for m = {m}, got {}",
            per_axis * m,
            values.len()
        )))
    }
}

/// Grid from the flags, falling back to `default_n` nodes on `[-1, 1]^m`.
fn grid_from_flags(g: &GridArgs, m: usize, default_n: usize) -> Result<Grid> {
    let counts = match &g.grid {
        Some(s) => expand_axes(parse_usize_list(s, "--grid")?, m, 1, "--grid")?,
        None => vec![default_n; m],
    };
    let bounds = match &g.bounds {
        Some(s) => {
            let v = expand_axes(parse_f64_list(s, "--bounds")?, m, 2, "--bounds")?;
            v.chunks(2).map(|c| (c[0], c[1])).collect()
        }
        None => vec![(-1.0, 1.0); m],
    };
    Grid::new(bounds, counts)
}

/// Uses the grid of an input file when there is one; explicit flags must
/// then agree with it.
fn resolve_grid(
    g: &GridArgs,
    m: usize,
    default_n: usize,
    from_file: Option<&Grid>,
) -> Result<Grid> {
    match from_file {
        None => grid_from_flags(g, m, default_n),
        Some(fg) => {
            if fg.dim() != m {
                return Err(Error::GridMismatch(format!(
                    "field file has m = {}, map has m = {m}",
                    fg.dim()
                )));
            }
            if g.grid.is_some() || g.bounds.is_some() {
                let flagged = grid_from_flags(g, m, default_n)?;
                let counts_ok = g.grid.is_none() || flagged.counts() == fg.counts();
                let bounds_ok = g.bounds.is_none() || flagged.bounds() == fg.bounds();
                if !counts_ok || !bounds_ok {
                    return Err(Error::GridMismatch(
                        "--grid/--bounds disagree with the field file".into(),
                    ));
                }
            }
            Ok(fg.clone())
        }
    }
}

fn dg_from_exprs(text: &str, grid: &Grid) -> Result<Field> {
    let m = grid.dim();
    let exprs = parse_expr_list(text, m)?;
    if exprs.len() != n_pairs(m) {
        return Err(Error::Arity(format!(
            "dg needs {} expressions for m = {m}, got {}",
            n_pairs(m),
            exprs.len()
        )));
    }
    symtensor_from_fn(grid, |x| exprs.iter().map(|e| e.eval(x)).collect())
}

fn read_dg_file(path: &Path, m: usize) -> Result<Field> {
    let f = read_field(path)?;
    if f.kind() != FieldKind::Symtensor || f.grid().dim() != m {
        return Err(Error::Field(format!(
            "{} must hold a symtensor field with m = {m}",
            path.display()
        )));
    }
    Ok(f)
}

/// Resolves the perturbation: a file, expressions, or the catalog reference.
fn load_dg(dg: &DgArgs, file: Option<Field>, src: &Source, grid: &Grid) -> Result<Field> {
    if let Some(f) = file {
        if f.grid() != grid {
            return Err(Error::GridMismatch(
                "dg file lives on a different grid".into(),
            ));
        }
        return Ok(f);
    }
    if let Some(text) = &dg.dg_expr {
        return dg_from_exprs(text, grid);
    }
    match &src.entry {
        Some(e) => dg_from_exprs(&e.dg, grid),
        None => Err(Error::Options("no dg given; use --dg or --dg-expr".into())),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn describe_grid(grid: &Grid) -> String {
    let counts: Vec<String> = grid.counts().iter().map(|n| n.to_string()).collect();
    let boxes: Vec<String> = grid
        .bounds()
        .iter()
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect();
    format!("{} on {}", counts.join(" x "), boxes.join(" x "))
}

fn admissibility_json(r: &AdmissibilityReport) -> serde_json::Value {
    let mut v = serde_json::to_value(r).expect("report serializes");
    v["alpha0_coordinate"] = json!(r.alpha0.map(|a| a + 1));
    v
}

fn check_text(spec: &MapSpec, grid: &Grid, r: &AdmissibilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "map         {spec}  (m = {}, q = {})", r.m, r.q);
    let _ = writeln!(s, "grid        {}", describe_grid(grid));
    let _ = writeln!(s, "critical    {}", if r.critical { "yes" } else { "no" });
    if r.critical {
        let _ = writeln!(
            s,
            "rank        min sigma_q/sigma_1 = {:.3e} at node {:?} ({})",
            r.worst_sigma_ratio,
            r.worst_node,
            fmt_vec(&r.worst_point)
        );
        if !r.transversality.is_empty() {
            let t: Vec<String> = r
                .transversality
                .iter()
                .enumerate()
                .map(|(a, v)| format!("x{}: {v:.3e}", a + 1))
                .collect();
            let _ = writeln!(s, "transversal {}", t.join(", "));
        }
        if let Some(a) = r.alpha0 {
            let tag = if r.alpha0_overridden { " (forced)" } else { "" };
            let _ = writeln!(s, "alpha0      x{}{tag}", a + 1);
        }
    }
    if let Some(reason) = &r.reason {
        let _ = writeln!(s, "reason      {reason}");
    }
    let _ = writeln!(
        s,
        "verdict     {}",
        if r.verdict {
            "admissible"
        } else {
            "not admissible"
        }
    );
    s
}

fn alpha0_override(t: &TolArgs, m: usize) -> Result<Option<usize>> {
    match t.alpha0 {
        None => Ok(None),
        Some(k) if (1..=m).contains(&k) => Ok(Some(k - 1)),
        Some(k) => Err(Error::Options(format!("--alpha0 {k} out of range 1..={m}"))),
    }
}

fn cmd_check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32> {
    let src = load_map(&a.map, &a.drop)?;
    let m = src.spec.m();
    let default_n = src.entry.as_ref().map_or(DEFAULT_GRID_N, |e| e.grid_n);
    let grid = grid_from_flags(&a.grid, m, default_n)?;
    let report = admissibility_with(
        &src.spec,
        &grid,
        a.tol.rank_tol,
        a.tol.adm_tol,
        alpha0_override(&a.tol, m)?,
    )?;
    let js = admissibility_json(&report);
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&js)? + "\n")?;
    }
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&js)?)?;
    } else {
        write!(out, "{}", check_text(&src.spec, &grid, &report))?;
    }
    Ok(if report.verdict { 0 } else { 1 })
}

/// Sup-norm difference to a closed-form solution over nodes one stencil
/// away from every face.
pub fn closed_form_error(df: &Field, exprs: &str) -> Result<f64> {
    let grid = df.grid();
    let exprs = parse_expr_list(exprs, grid.dim())?;
    let mut err: f64 = 0.0;
    for p in grid.interior_nodes() {
        let x = grid.point(p);
        for (e, v) in exprs.iter().zip(df.at(p)) {
            err = err.max((e.eval(&x)? - v).abs());
        }
    }
    Ok(err)
}

fn solve_text(
    spec: &MapSpec,
    grid: &Grid,
    sol: &LinearizedSolution,
    closed: Option<f64>,
) -> String {
    let r = &sol.report;
    let mut s = String::new();
    let _ = writeln!(s, "map         {spec}  (m = {}, q = {})", r.m, r.q);
    let _ = writeln!(s, "grid        {}", describe_grid(grid));
    let _ = writeln!(s, "branch      {:?}", r.branch);
    if let Some(a) = r.alpha0 {
        let _ = writeln!(s, "alpha0      x{}", a + 1);
        let _ = writeln!(
            s,
            "exited      {:.3}% of characteristics",
            100.0 * r.exited_fraction
        );
    }
    let _ = writeln!(
        s,
        "residual    max {:.3e}, interior {:.3e}, tol {:.3e}",
        r.max_residual, r.max_interior_residual, r.solve_tol
    );
    if let Some(w) = &r.quality_warning {
        let _ = writeln!(s, "warning     {w}");
    }
    if !r.consistent {
        let _ = writeln!(s, "warning     pointwise residual exceeds the tolerance");
    }
    if let Some(e) = closed {
        let _ = writeln!(s, "closed form max interior error {e:.3e}");
    }
    s
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let src = load_map(&a.map, &a.drop)?;
    let m = src.spec.m();
    let file = a.dg.dg.as_deref().map(|p| read_dg_file(p, m)).transpose()?;
    let default_n = src.entry.as_ref().map_or(DEFAULT_GRID_N, |e| e.grid_n);
    let grid = resolve_grid(&a.grid, m, default_n, file.as_ref().map(Field::grid))?;
    let dg = load_dg(&a.dg, file, &src, &grid)?;
    let opts = SolverOptions {
        rank_tol: a.tol.rank_tol,
        adm_tol: a.tol.adm_tol,
        solve_tol: a.solve_tol,
        alpha0_override: alpha0_override(&a.tol, m)?,
        substep_factor: a.substep,
    };
    let sol = solve_auto(&src.spec, &dg, &grid, &opts)?;

    // The closed forms assume the reference perturbation on [-1, 1]^m.
    let reference = a.dg.dg.is_none() && a.dg.dg_expr.is_none() && a.grid.bounds.is_none();
    let closed = match src.entry.as_ref().and_then(|e| e.closed_form_df.as_ref()) {
        Some(exprs) if reference => Some(closed_form_error(&sol.df.field, exprs)?),
        _ => None,
    };

    if let Some(p) = &a.out {
        write_field(p, &sol.df.field, None)?;
        if let Some(h) = &sol.h {
            let hp = a
                .h_out
                .clone()
                .unwrap_or_else(|| p.with_extension("h.json"));
            write_field(&hp, h, Some(src.spec.q()))?;
        }
    } else if let (Some(hp), Some(h)) = (&a.h_out, &sol.h) {
        write_field(hp, h, Some(src.spec.q()))?;
    }

    if a.json {
        let mut v = serde_json::to_value(&sol.report)?;
        v["alpha0_coordinate"] = json!(sol.report.alpha0.map(|a| a + 1));
        v["closed_form_error"] = json!(closed);
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        write!(out, "{}", solve_text(&src.spec, &grid, &sol, closed))?;
    }
    Ok(0)
}

fn verify_text(r: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "interior nodes {}", r.interior_nodes);
    for c in &r.components {
        let _ = writeln!(
            s,
            "  L(df) - dg  [{},{}]  {:.3e}",
            c.pair.0, c.pair.1, c.inf
        );
    }
    let _ = writeln!(
        s,
        "residual    sup {:.3e}, l2 {:.3e}, tol {:.3e}",
        r.lin_residual_inf, r.lin_residual_l2, r.tol
    );
    if let Some(rr) = &r.richardson {
        for (k, (t, e)) in rr.t.iter().zip(&rr.errors).enumerate() {
            let ratio = match k.checked_sub(1).and_then(|j| rr.ratios.get(j)) {
                Some(Some(q)) => format!("  ratio {q:.3}"),
                Some(None) => "  ratio -".into(),
                None => String::new(),
            };
            let _ = writeln!(s, "  t = {t:.3e}  defect {e:.3e}{ratio}");
        }
    }
    let _ = writeln!(s, "result      {}", if r.pass { "pass" } else { "fail" });
    s
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let src = load_map(&a.map, &a.drop)?;
    let m = src.spec.m();
    let df = read_field(&a.df)?;
    if df.kind() != FieldKind::Vector || df.ncomp() != src.spec.q() {
        return Err(Error::Field(format!(
            "{} must hold a vector field with {} components",
            a.df.display(),
            src.spec.q()
        )));
    }
    let grid = df.grid().clone();
    if grid.dim() != m {
        return Err(Error::GridMismatch(format!(
            "df has m = {}, map has m = {m}",
            grid.dim()
        )));
    }
    let file = a.dg.dg.as_deref().map(|p| read_dg_file(p, m)).transpose()?;
    let dg = load_dg(&a.dg, file, &src, &grid)?;
    let tol = a
        .tol
        .unwrap_or_else(|| DEFAULT_VERIFY_FACTOR * grid.max_spacing().powi(2));
    let mut report = verify_solution(&src.spec, &df, &dg, &grid, tol)?;
    if let Some(list) = &a.richardson {
        let ts = parse_f64_list(list, "--richardson")?;
        report.richardson = Some(richardson_check(&src.spec, &df, &dg, &grid, &ts)?);
    }
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        write!(out, "{}", verify_text(&report))?;
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn map_file_text(e: &CatalogEntry) -> String {
    let spec = e.spec();
    let mut s = format!(
        "# {}: {}\n# expected: {}\n",
        e.name,
        e.description,
        e.expected_verdict()
    );
    if let Some(df) = &e.closed_form_df {
        let _ = writeln!(s, "# closed-form df on [-1,1]^{}: {df}", spec.m());
    }
    s.push_str(&spec.to_text());
    s.push('\n');
    s
}

fn cmd_catalog(a: &CatalogArgs, out: &mut dyn Write) -> Result<i32> {
    if a.list {
        for e in catalog::catalog() {
            let spec = e.spec();
            writeln!(
                out,
                "{:<16} m={} q={}  {:<28} {}",
                e.name,
                spec.m(),
                spec.q(),
                e.expected_verdict(),
                e.description
            )?;
        }
        writeln!(
            out,
            "{:<16} any m >= 1, --drop i,j selects the removed component",
            "fpi-m<k>"
        )?;
        return Ok(0);
    }
    let name = a
        .emit
        .as_deref()
        .ok_or_else(|| Error::Options("use --list or --emit NAME".into()))?;
    let e = lookup(name, parse_drop(&a.drop)?)?;
    let spec = e.spec();
    match &a.out {
        None => {
            write!(out, "{}", map_file_text(&e))?;
            writeln!(out, "# dg (a <= b): {}", e.dg)?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let map_path = dir.join(format!("{}.map", e.name));
            fs::write(&map_path, map_file_text(&e))?;
            let grid = Grid::uniform(spec.m(), -1.0, 1.0, e.grid_n)?;
            let dg = dg_from_exprs(&e.dg, &grid)?;
            let dg_path = dir.join(format!("{}.dg.json", e.name));
            write_field(&dg_path, &dg, None)?;
            let labels: Vec<String> = pairs(spec.m())
                .iter()
                .map(|(a, b)| format!("{},{}", a + 1, b + 1))
                .collect();
            writeln!(
                out,
                "wrote {} and {} (dg components {})",
                map_path.display(),
                dg_path.display(),
                labels.join(" ")
            )?;
            writeln!(out, "expected: {}", e.expected_verdict())?;
        }
    }
    if let Expectation::Critical { verdict: false, .. } = e.expect {
        writeln!(out, "# verdict = false")?;
    }
    Ok(0)
}
