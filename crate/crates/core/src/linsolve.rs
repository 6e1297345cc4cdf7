//! Right-hand side of the linearized system and its pointwise solution.
//!
//! At every node the unknown `df` (length `q`) satisfies `A df = b` with `A`
//! the coefficient matrix and
//!
//! ```text
//! b_a    = h_a
//! b_(ab) = (D_a h_b + D_b h_a - dg_ab) / 2      (a <= b)
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid};
use crate::jetcalc::{
    coefficient_matrix, eval_jets, n_pairs, n_rows, pair_index, pairs, CoefficientMatrix, Jet2,
    MapSpec, DEFAULT_RANK_TOL,
};
use crate::kernelfield::{
    admissibility_from_jets, check_grid, kernel_field_from_jets, lambda_derivatives,
    AdmissibilityReport, LambdaField, DEFAULT_ADM_TOL,
};
use crate::linalg;
use crate::transport::{assemble_covector, build_transport, solve_transport};

/// Factor in the default consistency threshold `c * h^2 * max(|dg|_inf, 1)`.
pub const DEFAULT_SOLVE_TOL_FACTOR: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub rank_tol: f64,
    pub adm_tol: f64,
    /// Absolute residual threshold; `None` selects `50 h^2 max(|dg|_inf, 1)`.
    pub solve_tol: Option<f64>,
    /// Zero-based transversal coordinate.
    pub alpha0_override: Option<usize>,
    /// Characteristic sub-step as a fraction of the smallest grid spacing.
    pub substep_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            adm_tol: DEFAULT_ADM_TOL,
            solve_tol: None,
            alpha0_override: None,
            substep_factor: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rank_tol) || self.rank_tol >= 1.0 {
            return Err(Error::Options(format!(
                "rank_tol = {} must lie in (0, 1)",
                self.rank_tol
            )));
        }
        if !positive(self.adm_tol) {
            return Err(Error::Options(format!(
                "adm_tol = {} must be positive",
                self.adm_tol
            )));
        }
        if let Some(t) = self.solve_tol {
            if !positive(t) {
                return Err(Error::Options(format!("solve_tol = {t} must be positive")));
            }
        }
        if !(self.substep_factor > 0.0 && self.substep_factor <= 1.0) {
            return Err(Error::Options(format!(
                "substep factor {} outside (0, 1]",
                self.substep_factor
            )));
        }
        Ok(())
    }

    /// The consistency threshold used for `dg` on `grid`.
    pub fn effective_solve_tol(&self, grid: &Grid, dg: &Field) -> f64 {
        self.solve_tol.unwrap_or_else(|| {
            let h = grid.max_spacing();
            DEFAULT_SOLVE_TOL_FACTOR * h * h * dg.max_abs().max(1.0)
        })
    }
}

/// Per-node right-hand sides, rows aligned with the coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsField {
    rows: usize,
    data: Vec<f64>,
}

impl RhsField {
    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.rows..(node + 1) * self.rows]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

pub fn assemble_rhs(hcov: &Field, dg: &Field) -> Result<RhsField> {
    let grid = hcov.grid();
    if dg.grid() != grid {
        return Err(Error::GridMismatch(
            "h and dg live on different grids".into(),
        ));
    }
    let m = grid.dim();
    if hcov.ncomp() != m || dg.ncomp() != n_pairs(m) {
        return Err(Error::WrongShape(
            "covector or symmetric tensor has the wrong component count".into(),
        ));
    }
    let comps: Vec<Vec<f64>> = (0..m).map(|b| hcov.component(b)).collect();
    // dh[a][b] = D_a h_b
    let dh: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|a| comps.iter().map(|c| grid.derivative(c, a)).collect())
        .collect();
    let rows = n_rows(m);
    let mut data = vec![0.0; grid.len() * rows];
    let prs = pairs(m);
    for p in 0..grid.len() {
        let b = &mut data[p * rows..(p + 1) * rows];
        for a in 0..m {
            b[a] = comps[a][p];
        }
        for (k, &(a, c)) in prs.iter().enumerate() {
            b[m + k] = 0.5 * (dh[a][c][p] + dh[c][a][p] - dg.at(p)[k]);
        }
    }
    Ok(RhsField { rows, data })
}

/// Least-squares solve of `A df = b`, returning `(df, ||A df - b||_2)`.
///
/// The rank of `A` must be `min(N, q)`; when `q > N` the minimum-norm
/// solution is returned.
pub fn solve_pointwise(a: &CoefficientMatrix, b: &[f64], rank_tol: f64) -> Result<(Vec<f64>, f64)> {
    if b.len() != a.rows() {
        return Err(Error::WrongShape(format!(
            "rhs has {} rows, matrix has {}",
            b.len(),
            a.rows()
        )));
    }
    let s = linalg::singular_values(a.as_matrix());
    let ratio = match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    };
    if ratio < rank_tol {
        return Err(Error::RankDeficient {
            node: None,
            point: None,
            ratio,
        });
    }
    let cutoff = 0.5 * rank_tol * s[0];
    Ok(linalg::lstsq(a.as_matrix(), b, cutoff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Critical,
    Free,
}

/// Solution of the linearized system on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFField {
    pub field: Field,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub solve_tol: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub branch: Branch,
    pub m: usize,
    pub q: usize,
    /// Zero-based transversal coordinate (critical branch).
    pub alpha0: Option<usize>,
    pub admissibility: Option<AdmissibilityReport>,
    pub exited_fraction: f64,
    pub quality_warning: Option<String>,
    pub max_residual: f64,
    pub max_interior_residual: f64,
    pub solve_tol: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSolution {
    pub df: DeltaFField,
    /// Scalar transport solution (critical branch only).
    pub h: Option<Field>,
    /// Covector `h_a` used in the right-hand side.
    pub hcov: Field,
    pub report: PipelineReport,
}

fn check_dg(spec: &MapSpec, grid: &Grid, dg: &Field) -> Result<()> {
    check_grid(spec, grid)?;
    if dg.grid() != grid {
        return Err(Error::GridMismatch("dg lives on a different grid".into()));
    }
    if dg.ncomp() != n_pairs(spec.m()) {
        return Err(Error::WrongShape(format!(
            "dg needs {} components, got {}",
            n_pairs(spec.m()),
            dg.ncomp()
        )));
    }
    Ok(())
}

fn solve_all(
    jets: &[Jet2],
    rhs: &RhsField,
    grid: &Grid,
    rank_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = jets[0].q();
    let solved: Vec<(Vec<f64>, f64)> = jets
        .par_iter()
        .enumerate()
        .map(|(p, jet)| {
            solve_pointwise(&coefficient_matrix(jet), rhs.at(p), rank_tol).map_err(|e| match e {
                Error::RankDeficient { ratio, .. } => Error::RankDeficient {
                    node: Some(grid.multi_index(p)),
                    point: Some(grid.point(p)),
                    ratio,
                },
                e => e,
            })
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(jets.len() * q);
    let mut residuals = Vec::with_capacity(jets.len());
    for (x, r) in solved {
        data.extend(x);
        residuals.push(r);
    }
    Ok((data, residuals))
}

/// Critical-dimension pipeline: kernel field, admissibility, transport solve,
/// covector assembly, right-hand side and pointwise solves.
pub fn solve_linearized(
    spec: &MapSpec,
    dg: &Field,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<LinearizedSolution> {
    opts.validate()?;
    check_dg(spec, grid, dg)?;
    if !spec.is_critical() {
        return Err(Error::WrongShape(format!(
            "critical pipeline needs q = m(m+3)/2 - 1 = {}, map has q = {}",
            n_rows(spec.m()) - 1,
            spec.q()
        )));
    }
    let jets = eval_jets(spec, grid)?;
    let adm = admissibility_from_jets(
        spec,
        &jets,
        grid,
        opts.rank_tol,
        opts.adm_tol,
        opts.alpha0_override,
    )?;
    if !adm.verdict {
        return Err(Error::NotAdmissible(Box::new(adm)));
    }
    let alpha0 = adm.alpha0.expect("admissible report carries alpha0");
    let field = kernel_field_from_jets(&jets, grid, opts.rank_tol)?;
    let mut sol = solve_with_field(&jets, grid, &field, alpha0, dg, opts)?;
    sol.report.admissibility = Some(adm);
    Ok(sol)
}

/// The critical pipeline from a given kernel field and transversal
/// coordinate. Any nonvanishing rescaling of `field` yields the same `df`.
pub fn solve_with_field(
    jets: &[Jet2],
    grid: &Grid,
    field: &LambdaField,
    alpha0: usize,
    dg: &Field,
    opts: &SolverOptions,
) -> Result<LinearizedSolution> {
    opts.validate()?;
    if jets.len() != grid.len() || field.grid() != grid {
        return Err(Error::GridMismatch(
            "jets, kernel field and grid disagree".into(),
        ));
    }
    let derivs = lambda_derivatives(field, alpha0);
    let td = build_transport(field, &derivs, dg, alpha0, opts.adm_tol)?;
    let ts = solve_transport(&td, opts.substep_factor)?;
    let hcov = assemble_covector(field, alpha0, &ts.h)?;
    let rhs = assemble_rhs(&hcov, dg)?;
    let (data, residuals) = solve_all(jets, &rhs, grid, opts.rank_tol)?;
    let (df, mut report) = finish(
        Branch::Critical,
        grid.dim(),
        jets[0].q(),
        grid,
        dg,
        opts,
        data,
        residuals,
    )?;
    report.alpha0 = Some(alpha0);
    report.exited_fraction = ts.exited_fraction;
    report.quality_warning = ts.quality_warning();
    Ok(LinearizedSolution {
        df,
        h: Some(ts.h),
        hcov,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    branch: Branch,
    m: usize,
    q: usize,
    grid: &Grid,
    dg: &Field,
    opts: &SolverOptions,
    data: Vec<f64>,
    residuals: Vec<f64>,
) -> Result<(DeltaFField, PipelineReport)> {
    let solve_tol = opts.effective_solve_tol(grid, dg);
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let max_interior_residual = grid
        .interior_nodes()
        .map(|p| residuals[p])
        .fold(0.0, f64::max);
    let consistent = max_residual <= solve_tol;
    let field = Field::from_data(FieldKind::Vector, grid, q, data)?;
    let report = PipelineReport {
        branch,
        m,
        q,
        alpha0: None,
        admissibility: None,
        exited_fraction: 0.0,
        quality_warning: None,
        max_residual,
        max_interior_residual,
        solve_tol,
        consistent,
    };
    Ok((
        DeltaFField {
            field,
            residuals,
            max_residual,
            solve_tol,
            consistent,
        },
        report,
    ))
}

/// Free-map branch (`q >= m(m+3)/2`) with `h_a = 0`: minimum-norm pointwise
/// solutions of `A df = (0, -dg/2)`.
pub fn solve_free(
    spec: &MapSpec,
    dg: &Field,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<LinearizedSolution> {
    opts.validate()?;
    check_dg(spec, grid, dg)?;
    let (m, q) = (spec.m(), spec.q());
    if q < n_rows(m) {
        return Err(Error::NotFree(format!(
            "q = {q} < m(m+3)/2 = {}: no free maps exist in this dimension",
            n_rows(m)
        )));
    }
    let jets = eval_jets(spec, grid)?;
    for (p, jet) in jets.iter().enumerate() {
        let ratio = coefficient_matrix(jet).singular_ratio();
        if ratio <= opts.rank_tol {
            return Err(Error::NotFree(format!(
                "second-order jet degenerate at node {:?} (x = {:?}): sigma_min/sigma_max = {ratio:.3e}",
                grid.multi_index(p),
                grid.point(p)
            )));
        }
    }
    let hcov = Field::zeros(FieldKind::Covector, grid, m);
    let rhs = assemble_rhs(&hcov, dg)?;
    let (data, residuals) = solve_all(&jets, &rhs, grid, opts.rank_tol)?;
    let (df, report) = finish(Branch::Free, m, q, grid, dg, opts, data, residuals)?;
    Ok(LinearizedSolution {
        df,
        h: None,
        hcov,
        report,
    })
}

/// Dispatches on the target dimension: free branch when `q >= m(m+3)/2`,
/// critical pipeline when `q = m(m+3)/2 - 1`.
pub fn solve_auto(
    spec: &MapSpec,
    dg: &Field,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<LinearizedSolution> {
    let n = n_rows(spec.m());
    if spec.q() >= n {
        solve_free(spec, dg, grid, opts)
    } else if spec.q() + 1 == n {
        solve_linearized(spec, dg, grid, opts)
    } else {
        Err(Error::WrongShape(format!(
            "q = {} is below the critical dimension {}; the kernel is more than one-dimensional",
            spec.q(),
            n - 1
        )))
    }
}

/// Symmetric-tensor field sampled from `m(m+1)/2` constant or expression
/// components.
pub fn symtensor_from_fn<F>(grid: &Grid, f: F) -> Result<Field>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    Field::from_fn(FieldKind::Symtensor, grid, n_pairs(grid.dim()), f)
}

/// Symmetric-tensor field with a single nonzero constant entry `(a, b)`.
pub fn unit_symtensor(grid: &Grid, a: usize, b: usize, value: f64) -> Field {
    let m = grid.dim();
    let k = pair_index(m, a, b);
    Field::from_fn_indexed(FieldKind::Symtensor, grid, n_pairs(m), |_| {
        let mut v = vec![0.0; n_pairs(m)];
        v[k] = value;
        v
    })
    .expect("shape is consistent")
}
