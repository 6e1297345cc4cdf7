//! Independent checks of a computed `df` against the linearized and the full
//! pullback operator, plus a single experimental Newton step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid};
use crate::jetcalc::{eval_jets, n_pairs, pairs, pullback_from_jet, Jet2, MapSpec};
use crate::kernelfield::check_grid;
use crate::linalg::dot;
use crate::linsolve::{solve_auto, SolverOptions};

fn check_inputs(spec: &MapSpec, grid: &Grid, df: &Field) -> Result<()> {
    check_grid(spec, grid)?;
    if df.grid() != grid {
        return Err(Error::GridMismatch("df lives on a different grid".into()));
    }
    if df.ncomp() != spec.q() {
        return Err(Error::WrongShape(format!(
            "df has {} components, map has q = {}",
            df.ncomp(),
            spec.q()
        )));
    }
    Ok(())
}

fn check_symtensor(grid: &Grid, g: &Field, what: &str) -> Result<()> {
    if g.grid() != grid {
        return Err(Error::GridMismatch(format!(
            "{what} lives on a different grid"
        )));
    }
    if g.ncomp() != n_pairs(grid.dim()) {
        return Err(Error::WrongShape(format!(
            "{what} needs {} components",
            n_pairs(grid.dim())
        )));
    }
    Ok(())
}

/// Grid derivatives of a vector field: `out[a][p * q + i] = D_a F^i (p)`.
fn vector_gradient(grid: &Grid, f: &Field) -> Vec<Vec<f64>> {
    let q = f.ncomp();
    let comps: Vec<Vec<f64>> = (0..q).map(|i| f.component(i)).collect();
    (0..grid.dim())
        .map(|a| {
            let d: Vec<Vec<f64>> = comps.iter().map(|c| grid.derivative(c, a)).collect();
            let mut out = vec![0.0; grid.len() * q];
            for p in 0..grid.len() {
                for i in 0..q {
                    out[p * q + i] = d[i][p];
                }
            }
            out
        })
        .collect()
}

/// `L(df)_ab = d_a f . D_b df + d_b f . D_a df` with exact jets of `f` and
/// grid derivatives of `df`.
pub fn linearized_pullback(spec: &MapSpec, df: &Field, grid: &Grid) -> Result<Field> {
    check_inputs(spec, grid, df)?;
    let jets = eval_jets(spec, grid)?;
    Ok(linearized_from_jets(&jets, df, grid))
}

fn linearized_from_jets(jets: &[Jet2], df: &Field, grid: &Grid) -> Field {
    let q = df.ncomp();
    let m = grid.dim();
    let ddf = vector_gradient(grid, df);
    let prs = pairs(m);
    Field::from_fn_indexed(FieldKind::Symtensor, grid, prs.len(), |p| {
        let d = |a: usize| &ddf[a][p * q..(p + 1) * q];
        prs.iter()
            .map(|&(a, b)| dot(jets[p].d1(a), d(b)) + dot(jets[p].d1(b), d(a)))
            .collect()
    })
    .expect("shape is consistent")
}

/// Pullback of a grid-sampled map, all derivatives by grid stencils.
pub fn grid_pullback(map: &Field) -> Field {
    let grid = map.grid();
    let q = map.ncomp();
    let d = vector_gradient(grid, map);
    let prs = pairs(grid.dim());
    Field::from_fn_indexed(FieldKind::Symtensor, grid, prs.len(), |p| {
        prs.iter()
            .map(|&(a, b)| dot(&d[a][p * q..(p + 1) * q], &d[b][p * q..(p + 1) * q]))
            .collect()
    })
    .expect("shape is consistent")
}

/// Exact pullback of `spec` at every node.
pub fn pullback_field(spec: &MapSpec, grid: &Grid) -> Result<Field> {
    check_grid(spec, grid)?;
    let jets = eval_jets(spec, grid)?;
    Field::from_fn_indexed(FieldKind::Symtensor, grid, n_pairs(grid.dim()), |p| {
        pullback_from_jet(&jets[p]).packed().to_vec()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentResidual {
    /// One-based index pair.
    pub pair: (usize, usize),
    pub inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RichardsonReport {
    pub t: Vec<f64>,
    pub errors: Vec<f64>,
    /// `errors[k] / errors[k+1]`; `None` when both errors vanish.
    pub ratios: Vec<Option<f64>>,
}

impl RichardsonReport {
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        !self.ratios.is_empty()
            && self
                .ratios
                .iter()
                .all(|r| r.is_some_and(|r| (lo..=hi).contains(&r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub lin_residual_inf: f64,
    pub lin_residual_l2: f64,
    pub components: Vec<ComponentResidual>,
    pub spacing: Vec<f64>,
    pub interior_nodes: usize,
    pub tol: f64,
    pub pass: bool,
    pub richardson: Option<RichardsonReport>,
}

/// Compares `L(df)` with `dg` over nodes one stencil away from every face.
pub fn verify_solution(
    spec: &MapSpec,
    df: &Field,
    dg: &Field,
    grid: &Grid,
    tol: f64,
) -> Result<VerificationReport> {
    check_inputs(spec, grid, df)?;
    check_symtensor(grid, dg, "dg")?;
    let l = linearized_pullback(spec, df, grid)?;
    let prs = pairs(grid.dim());
    let mut comp_inf = vec![0.0f64; prs.len()];
    let mut sum_sq = 0.0;
    let mut count = 0;
    for p in grid.interior_nodes() {
        count += 1;
        for (k, (lv, gv)) in l.at(p).iter().zip(dg.at(p)).enumerate() {
            let r = (lv - gv).abs();
            comp_inf[k] = comp_inf[k].max(r);
            // off-diagonal entries appear twice in the full tensor
            let w = if prs[k].0 == prs[k].1 { 1.0 } else { 2.0 };
            sum_sq += w * r * r;
        }
    }
    let inf = comp_inf.iter().copied().fold(0.0, f64::max);
    Ok(VerificationReport {
        lin_residual_inf: inf,
        lin_residual_l2: (sum_sq * grid.cell_volume()).sqrt(),
        components: prs
            .iter()
            .zip(&comp_inf)
            .map(|(&(a, b), &inf)| ComponentResidual {
                pair: (a + 1, b + 1),
                inf,
            })
            .collect(),
        spacing: (0..grid.dim()).map(|a| grid.spacing(a)).collect(),
        interior_nodes: count,
        tol,
        pass: inf <= tol,
        richardson: None,
    })
}

/// Errors `|D(f + t df) - D(f) - t dg|_inf` over interior nodes for each `t`,
/// evaluated directly, and their successive ratios.
pub fn richardson_check(
    spec: &MapSpec,
    df: &Field,
    dg: &Field,
    grid: &Grid,
    t_list: &[f64],
) -> Result<RichardsonReport> {
    check_inputs(spec, grid, df)?;
    check_symtensor(grid, dg, "dg")?;
    if t_list.windows(2).any(|w| w[1] >= w[0]) || t_list.iter().any(|&t| t.is_nan() || t <= 0.0) {
        return Err(Error::Options(
            "Richardson t values must be positive and decreasing".into(),
        ));
    }
    let jets = eval_jets(spec, grid)?;
    let q = spec.q();
    let m = grid.dim();
    let ddf = vector_gradient(grid, df);
    let prs = pairs(m);
    let mut errors = Vec::with_capacity(t_list.len());
    let mut da = vec![0.0; q];
    let mut db = vec![0.0; q];
    for &t in t_list {
        let mut err = 0.0f64;
        for p in grid.interior_nodes() {
            for (k, &(a, b)) in prs.iter().enumerate() {
                let fa = jets[p].d1(a);
                let fb = jets[p].d1(b);
                for i in 0..q {
                    da[i] = fa[i] + t * ddf[a][p * q + i];
                    db[i] = fb[i] + t * ddf[b][p * q + i];
                }
                let defect = dot(&da, &db) - dot(fa, fb) - t * dg.at(p)[k];
                err = err.max(defect.abs());
            }
        }
        errors.push(err);
    }
    let ratios = errors
        .windows(2)
        .map(|w| {
            if w[1] > 0.0 && w[0] > 0.0 {
                Some(w[0] / w[1])
            } else {
                None
            }
        })
        .collect();
    Ok(RichardsonReport {
        t: t_list.to_vec(),
        errors,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonStep {
    /// `f + df` sampled on the grid.
    pub updated: Field,
    pub df: Field,
    /// `|D(f) - g_target|_inf` over interior nodes, exact jets.
    pub before: f64,
    /// `|D(f + df) - g_target|_inf` over interior nodes, grid derivatives.
    pub after: f64,
}

impl NewtonStep {
    pub fn contraction(&self) -> f64 {
        if self.after > 0.0 {
            self.before / self.after
        } else {
            f64::INFINITY
        }
    }
}

/// One linearized correction towards `g_target`. Experimental: no smoothing
/// is applied and nothing is claimed outside the perturbative regime.
pub fn newton_step(
    spec: &MapSpec,
    g_target: &Field,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<NewtonStep> {
    check_grid(spec, grid)?;
    check_symtensor(grid, g_target, "g_target")?;
    let g0 = pullback_field(spec, grid)?;
    let dg = g_target.axpy(-1.0, &g0)?;
    let sol = solve_auto(spec, &dg, grid, opts)?;
    let f0 = Field::from_fn(FieldKind::Vector, grid, spec.q(), |x| spec.eval(x))?;
    let updated = f0.axpy(1.0, &sol.df.field)?;
    let g1 = grid_pullback(&updated);
    let interior_inf = |a: &Field, b: &Field| {
        grid.interior_nodes()
            .flat_map(|p| {
                a.at(p)
                    .iter()
                    .zip(b.at(p))
                    .map(|(x, y)| (x - y).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    };
    Ok(NewtonStep {
        before: interior_inf(&g0, g_target),
        after: interior_inf(&g1, g_target),
        updated,
        df: sol.df.field,
    })
}
