//! Kernel covector of the coefficient matrix, its sign-continuous field over a
//! grid, and membership in the admissible set.
//!
//! The kernel `kappa` is stored in matrix-row order. The symmetric
//! coefficients used by the compatibility condition are recovered as
//! `lambda^a = kappa_a` and `lambda^{ab} = kappa_(ab) / (2 - delta_ab)`, so
//! that the full double sum over `(a, b)` reproduces `kappa^T A`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::jetcalc::{
    coefficient_matrix, eval_jets, n_rows, pair_index, CoefficientMatrix, Jet2, MapSpec,
};
use crate::linalg;

pub const DEFAULT_ADM_TOL: f64 = 1e-6;

/// Minimum `|kappa_p . kappa_p'|` accepted between adjacent nodes.
pub const SIGN_DOT_MIN: f64 = 0.1;

fn lambda1_of(kappa: &[f64], a: usize) -> f64 {
    kappa[a]
}

fn lambda2_of(m: usize, kappa: &[f64], a: usize, b: usize) -> f64 {
    let k = kappa[m + pair_index(m, a, b)];
    if a == b {
        k
    } else {
        0.5 * k
    }
}

/// Unit vector spanning the left null space of a critical-dimension
/// coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector {
    m: usize,
    kappa: Vec<f64>,
}

impl KernelVector {
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn lambda1(&self, a: usize) -> f64 {
        lambda1_of(&self.kappa, a)
    }

    pub fn lambda2(&self, a: usize, b: usize) -> f64 {
        lambda2_of(self.m, &self.kappa, a, b)
    }
}

fn canonical_sign(kappa: &mut [f64]) {
    let mut best = 0;
    for (i, k) in kappa.iter().enumerate() {
        if k.abs() > kappa[best].abs() {
            best = i;
        }
    }
    if kappa[best] < 0.0 {
        kappa.iter_mut().for_each(|k| *k = -*k);
    }
}

/// Kernel of `A^T` together with the singular-value ratio `sigma_q / sigma_1`.
/// The returned vector has its largest-magnitude entry positive.
pub fn kernel_with_ratio(a: &CoefficientMatrix) -> Result<(KernelVector, f64)> {
    if a.rows() != a.cols() + 1 {
        return Err(Error::WrongShape(format!(
            "kernel extraction needs N = q + 1, got N = {} and q = {}",
            a.rows(),
            a.cols()
        )));
    }
    let (mut kappa, ratio) = linalg::left_null_vector(a.as_matrix());
    canonical_sign(&mut kappa);
    Ok((KernelVector { m: a.m(), kappa }, ratio))
}

pub fn kernel_vector(a: &CoefficientMatrix, rank_tol: f64) -> Result<KernelVector> {
    let (k, ratio) = kernel_with_ratio(a)?;
    if ratio < rank_tol {
        return Err(Error::RankDeficient {
            node: None,
            point: None,
            ratio,
        });
    }
    Ok(k)
}

/// A kernel covector at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaField {
    grid: Grid,
    m: usize,
    kappa: Vec<f64>,
    sign_aligned: bool,
}

impl LambdaField {
    /// Wraps raw per-node kernels (`N = m(m+3)/2` values per node). Used to
    /// inject synthetic fields; no normalization is applied.
    pub fn from_kappas(grid: &Grid, kappa: Vec<f64>, sign_aligned: bool) -> Result<Self> {
        let m = grid.dim();
        if kappa.len() != grid.len() * n_rows(m) {
            return Err(Error::WrongShape(format!(
                "expected {} kernel values, got {}",
                grid.len() * n_rows(m),
                kappa.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            m,
            kappa,
            sign_aligned,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sign_aligned(&self) -> bool {
        self.sign_aligned
    }

    pub fn kappa(&self, node: usize) -> &[f64] {
        let n = n_rows(self.m);
        &self.kappa[node * n..(node + 1) * n]
    }

    pub fn lambda1(&self, node: usize, a: usize) -> f64 {
        lambda1_of(self.kappa(node), a)
    }

    pub fn lambda2(&self, node: usize, a: usize, b: usize) -> f64 {
        lambda2_of(self.m, self.kappa(node), a, b)
    }

    /// `c * kappa` at every node.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            kappa: self.kappa.iter().map(|k| c * k).collect(),
            ..self.clone()
        }
    }

    /// Multiplies the kernel at each node by a per-node factor.
    pub fn rescaled_by<F: Fn(&[f64]) -> f64>(&self, factor: F) -> Self {
        let n = n_rows(self.m);
        let mut kappa = self.kappa.clone();
        for node in 0..self.grid.len() {
            let c = factor(&self.grid.point(node));
            kappa[node * n..(node + 1) * n]
                .iter_mut()
                .for_each(|k| *k *= c);
        }
        Self {
            kappa,
            ..self.clone()
        }
    }

    /// `max_p ||kappa_p^T A_p|| / ||A_p||`.
    pub fn max_relative_residual(&self, jets: &[Jet2]) -> f64 {
        jets.iter()
            .enumerate()
            .map(|(p, jet)| {
                let a = coefficient_matrix(jet);
                let k = nalgebra::DVector::from_column_slice(self.kappa(p));
                let r = a.as_matrix().transpose() * k;
                let scale = a.as_matrix().norm();
                if scale > 0.0 {
                    r.norm() / scale
                } else {
                    r.norm()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Pointwise kernels and singular ratios, in node order.
fn pointwise_kernels(jets: &[Jet2]) -> Result<Vec<(KernelVector, f64)>> {
    jets.par_iter()
        .map(|j| kernel_with_ratio(&coefficient_matrix(j)))
        .collect()
}

/// Aligns kernel signs breadth-first from node 0 and checks every adjacent
/// pair afterwards.
fn align_signs(grid: &Grid, kappa: &mut [f64], n: usize) -> Result<()> {
    let len = grid.len();
    let mut visited = vec![false; len];
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(p) = queue.pop_front() {
        for r in grid.neighbors(p) {
            if visited[r] {
                continue;
            }
            let d = linalg::dot(&kappa[p * n..(p + 1) * n], &kappa[r * n..(r + 1) * n]);
            if d.abs() < SIGN_DOT_MIN {
                return Err(Error::SignAmbiguous {
                    a: grid.multi_index(p),
                    b: grid.multi_index(r),
                    dot: d.abs(),
                });
            }
            if d < 0.0 {
                kappa[r * n..(r + 1) * n].iter_mut().for_each(|k| *k = -*k);
            }
            visited[r] = true;
            queue.push_back(r);
        }
    }
    for p in 0..len {
        for r in grid.forward_neighbors(p) {
            let d = linalg::dot(&kappa[p * n..(p + 1) * n], &kappa[r * n..(r + 1) * n]);
            if d < SIGN_DOT_MIN {
                return Err(Error::SignAmbiguous {
                    a: grid.multi_index(p),
                    b: grid.multi_index(r),
                    dot: d.abs(),
                });
            }
        }
    }
    Ok(())
}

/// Builds the sign-aligned kernel field from precomputed jets (one per node).
pub fn kernel_field_from_jets(jets: &[Jet2], grid: &Grid, rank_tol: f64) -> Result<LambdaField> {
    let m = grid.dim();
    let n = n_rows(m);
    let kernels = pointwise_kernels(jets)?;
    let mut kappa = Vec::with_capacity(grid.len() * n);
    for (p, (k, ratio)) in kernels.into_iter().enumerate() {
        if ratio < rank_tol {
            return Err(Error::RankDeficient {
                node: Some(grid.multi_index(p)),
                point: Some(grid.point(p)),
                ratio,
            });
        }
        kappa.extend_from_slice(k.kappa());
    }
    align_signs(grid, &mut kappa, n)?;
    Ok(LambdaField {
        grid: grid.clone(),
        m,
        kappa,
        sign_aligned: true,
    })
}

pub fn kernel_field(spec: &MapSpec, grid: &Grid, rank_tol: f64) -> Result<LambdaField> {
    check_grid(spec, grid)?;
    if !spec.is_critical() {
        return Err(Error::WrongShape(format!(
            "kernel field needs q = m(m+3)/2 - 1 = {}, map has q = {}",
            n_rows(spec.m()) - 1,
            spec.q()
        )));
    }
    let jets = eval_jets(spec, grid)?;
    kernel_field_from_jets(&jets, grid, rank_tol)
}

pub(crate) fn check_grid(spec: &MapSpec, grid: &Grid) -> Result<()> {
    if grid.dim() != spec.m() {
        return Err(Error::GridMismatch(format!(
            "grid has dimension {}, map has m = {}",
            grid.dim(),
            spec.m()
        )));
    }
    Ok(())
}

/// Outcome of the admissibility test on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub m: usize,
    pub q: usize,
    pub critical: bool,
    pub full_rank_ok: bool,
    /// Smallest `sigma_q / sigma_1` over the grid and where it occurs.
    pub worst_sigma_ratio: f64,
    pub worst_node: Vec<usize>,
    pub worst_point: Vec<f64>,
    /// Zero-based selected coordinate.
    pub alpha0: Option<usize>,
    pub alpha0_overridden: bool,
    /// `min_p sum_b (lambda^{ab})^2` for every candidate `a`.
    pub transversality: Vec<f64>,
    pub min_transversality: f64,
    pub rank_tol: f64,
    pub adm_tol: f64,
    pub verdict: bool,
    pub reason: Option<String>,
}

impl AdmissibilityReport {
    pub fn summary(&self) -> String {
        match &self.reason {
            Some(r) => r.clone(),
            None => format!(
                "admissible with alpha0 = x{}",
                self.alpha0.map(|a| a + 1).unwrap_or(0)
            ),
        }
    }
}

/// Picks the coordinate with the largest minimum transversality; ties are
/// broken towards the lowest index.
fn select_alpha0(transversality: &[f64]) -> usize {
    let best = transversality
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    transversality
        .iter()
        .position(|&t| t >= best - 1e-9 * best.abs())
        .unwrap_or(0)
}

pub fn admissibility(
    spec: &MapSpec,
    grid: &Grid,
    rank_tol: f64,
    adm_tol: f64,
) -> Result<AdmissibilityReport> {
    admissibility_with(spec, grid, rank_tol, adm_tol, None)
}

/// As [`admissibility`], optionally forcing the transversal coordinate.
pub fn admissibility_with(
    spec: &MapSpec,
    grid: &Grid,
    rank_tol: f64,
    adm_tol: f64,
    alpha0_override: Option<usize>,
) -> Result<AdmissibilityReport> {
    check_grid(spec, grid)?;
    let jets = eval_jets(spec, grid)?;
    admissibility_from_jets(spec, &jets, grid, rank_tol, adm_tol, alpha0_override)
}

pub(crate) fn admissibility_from_jets(
    spec: &MapSpec,
    jets: &[Jet2],
    grid: &Grid,
    rank_tol: f64,
    adm_tol: f64,
    alpha0_override: Option<usize>,
) -> Result<AdmissibilityReport> {
    let m = spec.m();
    if let Some(a) = alpha0_override {
        if a >= m {
            return Err(Error::Options(format!(
                "alpha0 = {} out of range 1..={m}",
                a + 1
            )));
        }
    }
    let mut report = AdmissibilityReport {
        m,
        q: spec.q(),
        critical: spec.is_critical(),
        full_rank_ok: false,
        worst_sigma_ratio: 0.0,
        worst_node: Vec::new(),
        worst_point: Vec::new(),
        alpha0: None,
        alpha0_overridden: alpha0_override.is_some(),
        transversality: Vec::new(),
        min_transversality: 0.0,
        rank_tol,
        adm_tol,
        verdict: false,
        reason: None,
    };

    if !report.critical {
        let ratios: Vec<f64> = jets
            .par_iter()
            .map(|j| coefficient_matrix(j).singular_ratio())
            .collect();
        let (worst, ratio) = argmin(&ratios);
        report.worst_sigma_ratio = ratio;
        report.worst_node = grid.multi_index(worst);
        report.worst_point = grid.point(worst);
        report.reason = Some(format!(
            "q = {} is not the critical dimension m(m+3)/2 - 1 = {}",
            spec.q(),
            n_rows(m) - 1
        ));
        return Ok(report);
    }

    let kernels = pointwise_kernels(jets)?;
    let ratios: Vec<f64> = kernels.iter().map(|(_, r)| *r).collect();
    let (worst, ratio) = argmin(&ratios);
    report.worst_sigma_ratio = ratio;
    report.worst_node = grid.multi_index(worst);
    report.worst_point = grid.point(worst);
    report.full_rank_ok = ratio >= rank_tol;
    if !report.full_rank_ok {
        report.reason = Some(format!(
            "RankDeficient at node {:?} (x = {:?}): sigma_min/sigma_max = {:.3e} < {:.1e}",
            report.worst_node, report.worst_point, ratio, rank_tol
        ));
        return Ok(report);
    }

    report.transversality = (0..m)
        .map(|a| {
            kernels
                .iter()
                .map(|(k, _)| (0..m).map(|b| k.lambda2(a, b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let alpha0 = alpha0_override.unwrap_or_else(|| select_alpha0(&report.transversality));
    report.alpha0 = Some(alpha0);
    report.min_transversality = report.transversality[alpha0];
    report.verdict = report.min_transversality >= adm_tol;
    if !report.verdict {
        report.reason = Some(format!(
            "transversality along x{} is {:.3e} < adm_tol = {:.1e}",
            alpha0 + 1,
            report.min_transversality,
            adm_tol
        ));
    }
    Ok(report)
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
    )
}

/// Per-node `d_b lambda^{alpha0 a}`, stored `m x m` with entry `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaDerivatives {
    m: usize,
    alpha0: usize,
    data: Vec<f64>,
}

impl LambdaDerivatives {
    pub fn alpha0(&self) -> usize {
        self.alpha0
    }

    /// `d_b lambda^{alpha0 a}` at `node`.
    pub fn get(&self, node: usize, a: usize, b: usize) -> f64 {
        self.data[node * self.m * self.m + a * self.m + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Grid derivatives of `lambda^{alpha0 a}` with the shared second-order
/// stencils. The field must be sign-aligned.
pub fn lambda_derivatives(field: &LambdaField, alpha0: usize) -> LambdaDerivatives {
    debug_assert!(
        field.sign_aligned,
        "lambda derivatives need a sign-aligned field"
    );
    let grid = &field.grid;
    let m = field.m;
    let len = grid.len();
    let mut data = vec![0.0; len * m * m];
    for a in 0..m {
        let values: Vec<f64> = (0..len).map(|p| field.lambda2(p, alpha0, a)).collect();
        for b in 0..m {
            let d = grid.derivative(&values, b);
            for p in 0..len {
                data[p * m * m + a * m + b] = d[p];
            }
        }
    }
    LambdaDerivatives { m, alpha0, data }
}
