//! The reduced first-order equation `zeta^b d_b h + lambda' h = psi` and its
//! solution by characteristics launched from the face `x^{alpha0} = a`.
//!
//! Substituting `h_b = lambda^{alpha0 b} h` into the compatibility condition
//! `sum_a lambda^a h_a + sum_ab lambda^{ab} d_a h_b = psi` gives
//!
//! ```text
//! zeta^b   = sum_a lambda^{ab} lambda^{alpha0 a}
//! lambda'  = sum_ab lambda^{ab} d_b lambda^{alpha0 a} + sum_a lambda^a lambda^{alpha0 a}
//! psi      = 1/2 sum_ab lambda^{ab} dg_ab
//! ```
//!
//! with `zeta^{alpha0} = sum_a (lambda^{alpha0 a})^2 > 0`, so every slice
//! `x^{alpha0} = const` is crossed exactly once by each characteristic.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldKind, Grid};
use crate::jetcalc::n_pairs;
use crate::kernelfield::{LambdaDerivatives, LambdaField};

/// Coefficients of the reduced transport equation, nodewise.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportData {
    grid: Grid,
    alpha0: usize,
    adm_tol: f64,
    zeta: Vec<f64>,
    lambda_prime: Vec<f64>,
    psi: Vec<f64>,
}

impl TransportData {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha0(&self) -> usize {
        self.alpha0
    }

    pub fn zeta(&self, node: usize) -> &[f64] {
        let m = self.grid.dim();
        &self.zeta[node * m..(node + 1) * m]
    }

    pub fn lambda_prime(&self) -> &[f64] {
        &self.lambda_prime
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
}

fn check_dg(grid: &Grid, dg: &Field) -> Result<()> {
    if dg.grid() != grid {
        return Err(Error::GridMismatch(
            "metric perturbation lives on a different grid".into(),
        ));
    }
    if dg.ncomp() != n_pairs(grid.dim()) {
        return Err(Error::WrongShape(format!(
            "metric perturbation needs {} components, got {}",
            n_pairs(grid.dim()),
            dg.ncomp()
        )));
    }
    Ok(())
}

pub fn build_transport(
    field: &LambdaField,
    derivs: &LambdaDerivatives,
    dg: &Field,
    alpha0: usize,
    adm_tol: f64,
) -> Result<TransportData> {
    let grid = field.grid();
    check_dg(grid, dg)?;
    debug_assert_eq!(derivs.alpha0(), alpha0);
    let m = grid.dim();
    let len = grid.len();
    let mut zeta = vec![0.0; len * m];
    let mut lambda_prime = vec![0.0; len];
    let mut psi = vec![0.0; len];
    for p in 0..len {
        let g = dg.at(p);
        for b in 0..m {
            zeta[p * m + b] = (0..m)
                .map(|a| field.lambda2(p, a, b) * field.lambda2(p, alpha0, a))
                .sum();
        }
        let mut lp = 0.0;
        let mut ps = 0.0;
        for a in 0..m {
            lp += field.lambda1(p, a) * field.lambda2(p, alpha0, a);
            for b in 0..m {
                let l = field.lambda2(p, a, b);
                lp += l * derivs.get(p, a, b);
                ps += l * g[crate::jetcalc::pair_index(m, a, b)];
            }
        }
        lambda_prime[p] = lp;
        psi[p] = 0.5 * ps;
        let z0 = zeta[p * m + alpha0];
        if z0.is_nan() || z0 < adm_tol {
            return Err(Error::TransversalityLost {
                node: grid.multi_index(p),
                value: z0,
            });
        }
    }
    Ok(TransportData {
        grid: grid.clone(),
        alpha0,
        adm_tol,
        zeta,
        lambda_prime,
        psi,
    })
}

/// Result of the characteristic march.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub h: Field,
    /// Nodes whose characteristic left the box through a transverse face and
    /// was continued with extrapolated coefficients.
    pub exited: Vec<bool>,
    pub exited_fraction: f64,
}

impl TransportSolution {
    pub fn quality_warning(&self) -> Option<String> {
        (self.exited_fraction > 0.0).then(|| {
            format!(
                "{:.2}% of characteristics left the box; coefficients were extrapolated",
                100.0 * self.exited_fraction
            )
        })
    }
}

/// Solves the transport equation with `h = 0` on the lower `alpha0` face.
///
/// Each node is reached by the characteristic through it: the curve is traced
/// back to the starting face in `x^{alpha0}`-time with classical RK4 while
/// accumulating the integrating factor, so that
/// `h(T) = int_a^T p(s) exp(-int_s^T r) ds` with `p = psi / zeta^{alpha0}` and
/// `r = lambda' / zeta^{alpha0}`. Sub-steps are at most
/// `substep_factor * min spacing`; coefficients are interpolated
/// multilinearly and continued past transverse faces by the boundary cell's
/// polynomial (frozen at the face if that would lose transversality).
pub fn solve_transport(td: &TransportData, substep_factor: f64) -> Result<TransportSolution> {
    if !(substep_factor > 0.0 && substep_factor <= 1.0) {
        return Err(Error::Options(format!(
            "substep factor {substep_factor} outside (0, 1]"
        )));
    }
    let grid = &td.grid;
    let m = grid.dim();
    let len = grid.len();
    let a0 = td.alpha0;
    for p in 0..len {
        let z0 = td.zeta[p * m + a0];
        if z0.is_nan() || z0 < td.adm_tol {
            return Err(Error::TransversalityLost {
                node: grid.multi_index(p),
                value: z0,
            });
        }
    }

    // zeta (m), lambda', psi per node for a single interpolation call
    let ncomp = m + 2;
    let mut packed = vec![0.0; len * ncomp];
    for p in 0..len {
        packed[p * ncomp..p * ncomp + m].copy_from_slice(&td.zeta[p * m..(p + 1) * m]);
        packed[p * ncomp + m] = td.lambda_prime[p];
        packed[p * ncomp + m + 1] = td.psi[p];
    }
    let start = grid.bounds()[a0].0;
    let max_step = substep_factor * grid.min_spacing();

    let results: Vec<(f64, bool)> = (0..len)
        .into_par_iter()
        .map(|p| {
            let origin = grid.point(p);
            let total = origin[a0] - start;
            if grid.multi_index(p)[a0] == 0 || total <= 0.0 {
                return (0.0, false);
            }
            let steps = (total / max_step).ceil().max(1.0) as usize;
            let dt = total / steps as f64;
            let mut exited = false;
            let mut buf = vec![0.0; ncomp];
            let mut point = origin.clone();

            // state: transverse coordinates (slot a0 unused), I, H
            let mut rhs = |tau: f64, s: &[f64], out: &mut [f64]| {
                point[..m].copy_from_slice(&s[..m]);
                point[a0] = origin[a0] - tau;
                let outside = grid.extrapolate(&packed, ncomp, &point, &mut buf);
                exited |= outside;
                if outside && (buf[a0].is_nan() || buf[a0] < td.adm_tol) {
                    // the continuation lost transversality: freeze at the face
                    grid.interpolate(&packed, ncomp, &point, &mut buf);
                }
                let z0 = buf[a0];
                for b in 0..m {
                    out[b] = if b == a0 { 0.0 } else { -buf[b] / z0 };
                }
                out[m] = buf[m] / z0;
                out[m + 1] = buf[m + 1] / z0 * (-s[m]).exp();
            };

            let dim = m + 2;
            let mut s = origin.clone();
            s.extend([0.0, 0.0]);
            let (mut k1, mut k2, mut k3, mut k4) = (
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
            );
            let mut tmp = vec![0.0; dim];
            for step in 0..steps {
                let tau = step as f64 * dt;
                rhs(tau, &s, &mut k1);
                for i in 0..dim {
                    tmp[i] = s[i] + 0.5 * dt * k1[i];
                }
                rhs(tau + 0.5 * dt, &tmp, &mut k2);
                for i in 0..dim {
                    tmp[i] = s[i] + 0.5 * dt * k2[i];
                }
                rhs(tau + 0.5 * dt, &tmp, &mut k3);
                for i in 0..dim {
                    tmp[i] = s[i] + dt * k3[i];
                }
                rhs(tau + dt, &tmp, &mut k4);
                for i in 0..dim {
                    s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            (s[m + 1], exited)
        })
        .collect();

    let h_data: Vec<f64> = results.iter().map(|r| r.0).collect();
    let exited: Vec<bool> = results.iter().map(|r| r.1).collect();
    let exited_fraction = exited.iter().filter(|&&e| e).count() as f64 / len as f64;
    Ok(TransportSolution {
        h: Field::from_data(FieldKind::Scalar, grid, 1, h_data)?,
        exited,
        exited_fraction,
    })
}

/// `h_b = lambda^{alpha0 b} h` at every node.
pub fn assemble_covector(field: &LambdaField, alpha0: usize, h: &Field) -> Result<Field> {
    let grid = field.grid();
    if h.grid() != grid {
        return Err(Error::GridMismatch(
            "h and kernel field differ in grid".into(),
        ));
    }
    let m = grid.dim();
    Field::from_fn_indexed(FieldKind::Covector, grid, m, |p| {
        (0..m)
            .map(|b| field.lambda2(p, alpha0, b) * h.at(p)[0])
            .collect()
    })
}

/// Pointwise `zeta^b D_b h + lambda' h - psi` with grid derivatives.
pub fn transport_residual(td: &TransportData, h: &Field) -> Vec<f64> {
    let grid = &td.grid;
    let m = grid.dim();
    let hv = h.component(0);
    let dh: Vec<Vec<f64>> = (0..m).map(|b| grid.derivative(&hv, b)).collect();
    (0..grid.len())
        .map(|p| {
            let adv: f64 = (0..m).map(|b| td.zeta[p * m + b] * dh[b][p]).sum();
            adv + td.lambda_prime[p] * hv[p] - td.psi[p]
        })
        .collect()
}

/// Pointwise compatibility defect
/// `sum_a lambda^a h_a + sum_ab lambda^{ab} D_a h_b - 1/2 sum_ab lambda^{ab} dg_ab`,
/// which equals `kappa^T b` for the right-hand side assembled from `hcov`.
pub fn compatibility_residual(field: &LambdaField, hcov: &Field, dg: &Field) -> Result<Vec<f64>> {
    let grid = field.grid();
    check_dg(grid, dg)?;
    let m = grid.dim();
    let comps: Vec<Vec<f64>> = (0..m).map(|b| hcov.component(b)).collect();
    // dh[a][b] = D_a h_b
    let dh: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|a| comps.iter().map(|c| grid.derivative(c, a)).collect())
        .collect();
    Ok((0..grid.len())
        .map(|p| {
            let mut r = 0.0;
            for (a, dha) in dh.iter().enumerate() {
                r += field.lambda1(p, a) * comps[a][p];
                for (b, dhab) in dha.iter().enumerate() {
                    let l = field.lambda2(p, a, b);
                    r += l * (dhab[p] - 0.5 * dg.at(p)[crate::jetcalc::pair_index(m, a, b)]);
                }
            }
            r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::parse_map_spec;
    use crate::kernelfield::{kernel_field, lambda_derivatives};
    use approx::assert_abs_diff_eq;

    fn setup(
        map: &str,
        n: usize,
        alpha0: usize,
        dg: [f64; 3],
    ) -> (LambdaField, TransportData, Field) {
        let g = Grid::uniform(2, -1.0, 1.0, n).unwrap();
        let f = kernel_field(&parse_map_spec(map).unwrap(), &g, 1e-8).unwrap();
        let d = lambda_derivatives(&f, alpha0);
        let dgf = Field::from_fn(FieldKind::Symtensor, &g, 3, |_| Ok(dg.to_vec())).unwrap();
        let td = build_transport(&f, &d, &dgf, alpha0, 1e-6).unwrap();
        (f, td, dgf)
    }

    const EXAMPLE1: &str = "m=2,q=4; x1; exp(x1); x2; exp(x2)";
    const F3: &str = "m=2,q=4; x1; x2; x1^2; x1*x2";

    #[test]
    fn example1_coefficients() {
        let (_, td, _) = setup(EXAMPLE1, 9, 0, [0.0, 1.0, 0.0]);
        for p in 0..td.grid().len() {
            assert_abs_diff_eq!(td.zeta(p)[0], 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(td.zeta(p)[1], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(td.lambda_prime()[p], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(td.psi()[p], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn f3_coefficients() {
        let (_, td, _) = setup(F3, 9, 1, [0.0, 0.0, 1.0]);
        for p in 0..td.grid().len() {
            assert_abs_diff_eq!(td.zeta(p)[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(td.zeta(p)[1], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(td.lambda_prime()[p], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(td.psi()[p], 0.5, epsilon = 1e-12);
        }
        let (_, td0, _) = setup(F3, 9, 1, [0.0; 3]);
        assert!(td0.psi().iter().all(|&v| v == 0.0));
        assert_eq!(td0.lambda_prime(), td.lambda_prime());
    }

    #[test]
    fn transversality_lost() {
        let g = Grid::uniform(2, -1.0, 1.0, 5).unwrap();
        let f = kernel_field(&parse_map_spec(F3).unwrap(), &g, 1e-8).unwrap();
        let d = lambda_derivatives(&f, 0);
        let dg = Field::zeros(FieldKind::Symtensor, &g, 3);
        assert!(matches!(
            build_transport(&f, &d, &dg, 0, 1e-6),
            Err(Error::TransversalityLost { .. })
        ));
    }

    #[test]
    fn example1_solution() {
        let (f, td, _) = setup(EXAMPLE1, 33, 0, [0.0, 1.0, 0.0]);
        let sol = solve_transport(&td, 1.0).unwrap();
        assert_eq!(sol.exited_fraction, 0.0);
        let hc = assemble_covector(&f, 0, &sol.h).unwrap();
        for p in 0..td.grid().len() {
            let x = td.grid().point(p);
            assert_abs_diff_eq!(sol.h.at(p)[0], 2.0 * (x[0] + 1.0), epsilon = 1e-12);
            assert_abs_diff_eq!(hc.at(p)[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(hc.at(p)[1], x[0] + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn f3_solution() {
        let (f, td, _) = setup(F3, 17, 1, [0.0, 0.0, 1.0]);
        let sol = solve_transport(&td, 0.5).unwrap();
        let hc = assemble_covector(&f, 1, &sol.h).unwrap();
        for p in 0..td.grid().len() {
            let y = td.grid().point(p)[1];
            assert_abs_diff_eq!(sol.h.at(p)[0], 0.5 * (y + 1.0), epsilon = 1e-12);
            assert_abs_diff_eq!(hc.at(p)[0], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(hc.at(p)[1], 0.5 * (y + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let (f, td, _) = setup(F3, 9, 1, [0.0; 3]);
        let sol = solve_transport(&td, 1.0).unwrap();
        assert!(sol.h.data().iter().all(|&v| v == 0.0));
        let hc = assemble_covector(&f, 1, &sol.h).unwrap();
        assert!(hc.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_substep() {
        let (_, td, _) = setup(F3, 5, 1, [0.0; 3]);
        assert!(solve_transport(&td, 0.0).is_err());
        assert!(solve_transport(&td, 1.5).is_err());
    }

    #[test]
    fn curved_characteristics_converge() {
        // kappa varies with y: characteristics drift in x, lambda' != 0.
        let map = "m=2,q=4; x1; x2; x1^2; x1*x2 + 0.3*x2^3";
        let dg = |x: &[f64]| vec![0.2 * x[1], (x[0] + x[1]).sin(), 1.0 + 0.5 * x[0] * x[0]];
        let errs: Vec<(f64, f64)> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let g = Grid::uniform(2, -0.5, 0.5, n).unwrap();
                let f = kernel_field(&parse_map_spec(map).unwrap(), &g, 1e-8).unwrap();
                let d = lambda_derivatives(&f, 1);
                let dgf = Field::from_fn(FieldKind::Symtensor, &g, 3, |x| Ok(dg(x))).unwrap();
                let td = build_transport(&f, &d, &dgf, 1, 1e-6).unwrap();
                let sol = solve_transport(&td, 1.0).unwrap();
                let r = transport_residual(&td, &sol.h);
                let hc = assemble_covector(&f, 1, &sol.h).unwrap();
                let c = compatibility_residual(&f, &hc, &dgf).unwrap();
                let interior =
                    |v: &[f64]| g.interior_nodes().map(|p| v[p].abs()).fold(0.0, f64::max);
                (interior(&r), interior(&c))
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0].0 / w[1].0).log2() >= 1.5, "transport {errs:?}");
            assert!((w[0].1 / w[1].1).log2() >= 1.5, "compatibility {errs:?}");
        }
    }
}
