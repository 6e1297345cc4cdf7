//! Rectangular box grids, fields sampled on them, finite-difference stencils
//! and multilinear interpolation.
//!
//! Nodes are stored row-major with axis 0 slowest. Multi-component fields
//! keep the component index fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jetcalc::n_pairs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != counts.len() {
            return Err(Error::InvalidGrid(format!(
                "{} bound pairs for {} axis counts",
                bounds.len(),
                counts.len()
            )));
        }
        for (axis, (&(a, b), &n)) in bounds.iter().zip(&counts).enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has bounds [{a}, {b}]",
                    axis + 1
                )));
            }
            if n < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has {n} < 3 nodes",
                    axis + 1
                )));
            }
        }
        Ok(Self { bounds, counts })
    }

    /// `n` nodes per axis on `[a, b]^m`.
    pub fn uniform(m: usize, a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new(vec![(a, b); m], vec![n; m])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        (b - a) / (self.counts[axis] - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let (a, b) = self.bounds[axis];
        if i + 1 == self.counts[axis] {
            b
        } else {
            a + i as f64 * self.spacing(axis)
        }
    }

    /// Linear-index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = node % self.counts[axis];
            node /= self.counts[axis];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    /// At least one node away from every face.
    pub fn is_interior(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.counts)
            .all(|(&i, &n)| i >= 1 && i + 2 <= n)
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&p| self.is_interior(p))
    }

    /// Product of spacings, the volume weight of one node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Second-order derivative along `axis` of a scalar nodal array: centered
    /// in the interior, one-sided three-point at the faces.
    pub fn derivative(&self, values: &[f64], axis: usize) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.len());
        let n = self.counts[axis];
        let s = self.stride(axis);
        let inv2h = 0.5 / self.spacing(axis);
        let mut out = vec![0.0; values.len()];
        for (p, o) in out.iter_mut().enumerate() {
            let i = (p / s) % n;
            *o = if i == 0 {
                (-3.0 * values[p] + 4.0 * values[p + s] - values[p + 2 * s]) * inv2h
            } else if i == n - 1 {
                (3.0 * values[p] - 4.0 * values[p - s] + values[p - 2 * s]) * inv2h
            } else {
                (values[p + s] - values[p - s]) * inv2h
            };
        }
        out
    }

    /// Multilinear interpolation of a nodal field with `ncomp` components.
    /// Coordinates outside the box are clamped to it; returns whether the
    /// point lay outside (beyond rounding).
    pub fn interpolate(&self, data: &[f64], ncomp: usize, point: &[f64], out: &mut [f64]) -> bool {
        self.interpolate_with(data, ncomp, point, out, false)
    }

    /// As [`Grid::interpolate`], but outside the box the multilinear
    /// polynomial of the nearest boundary cell is continued instead of
    /// being frozen at the face.
    pub fn extrapolate(&self, data: &[f64], ncomp: usize, point: &[f64], out: &mut [f64]) -> bool {
        self.interpolate_with(data, ncomp, point, out, true)
    }

    fn interpolate_with(
        &self,
        data: &[f64],
        ncomp: usize,
        point: &[f64],
        out: &mut [f64],
        extend: bool,
    ) -> bool {
        let m = self.dim();
        let mut outside = false;
        let mut base = vec![0usize; m];
        let mut frac = vec![0.0; m];
        for axis in 0..m {
            let (a, b) = self.bounds[axis];
            let h = self.spacing(axis);
            let mut x = point[axis];
            if x < a || x > b {
                if x < a - 1e-9 * h || x > b + 1e-9 * h {
                    outside = true;
                }
                if !extend {
                    x = x.clamp(a, b);
                }
            }
            let t = (x - a) / h;
            let n = self.counts[axis];
            let i = (t.floor().max(0.0) as usize).min(n - 2);
            base[axis] = i;
            frac[axis] = if extend {
                t - i as f64
            } else {
                (t - i as f64).clamp(0.0, 1.0)
            };
        }
        out[..ncomp].iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            let mut node = 0;
            for axis in 0..m {
                let bit = (corner >> axis) & 1;
                w *= if bit == 1 {
                    frac[axis]
                } else {
                    1.0 - frac[axis]
                };
                node = node * self.counts[axis] + base[axis] + bit;
            }
            if w == 0.0 {
                continue;
            }
            let src = &data[node * ncomp..(node + 1) * ncomp];
            for (o, v) in out.iter_mut().zip(src) {
                *o += w * v;
            }
        }
        outside
    }

    /// Indices of axis-adjacent neighbours of `node` with larger linear index.
    pub fn forward_neighbors(&self, node: usize) -> Vec<usize> {
        let idx = self.multi_index(node);
        (0..self.dim())
            .filter(|&a| idx[a] + 1 < self.counts[a])
            .map(|a| node + self.stride(a))
            .collect()
    }

    /// All axis-adjacent neighbours of `node`.
    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let idx = self.multi_index(node);
        let mut out = Vec::with_capacity(2 * self.dim());
        for (a, (&i, &n)) in idx.iter().zip(&self.counts).enumerate() {
            let s = self.stride(a);
            if i > 0 {
                out.push(node - s);
            }
            if i + 1 < n {
                out.push(node + s);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Covector,
    Vector,
    Symtensor,
}

impl FieldKind {
    /// Component count for a field of this kind over `R^m` with target `R^q`.
    pub fn components(self, m: usize, q: Option<usize>) -> Option<usize> {
        match self {
            FieldKind::Scalar => Some(1),
            FieldKind::Covector => Some(m),
            FieldKind::Vector => q,
            FieldKind::Symtensor => Some(n_pairs(m)),
        }
    }
}

/// Nodal data with `ncomp` values per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    kind: FieldKind,
    grid: Grid,
    ncomp: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(kind: FieldKind, grid: &Grid, ncomp: usize) -> Self {
        Self {
            kind,
            grid: grid.clone(),
            ncomp,
            data: vec![0.0; grid.len() * ncomp],
        }
    }

    pub fn from_data(kind: FieldKind, grid: &Grid, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(expected) = kind.components(grid.dim(), Some(ncomp)) {
            if expected != ncomp {
                return Err(Error::WrongShape(format!(
                    "{kind:?} field on an m = {} grid has {expected} components, got {ncomp}",
                    grid.dim()
                )));
            }
        }
        if data.len() != grid.len() * ncomp {
            return Err(Error::WrongShape(format!(
                "field data has {} values, expected {}",
                data.len(),
                grid.len() * ncomp
            )));
        }
        Ok(Self {
            kind,
            grid: grid.clone(),
            ncomp,
            data,
        })
    }

    /// Samples `f(point) -> values` at every node.
    pub fn from_fn<F>(kind: FieldKind, grid: &Grid, ncomp: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut data = Vec::with_capacity(grid.len() * ncomp);
        for p in 0..grid.len() {
            let v = f(&grid.point(p))?;
            if v.len() != ncomp {
                return Err(Error::WrongShape(format!(
                    "sampler returned {} values, expected {ncomp}",
                    v.len()
                )));
            }
            data.extend_from_slice(&v);
        }
        Self::from_data(kind, grid, ncomp, data)
    }

    /// Like [`Field::from_fn`] but the sampler receives the node index.
    pub fn from_fn_indexed<F>(kind: FieldKind, grid: &Grid, ncomp: usize, f: F) -> Result<Self>
    where
        F: Fn(usize) -> Vec<f64>,
    {
        let data: Vec<f64> = (0..grid.len()).flat_map(f).collect();
        Self::from_data(kind, grid, ncomp, data)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    /// One component as a nodal scalar array.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.ncomp)
            .copied()
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Field {
            data,
            ..self.clone()
        })
    }

    pub fn scale(&self, c: f64) -> Field {
        Field {
            data: self.data.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        if self.ncomp != other.ncomp {
            return Err(Error::WrongShape(format!(
                "component counts differ: {} vs {}",
                self.ncomp, other.ncomp
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn indexing_is_row_major_axis0_slowest() {
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.stride(0), 5);
        assert_eq!(g.stride(1), 1);
        assert_eq!(g.multi_index(7), vec![1, 2]);
        assert_eq!(g.linear_index(&[1, 2]), 7);
        assert_eq!(g.point(7), vec![0.5, 1.0]);
        assert_eq!(g.point(14), vec![1.0, 2.0]);
        assert!(g.is_interior(7));
        assert!(!g.is_interior(5));
        assert_eq!(g.interior_nodes().count(), 3);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(vec![(1.0, 1.0)], vec![5]).is_err());
        assert!(Grid::new(vec![(0.0, 1.0)], vec![2]).is_err());
        assert!(Grid::new(vec![(0.0, 1.0)], vec![3, 3]).is_err());
        assert!(Grid::new(vec![], vec![]).is_err());
    }

    #[test]
    fn derivative_exact_on_quadratics() {
        let g = Grid::uniform(2, -1.0, 1.0, 7).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|p| {
                let x = g.point(p);
                x[0] * x[0] + 3.0 * x[0] * x[1] - x[1]
            })
            .collect();
        let dx = g.derivative(&f, 0);
        let dy = g.derivative(&f, 1);
        for p in 0..g.len() {
            let x = g.point(p);
            assert_abs_diff_eq!(dx[p], 2.0 * x[0] + 3.0 * x[1], epsilon = 1e-12);
            assert_abs_diff_eq!(dy[p], 3.0 * x[0] - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_second_order() {
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&n| {
                let g = Grid::uniform(1, 0.0, 1.0, n).unwrap();
                let f: Vec<f64> = (0..n).map(|p| g.point(p)[0].sin()).collect();
                let d = g.derivative(&f, 0);
                (0..n)
                    .map(|p| (d[p] - g.point(p)[0].cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn interpolation_exact_on_bilinear() {
        let g = Grid::new(vec![(-1.0, 1.0), (0.0, 3.0)], vec![5, 4]).unwrap();
        let f = |x: &[f64]| vec![1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1], x[1]];
        let field = Field::from_fn(FieldKind::Vector, &g, 2, |x| Ok(f(x))).unwrap();
        let mut out = [0.0; 2];
        for pt in [[0.1, 0.2], [-1.0, 3.0], [0.77, 1.9]] {
            assert!(!g.interpolate(field.data(), 2, &pt, &mut out));
            let e = f(&pt);
            assert_abs_diff_eq!(out[0], e[0], epsilon = 1e-13);
            assert_abs_diff_eq!(out[1], e[1], epsilon = 1e-13);
        }
        assert!(g.interpolate(field.data(), 2, &[2.0, 1.0], &mut out));
        assert_abs_diff_eq!(out[0], f(&[1.0, 1.0])[0], epsilon = 1e-13);
        // a bilinear field is continued exactly
        for pt in [[2.0, 1.0], [-1.5, -0.25], [0.3, 3.5]] {
            assert!(g.extrapolate(field.data(), 2, &pt, &mut out));
            assert_abs_diff_eq!(out[0], f(&pt)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn neighbours() {
        let g = Grid::uniform(2, 0.0, 1.0, 3).unwrap();
        assert_eq!(g.neighbors(4), vec![1, 7, 3, 5]);
        assert_eq!(g.neighbors(0), vec![3, 1]);
        assert_eq!(g.forward_neighbors(8), Vec::<usize>::new());
    }

    #[test]
    fn field_shapes() {
        let g = Grid::uniform(2, 0.0, 1.0, 3).unwrap();
        assert!(Field::from_data(FieldKind::Symtensor, &g, 3, vec![0.0; 27]).is_ok());
        assert!(Field::from_data(FieldKind::Symtensor, &g, 2, vec![0.0; 18]).is_err());
        assert!(Field::from_data(FieldKind::Scalar, &g, 1, vec![0.0; 8]).is_err());
        let f = Field::from_fn(FieldKind::Covector, &g, 2, |x| Ok(x.to_vec())).unwrap();
        assert_eq!(f.component(1)[..3], [0.0, 0.5, 1.0]);
    }
}
