//! Map specifications, exact second-order jets, the pullback metric and the
//! coefficient matrix of the linearized system.

mod expr;
mod taylor;

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;

pub use expr::{parse_expr, parse_expr_list, Expr, Func};
pub use taylor::{eval_taylor, Taylor2};

/// Default relative singular-value threshold.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Number of unordered index pairs `a <= b` in dimension `m`.
pub fn n_pairs(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Number of rows of the coefficient matrix, `m(m+3)/2`.
pub fn n_rows(m: usize) -> usize {
    m + n_pairs(m)
}

/// Position of the pair `(a, b)` (either order) in the packed lexicographic
/// `a <= b` layout.
pub fn pair_index(m: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * m + a - a * (a + 1) / 2 + (b - a)
}

/// All pairs `(a, b)` with `a <= b`, in packed order.
pub fn pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_pairs(m));
    for a in 0..m {
        for b in a..m {
            out.push((a, b));
        }
    }
    out
}

/// A smooth map `R^m -> R^q` given by one expression per component.
#[derive(Debug, Clone)]
pub struct MapSpec {
    m: usize,
    q: usize,
    components: Vec<Expr>,
    sources: Vec<String>,
}

impl MapSpec {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// `q == m(m+3)/2 - 1`.
    pub fn is_critical(&self) -> bool {
        self.q + 1 == n_rows(self.m)
    }

    /// Canonical text form, accepted by [`parse_map_spec`].
    pub fn to_text(&self) -> String {
        let mut s = format!("m={},q={};", self.m, self.q);
        for c in &self.sources {
            s.push(' ');
            s.push_str(c);
            s.push(';');
        }
        s
    }

    /// Values of all components at `point`.
    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }
}

impl fmt::Display for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.sources.join(", "))
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let compact: String = header.chars().filter(|c| !c.is_whitespace()).collect();
    let mut m = None;
    let mut q = None;
    for kv in compact.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Syntax(format!("bad header entry `{kv}`")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::Syntax(format!("bad integer `{v}` in header")))?;
        match k {
            "m" if m.is_none() => m = Some(v),
            "q" if q.is_none() => q = Some(v),
            _ => return Err(Error::Syntax(format!("unexpected header key `{k}`"))),
        }
    }
    match (m, q) {
        (Some(m), Some(q)) if m > 0 && q > 0 => Ok((m, q)),
        (Some(_), Some(_)) => Err(Error::Arity("m and q must be positive".into())),
        _ => Err(Error::Syntax("header must declare m and q".into())),
    }
}

/// Parses `m=<int>,q=<int>; expr_1; ...; expr_q` (whitespace-insensitive,
/// optional trailing `;`).
pub fn parse_map_spec(text: &str) -> Result<MapSpec> {
    let (header, body) = text
        .split_once(';')
        .ok_or_else(|| Error::Syntax("missing `;` after header".into()))?;
    let (m, q) = parse_header(header)?;
    let mut raw: Vec<&str> = body.split(';').collect();
    while raw.last().is_some_and(|s| s.trim().is_empty()) {
        raw.pop();
    }
    let components = parse_expr_list(&raw.join(";"), m).or_else(|e| match e {
        Error::Syntax(_) if raw.is_empty() => Ok(Vec::new()),
        e => Err(e),
    })?;
    if components.len() != q {
        return Err(Error::Arity(format!(
            "header declares q = {q} but {} component(s) were given",
            components.len()
        )));
    }
    let sources = raw
        .iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    Ok(MapSpec {
        m,
        q,
        components,
        sources,
    })
}

/// Value, first and second derivatives of a map at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    m: usize,
    q: usize,
    value: Vec<f64>,
    /// `d1[a * q + i] = d_a f^i`
    d1: Vec<f64>,
    /// `d2[pair(a,b) * q + i] = d_ab f^i`, packed `a <= b`.
    d2: Vec<f64>,
}

impl Jet2 {
    pub fn zeros(m: usize, q: usize) -> Self {
        Self {
            m,
            q,
            value: vec![0.0; q],
            d1: vec![0.0; m * q],
            d2: vec![0.0; n_pairs(m) * q],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    /// `d_a f` as a length-q slice.
    pub fn d1(&self, a: usize) -> &[f64] {
        &self.d1[a * self.q..(a + 1) * self.q]
    }

    /// `d_ab f` as a length-q slice; symmetric in `(a, b)`.
    pub fn d2(&self, a: usize, b: usize) -> &[f64] {
        let p = pair_index(self.m, a, b);
        &self.d2[p * self.q..(p + 1) * self.q]
    }
}

/// Exact second-order jet of `spec` at `point` by truncated Taylor arithmetic.
pub fn eval_jet2(spec: &MapSpec, point: &[f64]) -> Result<Jet2> {
    if point.len() != spec.m {
        return Err(Error::WrongShape(format!(
            "point has {} coordinates, map expects {}",
            point.len(),
            spec.m
        )));
    }
    let (m, q) = (spec.m, spec.q);
    let mut jet = Jet2::zeros(m, q);
    for (i, c) in spec.components.iter().enumerate() {
        let t = eval_taylor(c, point).map_err(|e| match e {
            Error::Domain(msg) => {
                Error::Domain(format!("{msg} in component {} at {point:?}", i + 1))
            }
            e => e,
        })?;
        jet.value[i] = t.value;
        for a in 0..m {
            jet.d1[a * q + i] = t.grad[a];
        }
        for p in 0..n_pairs(m) {
            jet.d2[p * q + i] = t.hess[p];
        }
    }
    Ok(jet)
}

/// Jets at every node of `grid`, in node order.
pub fn eval_jets(spec: &MapSpec, grid: &Grid) -> Result<Vec<Jet2>> {
    (0..grid.len())
        .into_par_iter()
        .map(|p| eval_jet2(spec, &grid.point(p)))
        .collect()
}

/// Symmetric 2-tensor stored as its packed `a <= b` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricTensor {
    m: usize,
    entries: Vec<f64>,
}

impl SymmetricTensor {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            entries: vec![0.0; n_pairs(m)],
        }
    }

    pub fn from_packed(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n_pairs(m) {
            return Err(Error::WrongShape(format!(
                "symmetric tensor in dimension {m} needs {} entries, got {}",
                n_pairs(m),
                entries.len()
            )));
        }
        Ok(Self { m, entries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[pair_index(self.m, a, b)]
    }

    pub fn packed(&self) -> &[f64] {
        &self.entries
    }
}

/// `g_ab = sum_i d_a f^i d_b f^i` from a precomputed jet.
pub fn pullback_from_jet(jet: &Jet2) -> SymmetricTensor {
    let entries = pairs(jet.m)
        .into_iter()
        .map(|(a, b)| linalg::dot(jet.d1(a), jet.d1(b)))
        .collect();
    SymmetricTensor { m: jet.m, entries }
}

/// Pullback of the Euclidean metric by `spec` at `point`.
pub fn pullback_metric(spec: &MapSpec, point: &[f64]) -> Result<SymmetricTensor> {
    Ok(pullback_from_jet(&eval_jet2(spec, point)?))
}

/// The `N x q` matrix of the linearized system: first-derivative rows in
/// ascending axis order, then second-derivative rows for pairs `a <= b` in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    m: usize,
    matrix: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Builds from an arbitrary matrix; the row count must be `m(m+3)/2`.
    pub fn from_matrix(m: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != n_rows(m) {
            return Err(Error::WrongShape(format!(
                "coefficient matrix for m = {m} needs {} rows, got {}",
                n_rows(m),
                matrix.nrows()
            )));
        }
        Ok(Self { m, matrix })
    }

    /// `sigma_min / sigma_max` over the `min(N, q)` singular values.
    pub fn singular_ratio(&self) -> f64 {
        linalg::singular_ratio(&self.matrix)
    }
}

pub fn coefficient_matrix(jet: &Jet2) -> CoefficientMatrix {
    let (m, q) = (jet.m, jet.q);
    let n = n_rows(m);
    let mut matrix = DMatrix::zeros(n, q);
    for a in 0..m {
        for (i, v) in jet.d1(a).iter().enumerate() {
            matrix[(a, i)] = *v;
        }
    }
    for (p, (a, b)) in pairs(m).into_iter().enumerate() {
        for (i, v) in jet.d2(a, b).iter().enumerate() {
            matrix[(m + p, i)] = *v;
        }
    }
    CoefficientMatrix { m, matrix }
}

/// Whether the first and second derivatives are linearly independent.
pub fn is_free(jet: &Jet2, rank_tol: f64) -> bool {
    if jet.q < n_rows(jet.m) {
        return false;
    }
    coefficient_matrix(jet).singular_ratio() > rank_tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_layout() {
        assert_eq!(pairs(2), vec![(0, 0), (0, 1), (1, 1)]);
        for m in 1..6 {
            for (p, (a, b)) in pairs(m).into_iter().enumerate() {
                assert_eq!(pair_index(m, a, b), p);
                assert_eq!(pair_index(m, b, a), p);
            }
        }
        assert_eq!(n_rows(2), 5);
        assert_eq!(n_rows(3), 9);
    }

    #[test]
    fn parse_examples() {
        let s = parse_map_spec("m=2,q=4; x1; exp(x1); x2; exp(x2)").unwrap();
        assert_eq!((s.m(), s.q()), (2, 4));
        assert!(s.is_critical());
        let s = parse_map_spec(" m = 2 , q = 4 ;\n x1;\n x2;\n x1^2;\n x1*x2;\n").unwrap();
        assert_eq!(s.components().len(), 4);
        assert_eq!(s.to_text(), "m=2,q=4; x1; x2; x1^2; x1*x2;");
        assert!(matches!(
            parse_map_spec("m=2,q=3; x1; x2"),
            Err(Error::Arity(_))
        ));
        assert!(matches!(
            parse_map_spec("m=2,q=1; x3"),
            Err(Error::Arity(_))
        ));
        assert!(matches!(
            parse_map_spec("m=2,q=1; x1 +"),
            Err(Error::Syntax(_))
        ));
        assert!(matches!(
            parse_map_spec("m=2 q=1; x1"),
            Err(Error::Syntax(_))
        ));
        assert!(matches!(parse_map_spec("x1; x2"), Err(Error::Syntax(_))));
        assert!(matches!(parse_map_spec("m=2,q=2;"), Err(Error::Arity(_))));
        assert!(matches!(parse_map_spec("m=0,q=1; 1"), Err(Error::Arity(_))));
    }

    #[test]
    fn round_trip_text() {
        let s = parse_map_spec("m=2,q=4; x1; exp(x1); x2; exp(x2)").unwrap();
        let t = parse_map_spec(&s.to_text()).unwrap();
        assert_eq!(s.components(), t.components());
    }

    #[test]
    fn example1_jet_at_origin() {
        let s = parse_map_spec("m=2,q=4; x1; exp(x1); x2; exp(x2)").unwrap();
        let j = eval_jet2(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(j.value(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(j.d1(0), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(j.d1(1), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(j.d2(0, 0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(j.d2(0, 1), &[0.0; 4]);
        assert_eq!(j.d2(1, 1), &[0.0, 0.0, 0.0, 1.0]);
        let g = pullback_from_jet(&j);
        assert_eq!(g.packed(), &[2.0, 0.0, 2.0]);
        let a = coefficient_matrix(&j);
        let expect = DMatrix::from_row_slice(
            5,
            4,
            &[
                1., 1., 0., 0., //
                0., 0., 1., 1., //
                0., 1., 0., 0., //
                0., 0., 0., 0., //
                0., 0., 0., 1.,
            ],
        );
        assert_eq!(a.as_matrix(), &expect);
    }

    #[test]
    fn f3_jet() {
        let s = parse_map_spec("m=2,q=4; x1; x2; x1^2; x1*x2").unwrap();
        let j = eval_jet2(&s, &[1.0, 2.0]).unwrap();
        assert_eq!(j.value(), &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(j.d1(0), &[1.0, 0.0, 2.0, 2.0]);
        assert_eq!(j.d1(1), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(j.d2(0, 0), &[0.0, 0.0, 2.0, 0.0]);
        assert_eq!(j.d2(1, 0), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(j.d2(1, 1), &[0.0; 4]);

        let j0 = eval_jet2(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(pullback_from_jet(&j0).packed(), &[1.0, 0.0, 1.0]);
        let a = coefficient_matrix(&j0);
        let expect = DMatrix::from_row_slice(
            5,
            4,
            &[
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 2., 0., //
                0., 0., 0., 1., //
                0., 0., 0., 0.,
            ],
        );
        assert_eq!(a.as_matrix(), &expect);
    }

    #[test]
    fn zero_map() {
        let s = parse_map_spec("m=2,q=3; 0; 0; 0").unwrap();
        let j = eval_jet2(&s, &[0.3, -0.7]).unwrap();
        assert_eq!(j, Jet2::zeros(2, 3));
        assert_eq!(coefficient_matrix(&j).as_matrix(), &DMatrix::zeros(5, 3));
    }

    #[test]
    fn identity_pullback() {
        let s = parse_map_spec("m=2,q=2; x1; x2").unwrap();
        for p in [[0.0, 0.0], [0.5, -2.0]] {
            assert_eq!(pullback_metric(&s, &p).unwrap().packed(), &[1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn free_map_detection() {
        let canon = parse_map_spec("m=2,q=5; x1; x2; x1^2; x1*x2; x2^2").unwrap();
        for p in [[0.0, 0.0], [0.9, -0.4], [-3.0, 2.0]] {
            assert!(is_free(&eval_jet2(&canon, &p).unwrap(), DEFAULT_RANK_TOL));
        }
        let f3 = parse_map_spec("m=2,q=4; x1; x2; x1^2; x1*x2").unwrap();
        assert!(!is_free(
            &eval_jet2(&f3, &[0.1, 0.2]).unwrap(),
            DEFAULT_RANK_TOL
        ));
        let dup = parse_map_spec("m=2,q=5; x1; x2; x1^2; x1^2; 0").unwrap();
        assert!(!is_free(
            &eval_jet2(&dup, &[0.0, 0.0]).unwrap(),
            DEFAULT_RANK_TOL
        ));
    }

    #[test]
    fn domain_error_propagates() {
        let s = parse_map_spec("m=1,q=1; log(x1)").unwrap();
        assert!(matches!(eval_jet2(&s, &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(
            pullback_metric(&s, &[-1.0]),
            Err(Error::Domain(_))
        ));
    }
}
