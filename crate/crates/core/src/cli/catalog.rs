//! Built-in example maps with their reference perturbations and expected
//! outcomes. Closed-form solutions assume the default box `[-1, 1]^m`.

use crate::error::{Error, Result};
use crate::jetcalc::{pairs, parse_map_spec, MapSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    /// Critical dimension: admissibility verdict and, when admissible, the
    /// zero-based transversal coordinate.
    Critical {
        verdict: bool,
        alpha0: Option<usize>,
    },
    /// Free branch.
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    pub description: String,
    pub map: String,
    pub grid_n: usize,
    /// `m(m+1)/2` expressions in `(a <= b)` order.
    pub dg: String,
    pub expect: Expectation,
    /// `q` expressions for the solution of the reference problem.
    pub closed_form_df: Option<String>,
}

impl CatalogEntry {
    pub fn spec(&self) -> MapSpec {
        parse_map_spec(&self.map).expect("catalog maps parse")
    }

    pub fn expected_verdict(&self) -> String {
        match &self.expect {
            Expectation::Critical {
                verdict: true,
                alpha0,
            } => {
                format!("admissible, alpha0 = x{}", alpha0.map_or(0, |a| a + 1))
            }
            Expectation::Critical { verdict: false, .. } => "not admissible".into(),
            Expectation::Free => "free".into(),
        }
    }
}

fn entry(
    name: &str,
    description: &str,
    map: &str,
    dg: &str,
    expect: Expectation,
    df: Option<&str>,
) -> CatalogEntry {
    CatalogEntry {
        name: name.into(),
        description: description.into(),
        map: map.into(),
        grid_n: 33,
        dg: dg.into(),
        expect,
        closed_form_df: df.map(Into::into),
    }
}

/// Canonical free map `R^m -> R^{m(m+3)/2}` with the quadratic component
/// `x_a x_b` (zero-based `a <= b`) removed.
pub fn projected_free_map(m: usize, drop: (usize, usize)) -> Result<CatalogEntry> {
    let (a, b) = if drop.0 <= drop.1 {
        drop
    } else {
        (drop.1, drop.0)
    };
    if m == 0 || b >= m {
        return Err(Error::Options(format!(
            "cannot drop x{}*x{} from the canonical map in dimension {m}",
            a + 1,
            b + 1
        )));
    }
    let mut comps: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
    for (c, d) in pairs(m) {
        if (c, d) == (a, b) {
            continue;
        }
        comps.push(if c == d {
            format!("x{}^2", c + 1)
        } else {
            format!("x{}*x{}", c + 1, d + 1)
        });
    }
    let q = comps.len();
    let map = format!("m={m},q={q}; {};", comps.join("; "));
    let dg: Vec<&str> = pairs(m)
        .into_iter()
        .map(|p| if p == (a, b) { "1" } else { "0" })
        .collect();
    let mut df = vec!["0".to_string(); q];
    df[b] = if a == b {
        format!("(x{}+1)/2", a + 1)
    } else {
        format!("x{}+1", a + 1)
    };
    let name = if m == 3 && (a, b) == (0, 1) {
        "fpi-m3".to_string()
    } else {
        format!("fpi-m{m}")
    };
    Ok(entry(
        &name,
        &format!(
            "canonical free map in dimension {m} with x{}*x{} removed",
            a + 1,
            b + 1
        ),
        &map,
        &dg.join("; "),
        Expectation::Critical {
            verdict: true,
            alpha0: Some(a),
        },
        Some(&format!("{};", df.join("; "))),
    ))
    .map(|mut e| {
        if m >= 3 {
            e.grid_n = 17;
        }
        e
    })
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        entry(
            "example1",
            "product of two free curves, (x, e^x, y, e^y)",
            "m=2,q=4; x1; exp(x1); x2; exp(x2);",
            "0; 1; 0",
            Expectation::Critical {
                verdict: true,
                alpha0: Some(0),
            },
            Some("0; 0; x1+1; 0;"),
        ),
        entry(
            "f1",
            "(x, y, xy, y^2)",
            "m=2,q=4; x1; x2; x1*x2; x2^2;",
            "1; 0; 0",
            Expectation::Critical {
                verdict: true,
                alpha0: Some(0),
            },
            Some("(x1+1)/2; 0; 0; 0;"),
        ),
        entry(
            "f2",
            "(x, y, x^2, y^2)",
            "m=2,q=4; x1; x2; x1^2; x2^2;",
            "0; 1; 0",
            Expectation::Critical {
                verdict: true,
                alpha0: Some(0),
            },
            Some("0; x1+1; 0; 0;"),
        ),
        entry(
            "f3",
            "(x, y, x^2, xy)",
            "m=2,q=4; x1; x2; x1^2; x1*x2;",
            "0; 0; 1",
            Expectation::Critical {
                verdict: true,
                alpha0: Some(1),
            },
            Some("0; (x2+1)/2; 0; 0;"),
        ),
        entry(
            "canonical-free",
            "canonical free map (x, y, x^2, xy, y^2)",
            "m=2,q=5; x1; x2; x1^2; x1*x2; x2^2;",
            "0; 0; 1",
            Expectation::Free,
            Some("0; x2/2; 0; 0; -1/4;"),
        ),
        projected_free_map(3, (0, 1)).expect("valid projection"),
        entry(
            "rank-deficient",
            "(x, y, x^2, x^2): second-order jet loses rank",
            "m=2,q=4; x1; x2; x1^2; x1^2;",
            "0; 0; 1",
            Expectation::Critical {
                verdict: false,
                alpha0: None,
            },
            None,
        ),
    ]
}

/// Looks up `name`; `fpi-m<k>` builds the projection for any `k >= 1`,
/// optionally dropping the zero-based pair `drop` (default `(0, 1)`, or
/// `(0, 0)` when `k = 1`).
pub fn lookup(name: &str, drop: Option<(usize, usize)>) -> Result<CatalogEntry> {
    if let Some(k) = name.strip_prefix("fpi-m") {
        let m: usize = k.parse().map_err(|_| Error::UnknownCatalog(name.into()))?;
        if m == 0 {
            return Err(Error::UnknownCatalog(name.into()));
        }
        let default = if m == 1 { (0, 0) } else { (0, 1) };
        return projected_free_map(m, drop.unwrap_or(default));
    }
    catalog()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownCatalog(name.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        let names: Vec<String> = catalog().into_iter().map(|e| e.name).collect();
        for n in [
            "example1",
            "f1",
            "f2",
            "f3",
            "canonical-free",
            "fpi-m3",
            "rank-deficient",
        ] {
            assert!(names.iter().any(|x| x == n), "{n}");
        }
        assert!(matches!(
            lookup("nope", None),
            Err(Error::UnknownCatalog(_))
        ));
        assert!(matches!(
            lookup("fpi-mx", None),
            Err(Error::UnknownCatalog(_))
        ));
    }

    #[test]
    fn every_map_parses_with_matching_dg() {
        for e in catalog() {
            let s = e.spec();
            let dg = crate::jetcalc::parse_expr_list(&e.dg, s.m()).unwrap();
            assert_eq!(dg.len(), s.m() * (s.m() + 1) / 2, "{}", e.name);
            if let Some(df) = &e.closed_form_df {
                assert_eq!(
                    crate::jetcalc::parse_expr_list(df, s.m()).unwrap().len(),
                    s.q()
                );
            }
        }
    }

    #[test]
    fn projections() {
        let e = lookup("fpi-m3", None).unwrap();
        assert_eq!(
            e.map,
            "m=3,q=8; x1; x2; x3; x1^2; x1*x3; x2^2; x2*x3; x3^2;"
        );
        let e = lookup("fpi-m2", Some((1, 1))).unwrap();
        assert_eq!(e.map, "m=2,q=4; x1; x2; x1^2; x1*x2;");
        assert_eq!(
            e.expect,
            Expectation::Critical {
                verdict: true,
                alpha0: Some(1)
            }
        );
        let e = lookup("fpi-m1", None).unwrap();
        assert_eq!(e.map, "m=1,q=1; x1;");
        assert!(lookup("fpi-m2", Some((0, 2))).is_err());
    }
}
