use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::Serialize;

use super::{Dimension, Rational, BASE_COUNT};

/// One column per variable, one row per base dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionMatrix {
    names: Vec<String>,
    columns: Vec<Dimension>,
}

impl DimensionMatrix {
    pub fn new(variables: &[(String, Dimension)]) -> Self {
        DimensionMatrix {
            names: variables.iter().map(|(n, _)| n.clone()).collect(),
            columns: variables.iter().map(|(_, d)| *d).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Dimension] {
        &self.columns
    }

    fn rows(&self) -> Vec<Vec<Rational>> {
        (0..BASE_COUNT)
            .map(|r| self.columns.iter().map(|c| c.exponent(r)).collect())
            .collect()
    }

    /// Reduced row echelon form; returns the pivot column of each nonzero row.
    fn reduce(&self) -> (Vec<Vec<Rational>>, Vec<usize>) {
        let mut m = self.rows();
        let ncols = self.columns.len();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..ncols {
            if row == m.len() {
                break;
            }
            let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
                continue;
            };
            m.swap(row, p);
            let lead = m[row][col];
            for v in m[row].iter_mut() {
                *v /= lead;
            }
            let pivot = m[row].clone();
            for (r, line) in m.iter_mut().enumerate() {
                if r != row && !line[col].is_zero() {
                    let factor = line[col];
                    for (v, p) in line.iter_mut().zip(&pivot) {
                        *v -= factor * p;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.reduce().1.len()
    }
}

/// Rank of the dimension matrix built from `dims`.
pub fn rank(dims: &[Dimension]) -> usize {
    DimensionMatrix {
        names: vec![String::new(); dims.len()],
        columns: dims.to_vec(),
    }
    .rank()
}

/// A dimensionless product of powers. Exponents are listed for every input
/// variable in input order (zeros included), integer, with gcd 1 and the
/// first nonzero exponent positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PiGroup {
    pub exponents: Vec<(String, i64)>,
}

impl PiGroup {
    pub fn exponent(&self, name: &str) -> Option<i64> {
        self.exponents.iter().find(|(n, _)| n == name).map(|(_, e)| *e)
    }

    /// Combined dimension of the product, computed exactly.
    pub fn dimension(&self, dims: &[(String, Dimension)]) -> Dimension {
        self.exponents
            .iter()
            .zip(dims)
            .fold(Dimension::dimensionless(), |acc, ((_, e), (_, d))| acc * d.powi(*e))
    }

    /// Human-readable product such as `T^2·L^-1·g`.
    pub fn product_string(&self) -> String {
        let parts: Vec<String> = self
            .exponents
            .iter()
            .filter(|(_, e)| *e != 0)
            .map(|(n, e)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
            .collect();
        parts.join("·")
    }
}

/// The dimensionless description of a variable set.
#[derive(Debug, Clone, Serialize)]
pub struct PiReport {
    pub variables: Vec<String>,
    pub rank: usize,
    pub groups: Vec<PiGroup>,
}

impl PiReport {
    pub fn new(variables: &[(String, Dimension)]) -> Self {
        let matrix = DimensionMatrix::new(variables);
        PiReport {
            variables: matrix.names().to_vec(),
            rank: matrix.rank(),
            groups: pi_groups(variables),
        }
    }

    /// Parses `{"variables": [{"name": "T", "dimension": {"T": "1"}}, ...]}`.
    pub fn from_document(text: &str) -> Result<Self, String> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Var {
            name: String,
            dimension: Dimension,
        }
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            variables: Vec<Var>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.variables.is_empty() {
            return Err("no variables".into());
        }
        let mut vars: Vec<(String, Dimension)> = Vec::new();
        for v in doc.variables {
            if vars.iter().any(|(n, _)| *n == v.name) {
                return Err(format!("duplicate variable `{}`", v.name));
            }
            vars.push((v.name, v.dimension));
        }
        Ok(PiReport::new(&vars))
    }

    /// Groups as exponent maps with a product string each.
    pub fn to_json(&self) -> serde_json::Value {
        let groups: Vec<serde_json::Value> = self
            .groups
            .iter()
            .map(|g| {
                let exps: serde_json::Map<String, serde_json::Value> =
                    g.exponents.iter().map(|(n, e)| (n.clone(), (*e).into())).collect();
                serde_json::json!({"exponents": exps, "product": g.product_string()})
            })
            .collect();
        serde_json::json!({"variables": self.variables, "rank": self.rank, "groups": groups})
    }
}

/// Normalized basis of the nullspace of the dimension matrix: one group per
/// free (non-pivot) column, taken in input order. Returns `n - rank` groups.
pub fn pi_groups(variables: &[(String, Dimension)]) -> Vec<PiGroup> {
    let matrix = DimensionMatrix::new(variables);
    let (rref, pivots) = matrix.reduce();
    let n = variables.len();
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();

    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); n];
            v[f] = Rational::from_integer(1);
            for (row, &p) in pivots.iter().enumerate() {
                v[p] = -rref[row][f];
            }
            let ints = normalize(&v);
            PiGroup {
                exponents: matrix.names().iter().cloned().zip(ints).collect(),
            }
        })
        .collect()
}

fn normalize(v: &[Rational]) -> Vec<i64> {
    let lcm = v.iter().fold(1i64, |acc, r| acc.lcm(r.denom()));
    let mut ints: Vec<i64> = v.iter().map(|r| (r * lcm).to_integer()).collect();
    let gcd = ints.iter().fold(0i64, |acc, x| acc.gcd(x));
    if gcd > 1 {
        for x in ints.iter_mut() {
            *x /= gcd;
        }
    }
    if ints.iter().find(|x| **x != 0).is_some_and(|x| x.is_negative()) {
        for x in ints.iter_mut() {
            *x = -*x;
        }
    }
    ints
}
