//! Dense linear-algebra helpers shared by the solvers, plus the boolean
//! reachability tests used for irreducibility and aperiodicity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on row (and column) sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Solves the square system `a x = b` by LU with partial pivoting.
pub fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Numerical(format!("{what}: singular system")))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what}: non-finite solution")));
    }
    Ok(x)
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what}: matrix not positive definite")))?;
    Ok(chol.solve(b))
}

/// Singular values of `a`, largest first.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Numerical rank with threshold `max(rows, cols) * eps * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let sv = singular_values(a);
    let Some(&top) = sv.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    let tol = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * top;
    sv.iter().filter(|&&s| s > tol).count()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Checks nonnegativity and unit row sums; returns the first offending row.
pub fn check_row_stochastic(p: &DMatrix<f64>, name: &str) -> Result<()> {
    if p.nrows() != p.ncols() {
        return Err(Error::Structural(format!(
            "{name} must be square, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    if p.nrows() == 0 {
        return Err(Error::Structural(format!("{name} is empty")));
    }
    for (i, row) in p.row_iter().enumerate() {
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Structural(format!(
                "{name} row {i} has invalid entry {v}"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Structural(format!(
                "{name} row {i} sums to {s}, not 1"
            )));
        }
    }
    Ok(())
}

/// Row-major adjacency bitsets of the positive entries of `p`.
struct BoolMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BoolMatrix {
    fn from_positive(p: &DMatrix<f64>) -> Self {
        let n = p.nrows();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for i in 0..n {
            for j in 0..n {
                if p[(i, j)] > 0.0 {
                    bits[i * words + j / 64] |= 1 << (j % 64);
                }
            }
        }
        BoolMatrix { n, words, bits }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn square(&self) -> Self {
        let mut bits = vec![0u64; self.bits.len()];
        for i in 0..self.n {
            let out = &mut bits[i * self.words..(i + 1) * self.words];
            for k in 0..self.n {
                if self.get(i, k) {
                    for (o, b) in out.iter_mut().zip(self.row(k)) {
                        *o |= b;
                    }
                }
            }
        }
        BoolMatrix {
            n: self.n,
            words: self.words,
            bits,
        }
    }

    fn all_set(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j)))
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Irreducibility: state 0 reaches every state and every state reaches 0.
pub fn is_irreducible(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                fwd[i].push(j);
                bwd[j].push(i);
            }
        }
    }
    reaches_all(&fwd) && reaches_all(&bwd)
}

/// Primitivity test: `P^k > 0` entrywise for some power `k >= n^2`,
/// reached by repeated boolean squaring. For an irreducible matrix this is
/// equivalent to aperiodicity.
pub fn is_primitive(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let target = (n * n).max(1);
    let mut b = BoolMatrix::from_positive(p);
    let mut power = 1usize;
    while power < target {
        b = b.square();
        power *= 2;
    }
    b.all_set()
}

/// Kronecker-style block matrix with blocks `q[(i, j)] * p`.
pub fn kron(q: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (q.nrows(), p.nrows());
    DMatrix::from_fn(n * m, n * m, |r, c| q[(r / m, c / m)] * p[(r % m, c % m)])
}

/// Parses a JSON-style nested list into a dense matrix, checking that it is
/// rectangular.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::Structural(format!(
            "{name} row {i} has {} entries, expected {ncols}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}
