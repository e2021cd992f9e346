//! Minimal sparse linear algebra: CSR with a reusable symmetric pattern and a
//! Jacobi-preconditioned conjugate gradient solver with an optional subspace
//! projection (used for the zero-mean gauge on closed meshes).

/// Square CSR matrix with a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an empty matrix from per-row sorted column index lists.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for cols in rows {
            debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
            indices.extend_from_slice(cols);
            indptr.push(indices.len());
        }
        let data = vec![0.0; indices.len()];
        CsrMatrix { n, indptr, indices, data }
    }

    pub fn zero_data(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `value` to entry (row, col). The entry must exist in the pattern.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let lo = self.indptr[row];
        let hi = self.indptr[row + 1];
        let k = self.indices[lo..hi]
            .binary_search(&col)
            .expect("entry outside CSR pattern");
        self.data[lo + k] += value;
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.data[k] * x[self.indices[k]];
            }
            out[row] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for row in 0..self.n {
            for k in self.indptr[row]..self.indptr[row + 1] {
                if self.indices[k] == row {
                    d[row] = self.data[k];
                }
            }
        }
        d
    }

    /// Replaces `row` by the identity row (used to pin Dirichlet nodes).
    /// Off-diagonal couplings into pinned columns must be handled by the
    /// assembler; this only rewrites the row itself.
    pub fn set_identity_row(&mut self, row: usize) {
        for k in self.indptr[row]..self.indptr[row + 1] {
            self.data[k] = if self.indices[k] == row { 1.0 } else { 0.0 };
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // compensated summation keeps the solve deterministic and accurate
    let mut sum = 0.0;
    let mut c = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y - c;
        let t = sum + term;
        c = (t - sum) - term;
        sum = t;
    }
    sum
}

pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Jacobi-preconditioned CG for SPD systems. `project`, when given, is applied
/// to the right-hand side, the initial guess and every update, and must be an
/// orthogonal projection commuting with the operator on its range.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
    project: Option<&dyn Fn(&mut [f64])>,
) -> CgOutcome {
    let n = a.n;
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = x0.to_vec();
    if let Some(p) = project {
        p(&mut x);
    }
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if let Some(p) = project {
        p(&mut r);
    }
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let tol = rel_tol * b_norm;

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    if let Some(p) = project {
        p(&mut z);
    }
    let mut p_dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut res_norm = dot(&r, &r).sqrt();

    let mut iters = 0;
    while res_norm > tol && iters < max_iter {
        let mut ap = vec![0.0; n];
        a.matvec(&p_dir, &mut ap);
        if let Some(pr) = project {
            pr(&mut ap);
        }
        let pap = dot(&p_dir, &ap);
        if pap <= 0.0 {
            break; // loss of positive definiteness in finite precision
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p_dir[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if let Some(pr) = project {
            pr(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p_dir[i] = z[i] + beta * p_dir[i];
        }
        res_norm = dot(&r, &r).sqrt();
        iters += 1;
    }

    CgOutcome { x, iterations: iters, residual: res_norm, converged: res_norm <= tol }
}
