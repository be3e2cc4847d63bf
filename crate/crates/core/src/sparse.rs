//! Sparse matrices in compressed sparse row form, a deterministic
//! Jacobi-preconditioned conjugate gradient solver, and spectral
//! condition-number estimation.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Staging buffer for element-assembly contributions.
///
/// Duplicate `(row, col)` entries are summed by [`CsrMatrix::assemble`].
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn extend_from(&mut self, other: TripletBuffer) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Square sparse matrix in CSR storage.
///
/// `symmetric` records whether the stored values form a symmetric matrix
/// (both triangles are stored either way; the flag selects the spectral
/// route in [`condition_number`] and documents SPD intent for [`cg_solve`]).
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    pub symmetric: bool,
}

impl CsrMatrix {
    /// Assembles triplets into CSR form, summing duplicate entries.
    pub fn assemble(triplets: &TripletBuffer, n: usize, symmetric: bool) -> Result<Self> {
        for &(r, c, _) in &triplets.entries {
            if r >= n || c >= n {
                return Err(Error::IndexOutOfRange {
                    index: r.max(c),
                    len: n,
                });
            }
        }
        // Bucket by row, then sort and merge duplicates within each row.
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in &triplets.entries {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut by_row: Vec<(usize, f64)> = vec![(0, 0.0); triplets.entries.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in &triplets.entries {
            by_row[cursor[r]] = (c, v);
            cursor[r] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..n {
            let slice = &mut by_row[counts[r]..counts[r + 1]];
            slice.sort_unstable_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < slice.len() {
                let col = slice[k].0;
                let mut sum = 0.0;
                while k < slice.len() && slice[k].0 == col {
                    sum += slice[k].1;
                    k += 1;
                }
                col_indices.push(col);
                values.push(sum);
            }
            row_offsets.push(col_indices.len());
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix values"));
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
            symmetric,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    /// y = A v
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(v, &mut y);
        Ok(y)
    }

    pub fn spmv_into(&self, v: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * v[self.col_indices[k]];
            }
            y[r] = acc;
        }
    }

    /// y = Aᵀ v
    pub fn spmv_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let vr = v[r];
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                y[self.col_indices[k]] += self.values[k] * vr;
            }
        }
        Ok(y)
    }

    /// Applies the scalar operator blockwise to a node-major xyz-minor
    /// vector of length `3 * dim()`.
    pub fn spmv_blocked3(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != 3 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 3 * self.n,
                got: v.len(),
            });
        }
        let mut y = vec![0.0; 3 * self.n];
        for r in 0..self.n {
            let mut acc = [0.0; 3];
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                let a = self.values[k];
                acc[0] += a * v[3 * c];
                acc[1] += a * v[3 * c + 1];
                acc[2] += a * v[3 * c + 2];
            }
            y[3 * r] = acc[0];
            y[3 * r + 1] = acc[1];
            y[3 * r + 2] = acc[2];
        }
        Ok(y)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                if self.col_indices[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.values[self.row_offsets[r]..self.row_offsets[r + 1]]
                    .iter()
                    .sum()
            })
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut() {
            *v *= factor;
        }
    }

    /// Frobenius norm of the stored values.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest relative value asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                let mirrored = self.get(c, r);
                worst = worst.max((self.values[k] - mirrored).abs());
            }
        }
        worst / scale
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                m[(r, self.col_indices[k])] = self.values[k];
            }
        }
        m
    }

    /// Principal submatrix on the rows/columns where `keep` is true plus the
    /// map from new indices to original ones.
    pub fn restrict(&self, keep: &[bool]) -> (CsrMatrix, Vec<usize>) {
        assert_eq!(keep.len(), self.n);
        let map: Vec<usize> = (0..self.n).filter(|&i| keep[i]).collect();
        let mut new_index = vec![usize::MAX; self.n];
        for (k, &i) in map.iter().enumerate() {
            new_index[i] = k;
        }
        let mut row_offsets = Vec::with_capacity(map.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for &r in &map {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                if keep[c] {
                    col_indices.push(new_index[c]);
                    values.push(self.values[k]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        (
            CsrMatrix {
                n: map.len(),
                row_offsets,
                col_indices,
                values,
                symmetric: self.symmetric,
            },
            map,
        )
    }

    /// Appends every stored entry to a triplet buffer with remapped
    /// indices (used to combine operators before one final assembly).
    pub fn push_triplets_mapped(
        &self,
        out: &mut TripletBuffer,
        map: impl Fn(usize, usize) -> (usize, usize),
    ) {
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let (rr, cc) = map(r, self.col_indices[k]);
                out.push(rr, cc, self.values[k]);
            }
        }
    }

    /// Entrywise sum of two matrices of the same dimension.
    pub fn add(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let mut t = TripletBuffer::with_capacity(self.nnz() + other.nnz());
        self.push_triplets_mapped(&mut t, |r, c| (r, c));
        other.push_triplets_mapped(&mut t, |r, c| (r, c));
        CsrMatrix::assemble(&t, self.n, self.symmetric && other.symmetric)
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(f, "{} {} {}", self.n, self.n, self.nnz())?;
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                writeln!(
                    f,
                    "{} {} {:.16e}",
                    r + 1,
                    self.col_indices[k] + 1,
                    self.values[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Outcome of a conjugate-gradient solve. Non-convergence is reported
/// through `converged` with the best iterate kept, not as an error.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Final relative residual ‖b − Ax‖₂ / ‖b‖₂.
    pub residual: f64,
}

/// Default relative residual tolerance for [`cg_solve`].
pub const CG_DEFAULT_TOL: f64 = 1e-10;

/// Jacobi-preconditioned conjugate gradient for SPD systems.
///
/// Deterministic: fixed start (x₀ = 0), sequential reductions, no restarts.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    let n = a.dim();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            converged: true,
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let mut best_x = x.clone();
    let mut best_res = 1.0f64;

    for iter in 1..=max_iter {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::Breakdown(format!(
                "conjugate gradient: non-positive curvature pᵀAp = {pap:e} at iteration {iter}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / b_norm;
        if !res.is_finite() {
            return Err(Error::Breakdown(
                "conjugate gradient: non-finite residual".into(),
            ));
        }
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= tol {
            return Ok(CgSolution {
                x,
                converged: true,
                iterations: iter,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgSolution {
        x: best_x,
        converged: false,
        iterations: max_iter,
        residual: best_res,
    })
}

/// Convenience wrapper that treats non-convergence as an error.
pub fn cg_solve_strict(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let sol = cg_solve(a, b, tol, max_iter)?;
    if !sol.converged {
        return Err(Error::CgDidNotConverge {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    Ok(sol.x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral route for [`condition_number`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondMethod {
    /// Exact dense spectra (eigenvalues, or singular values via AᵀA for
    /// unsymmetric matrices). Intended for n ≤ 3000.
    Dense,
    /// Lanczos estimate of the extreme eigenvalues (within a few percent).
    Lanczos,
}

/// Relative eigenvalue floor below which a matrix is reported singular.
pub const SINGULARITY_FLOOR: f64 = 1e-14;

/// λ_max / λ_min for symmetric matrices, σ_max / σ_min otherwise.
/// Singular matrices (λ_min ≤ 1e-14 λ_max) are reported as +∞.
pub fn condition_number(a: &CsrMatrix, method: CondMethod) -> Result<f64> {
    match method {
        CondMethod::Dense => {
            let dense = a.to_dense();
            Ok(if a.symmetric {
                dense_condition_symmetric(&dense)
            } else {
                dense_condition_general(&dense)
            })
        }
        CondMethod::Lanczos => lanczos_condition(a),
    }
}

/// Condition number of a dense symmetric matrix from its eigenvalues.
pub fn dense_condition_symmetric(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &l in eig.eigenvalues.iter() {
        let l = l.abs();
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if lo <= SINGULARITY_FLOOR * hi {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Condition number of a dense general matrix from its singular values,
/// computed through the eigendecomposition of AᵀA.
pub fn dense_condition_general(m: &DMatrix<f64>) -> f64 {
    let ata = m.transpose() * m;
    let eig = ata.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &l in eig.eigenvalues.iter() {
        let l = l.max(0.0);
        lo = lo.min(l);
        hi = hi.max(l);
    }
    // Eigenvalues of AᵀA are squared singular values.
    if lo <= SINGULARITY_FLOOR * SINGULARITY_FLOOR * hi {
        f64::INFINITY
    } else {
        (hi / lo).sqrt()
    }
}

/// Lanczos tridiagonalization estimate of λ_max/λ_min for symmetric `a`
/// (σ_max/σ_min via AᵀA otherwise). Deterministic all-ones start vector.
fn lanczos_condition(a: &CsrMatrix) -> Result<f64> {
    let n = a.dim();
    let apply: Box<dyn Fn(&[f64]) -> Vec<f64>> = if a.symmetric {
        Box::new(move |v: &[f64]| a.spmv(v).expect("dimension checked"))
    } else {
        Box::new(move |v: &[f64]| {
            let av = a.spmv(v).expect("dimension checked");
            a.spmv_transpose(&av).expect("dimension checked")
        })
    };

    let steps = 200.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    basis.push(vec![1.0 / (n as f64).sqrt(); n]);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    for step in 0..steps {
        let q = &basis[step];
        let mut w = apply(q);
        let alpha = dot(q, &w);
        alphas.push(alpha);
        // Full reorthogonalization, two passes: with one pass the small
        // Ritz values drift once the residual becomes tiny, and ghost
        // copies of converged eigenvalues appear.
        for _ in 0..2 {
            for qk in &basis {
                let proj = dot(qk, &w);
                for i in 0..n {
                    w[i] -= proj * qk[i];
                }
            }
        }
        let beta = norm(&w);
        let scale = alphas.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if beta < 1e-12 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &l in eig.eigenvalues.iter() {
        let l = l.abs();
        lo = lo.min(l);
        hi = hi.max(l);
    }
    if lo <= SINGULARITY_FLOOR * hi {
        return Ok(f64::INFINITY);
    }
    Ok(if a.symmetric {
        hi / lo
    } else {
        (hi / lo).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> (CsrMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &raw * raw.transpose() + DMatrix::identity(n, n) * n as f64;
        let mut t = TripletBuffer::new();
        for r in 0..n {
            for c in 0..n {
                t.push(r, c, spd[(r, c)]);
            }
        }
        (CsrMatrix::assemble(&t, n, true).unwrap(), spd)
    }

    #[test]
    fn assemble_sums_duplicates() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn assemble_empty_is_zero_matrix() {
        let a = CsrMatrix::assemble(&TripletBuffer::new(), 3, true).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn assemble_accepts_symmetric_pairs_and_rejects_out_of_range() {
        let mut t = TripletBuffer::new();
        t.push(0, 1, 4.0);
        t.push(1, 0, 4.0);
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        assert_eq!(a.symmetry_defect(), 0.0);

        let mut bad = TripletBuffer::new();
        bad.push(0, 5, 1.0);
        assert!(CsrMatrix::assemble(&bad, 2, true).is_err());
    }

    #[test]
    fn spmv_identity_and_dense_oracle() {
        let id = CsrMatrix::identity(4);
        let v = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(id.spmv(&v).unwrap(), v);

        let (a, dense) = random_spd(8, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.spmv(&v).unwrap();
        let y_ref = &dense * nalgebra::DVector::from_column_slice(&v);
        for i in 0..8 {
            assert_relative_eq!(y[i], y_ref[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn spmv_symmetry_spot_checks() {
        let (a, _) = random_spd(10, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let i = rng.random_range(0..10);
            let j = rng.random_range(0..10);
            let mut ei = vec![0.0; 10];
            let mut ej = vec![0.0; 10];
            ei[i] = 1.0;
            ej[j] = 1.0;
            let aei = a.spmv(&ei).unwrap();
            let aej = a.spmv(&ej).unwrap();
            assert_relative_eq!(aei[j], aej[i], max_relative = 1e-13);
        }
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let id = CsrMatrix::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = cg_solve(&id, &b, 1e-12, 100).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, b);
    }

    #[test]
    fn cg_diagonal_system() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 2.0);
        t.push(1, 1, 3.0);
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        let sol = cg_solve(&a, &[2.0, 3.0], 1e-14, 100).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.x[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(sol.x[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn cg_matches_dense_factorization() {
        let (a, dense) = random_spd(20, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sol = cg_solve(&a, &b, 1e-12, 2000).unwrap();
        assert!(sol.converged);
        let x_ref = dense
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_column_slice(&b));
        for i in 0..20 {
            assert_relative_eq!(sol.x[i], x_ref[i], epsilon = 1e-9);
        }
        // Residual contract on the success path.
        let r = a.spmv(&sol.x).unwrap();
        let res: f64 = r
            .iter()
            .zip(&b)
            .map(|(ri, bi)| (ri - bi).powi(2))
            .sum::<f64>()
            .sqrt();
        let bn: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res <= 1e-12 * bn * 1.01);
    }

    #[test]
    fn cg_zero_rhs() {
        let (a, _) = random_spd(6, 9);
        let sol = cg_solve(&a, &[0.0; 6], 1e-12, 10).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.x, vec![0.0; 6]);
    }

    #[test]
    fn cg_reports_non_convergence_with_best_iterate() {
        let (a, _) = random_spd(20, 2);
        let b = vec![1.0; 20];
        let sol = cg_solve(&a, &b, 1e-16, 1).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.residual > 0.0);
    }

    #[test]
    fn condition_identity_and_diagonal() {
        let id = CsrMatrix::identity(7);
        assert_relative_eq!(condition_number(&id, CondMethod::Dense).unwrap(), 1.0);

        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        t.push(1, 1, 4.0);
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        assert_relative_eq!(condition_number(&a, CondMethod::Dense).unwrap(), 4.0);
    }

    #[test]
    fn condition_of_scaled_identity_is_one() {
        for c in [1e-6, 0.5, 3.0, 1e8] {
            let mut id = CsrMatrix::identity(5);
            id.scale(c);
            assert_relative_eq!(condition_number(&id, CondMethod::Dense).unwrap(), 1.0);
        }
    }

    #[test]
    fn condition_singular_reports_infinity() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        // second row all zero
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        assert!(condition_number(&a, CondMethod::Dense)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn lanczos_matches_dense_within_five_percent() {
        let (a, _) = random_spd(60, 17);
        let dense = condition_number(&a, CondMethod::Dense).unwrap();
        let est = condition_number(&a, CondMethod::Lanczos).unwrap();
        assert!(
            (est - dense).abs() / dense < 0.05,
            "est {est} vs dense {dense}"
        );
    }

    #[test]
    fn general_condition_uses_singular_values() {
        // Unsymmetric 2x2 with known singular values: diag(3, 1) under rotation.
        let mut t = TripletBuffer::new();
        t.push(0, 0, 3.0);
        t.push(1, 1, 1.0);
        t.push(0, 1, 0.0);
        let mut a = CsrMatrix::assemble(&t, 2, false).unwrap();
        a.symmetric = false;
        assert_relative_eq!(
            condition_number(&a, CondMethod::Dense).unwrap(),
            3.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn restrict_extracts_principal_submatrix() {
        let (a, dense) = random_spd(6, 23);
        let keep = [true, false, true, true, false, true];
        let (sub, map) = a.restrict(&keep);
        assert_eq!(map, vec![0, 2, 3, 5]);
        for (r_new, &r_old) in map.iter().enumerate() {
            for (c_new, &c_old) in map.iter().enumerate() {
                assert_eq!(sub.get(r_new, c_new), dense[(r_old, c_old)]);
            }
        }
    }

    #[test]
    fn matrix_market_dump_roundtrips_by_eye() {
        let mut t = TripletBuffer::new();
        t.push(0, 1, 2.5);
        t.push(1, 0, 2.5);
        let a = CsrMatrix::assemble(&t, 2, true).unwrap();
        let dir = std::env::temp_dir().join("shapefilter_mm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.mtx");
        a.write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general"));
        assert!(text.contains("2 2 2"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
