//! Dense small-matrix kernels.
//!
//! Everything here follows column-major semantics: `vec` stacks columns and
//! `vech` stacks the lower triangle column by column, so for a 3×3 matrix
//! `vech(X) = [X11, X21, X31, X22, X32, X33]`. The expansion and synthesis
//! modules index blocks through these orderings, so they must not change.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result, SmpError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `n(n+1)/2`, the length of `vech` of an `n×n` matrix.
pub fn half_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Kronecker product following the block formula `[a_ij · B]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(x: &Matrix) -> Vector {
    Vector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`] for a target shape.
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Matrix> {
    if v.len() != rows * cols {
        return Err(dim_err("unvec", rows * cols, v.len()));
    }
    Ok(Matrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Half vectorization of the lower triangle, column by column.
pub fn vech(x: &Matrix) -> Result<Vector> {
    let n = square_dim(x)?;
    let mut out = Vec::with_capacity(half_dim(n));
    for j in 0..n {
        for i in j..n {
            out.push(x[(i, j)]);
        }
    }
    Ok(Vector::from_vec(out))
}

/// Rebuilds the symmetric matrix whose `vech` is `v`.
pub fn unvech(v: &Vector, n: usize) -> Result<Matrix> {
    if v.len() != half_dim(n) {
        return Err(dim_err("unvech", half_dim(n), v.len()));
    }
    let mut out = Matrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            out[(i, j)] = v[k];
            out[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(out)
}

/// Elimination matrix `C_e` (`ñ × n²`): `C_e · vec(X) = vech(X)`.
pub fn elimination_matrix(n: usize) -> Matrix {
    let mut out = Matrix::zeros(half_dim(n), n * n);
    let mut r = 0;
    for j in 0..n {
        for i in j..n {
            out[(r, j * n + i)] = 1.0;
            r += 1;
        }
    }
    out
}

/// Duplication matrix `C_d` (`n² × ñ`): `C_d · vech(S) = vec(S)` for symmetric `S`.
pub fn duplication_matrix(n: usize) -> Matrix {
    let mut out = Matrix::zeros(n * n, half_dim(n));
    for j in 0..n {
        for i in 0..n {
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            out[(j * n + i, lower_index(n, hi, lo))] = 1.0;
        }
    }
    out
}

/// Compression operator: `C_e · Y · C_d` for an `n² × n²` matrix `Y`.
///
/// Evaluated by index arithmetic: row `(i,j)` of the result picks row
/// `j·n+i` of `Y`, and column `(k,l)` sums columns `l·n+k` and `k·n+l`.
pub fn compress(y: &Matrix, n: usize) -> Result<Matrix> {
    if y.nrows() != n * n || y.ncols() != n * n {
        return Err(dim_err(
            "compress",
            format!("{0}x{0}", n * n),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let nt = half_dim(n);
    let mut out = Matrix::zeros(nt, nt);
    let mut c = 0;
    for l in 0..n {
        for k in l..n {
            let mut r = 0;
            for j in 0..n {
                for i in j..n {
                    let row = j * n + i;
                    let mut v = y[(row, l * n + k)];
                    if k != l {
                        v += y[(row, k * n + l)];
                    }
                    out[(r, c)] = v;
                    r += 1;
                }
            }
            c += 1;
        }
    }
    Ok(out)
}

/// Zero-based position of entry `(i, j)`, `i >= j`, inside `vech`.
pub fn lower_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < n);
    // columns 0..j of the lower triangle hold sum_{c<j} (n - c) entries
    j * n - j * j.saturating_sub(1) / 2 + (i - j)
}

fn square_dim(x: &Matrix) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(SmpError::NotSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(x.nrows())
}

/// `(X + Xᵀ)/2`.
pub fn symmetrize(x: &Matrix) -> Matrix {
    (x + x.transpose()) * 0.5
}

/// Symmetric matrix. Constructors symmetrize their input so that
/// `Y_ij == Y_ji` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(x: &Matrix) -> Result<Self> {
        square_dim(x)?;
        Ok(Self(exact_symmetrize(x)))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(Matrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

// Averages mirrored entries and writes the same value to both positions.
fn exact_symmetrize(x: &Matrix) -> Matrix {
    let n = x.nrows();
    let mut out = x.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Spectral decomposition with eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vector,
    /// Unit eigenvectors stored as columns, in the order of `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(f64::NAN)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().last().unwrap_or(f64::NAN)
    }

    pub fn eigenvector(&self, i: usize) -> Vector {
        self.eigenvectors.column(i).into_owned()
    }

    /// `Σ λ_i ν_i ν_iᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let v = self.eigenvectors.column(i);
            out += self.eigenvalues[i] * v * v.transpose();
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps visit `(p, q)` pairs in row order, so results are reproducible.
/// Eigenvalues are sorted descending with a stable sort; each eigenvector is
/// signed so that its largest-magnitude component (first one on ties) is
/// positive.
pub fn sym_eig(y: &SymMatrix) -> Result<EigenDecomposition> {
    let mut a = y.as_matrix().clone();
    let n = a.nrows();
    let mut v = Matrix::identity(n, n);
    if a.iter().any(|x| !x.is_finite()) {
        return Err(SmpError::InvalidInput(
            "non-finite entry in eigen-decomposition input".into(),
        ));
    }
    let scale = a.norm();
    // rotations leave O(eps·‖A‖) residue in every entry
    let target = 4.0 * f64::EPSILON * (n.max(1) as f64) * scale.max(f64::MIN_POSITIVE);

    let mut converged = n <= 1 || off_diagonal_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(SmpError::NonConvergence {
                sweeps,
                residual: off_diagonal_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::EPSILON * 1e-3 * scale {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s);
            }
        }
        converged = off_diagonal_norm(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));

    let eigenvalues = Vector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
        let mut best = 0;
        for k in 1..n {
            if col[k].abs() > col[best].abs() {
                best = k;
            }
        }
        if n > 0 && col[best] < 0.0 {
            col = -col;
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    // A ← Jᵀ A J with J the (p, q) Givens rotation.
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Smallest eigenvalue of the symmetric part of `x`.
pub fn min_eigenvalue(x: &Matrix) -> Result<f64> {
    Ok(sym_eig(&SymMatrix::new(x)?)?.min_eigenvalue())
}

/// Largest absolute eigenvalue modulus of a general square matrix.
pub fn spectral_radius(x: &Matrix) -> Result<f64> {
    square_dim(x)?;
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(x
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Block-diagonal assembly `diag(a, b)`.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Assembles the symmetric 2×2 block matrix `[[tl, blᵀ], [bl, br]]`.
pub fn sym_block2(tl: &Matrix, bl: &Matrix, br: &Matrix) -> Matrix {
    let k = tl.nrows();
    let l = br.nrows();
    let mut out = Matrix::zeros(k + l, k + l);
    out.view_mut((0, 0), (k, k)).copy_from(tl);
    out.view_mut((k, 0), (l, k)).copy_from(bl);
    out.view_mut((0, k), (k, l)).copy_from(&bl.transpose());
    out.view_mut((k, k), (l, l)).copy_from(br);
    exact_symmetrize(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn kron_identity() {
        let i2 = Matrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), Matrix::identity(4, 4));
    }

    #[test]
    fn kron_blocks() {
        let a = m(2, 2, &[1., 2., 3., 4.]);
        let b = m(2, 2, &[0., 1., 1., 0.]);
        let k = kron(&a, &b);
        assert_eq!(k.view((0, 0), (2, 2)), b);
        assert_eq!(k.view((0, 2), (2, 2)), &b * 2.0);
        assert_eq!(k.view((2, 0), (2, 2)), &b * 3.0);
        assert_eq!(k.view((2, 2), (2, 2)), &b * 4.0);
    }

    #[test]
    fn vec_and_vech_order() {
        let x = m(2, 2, &[1., 3., 2., 4.]);
        assert_eq!(vec(&x).as_slice(), &[1., 2., 3., 4.]);
        assert_eq!(vec(&Matrix::zeros(2, 2)).as_slice(), &[0.; 4]);
        let s = m(2, 2, &[1., 2., 2., 3.]);
        assert_eq!(vech(&s).unwrap().as_slice(), &[1., 2., 3.]);
        assert_eq!(
            vech(&Matrix::identity(3, 3)).unwrap().as_slice(),
            &[1., 0., 0., 1., 0., 1.]
        );
        assert!(matches!(
            vech(&Matrix::zeros(2, 3)),
            Err(SmpError::NotSquare { .. })
        ));
    }

    #[test]
    fn elimination_and_duplication_n2() {
        assert_eq!(
            elimination_matrix(2),
            m(3, 4, &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 1.])
        );
        assert_eq!(
            duplication_matrix(2),
            m(4, 3, &[1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.])
        );
        assert_eq!(elimination_matrix(1), Matrix::identity(1, 1));
        assert_eq!(duplication_matrix(1), Matrix::identity(1, 1));
    }

    #[test]
    fn lower_index_matches_vech_order() {
        for n in 1..6 {
            let mut k = 0;
            for j in 0..n {
                for i in j..n {
                    assert_eq!(lower_index(n, i, j), k);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn compress_basic_cases() {
        assert_eq!(compress(&Matrix::identity(4, 4), 2).unwrap(), Matrix::identity(3, 3));
        let x = Matrix::identity(2, 2) * 2.0;
        assert_eq!(compress(&kron(&x, &x), 2).unwrap(), Matrix::identity(3, 3) * 4.0);
        assert!(compress(&Matrix::zeros(3, 3), 2).is_err());
    }

    #[test]
    fn eig_diagonal_and_degenerate() {
        let d = SymMatrix::new(&Matrix::from_diagonal(&Vector::from_vec(vec![5., 1., 0.]))).unwrap();
        let e = sym_eig(&d).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[5., 1., 0.]);
        assert_eq!(e.eigenvectors, Matrix::identity(3, 3));

        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1., 1., 1.]);
    }

    #[test]
    fn eig_sign_convention() {
        let y = SymMatrix::new(&m(2, 2, &[2., -1., -1., 2.])).unwrap();
        let e = sym_eig(&y).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        for i in 0..2 {
            let col = e.eigenvector(i);
            let big = col.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn sym_matrix_is_exactly_symmetric() {
        let s = SymMatrix::new(&m(2, 2, &[1., 0.1 + 0.2, 0.3, 1.])).unwrap();
        assert_eq!(s.as_matrix()[(0, 1)], s.as_matrix()[(1, 0)]);
    }
}
