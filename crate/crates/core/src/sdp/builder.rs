//! Decision-vector layout and assembly of LMI blocks from affine maps.
//!
//! A symmetric unknown `S` of size `n` occupies `n(n+1)/2` consecutive
//! entries in `vech` order. Entry `k` is the shared value of `S_ij` and
//! `S_ji`, so each off-diagonal basis matrix has a 1 in both positions and
//! no `√2` scaling is applied. A general `r × c` unknown occupies `r·c`
//! entries in `vec` order.

use super::{LmiBlock, LmiTerm};
use crate::tensor::{self, half_dim, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

impl SymVar {
    pub fn len(&self) -> usize {
        half_dim(self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn unpack(&self, z: &[f64]) -> Matrix {
        let mut s = Matrix::zeros(self.n, self.n);
        let mut k = self.offset;
        for j in 0..self.n {
            for i in j..self.n {
                s[(i, j)] = z[k];
                s[(j, i)] = z[k];
                k += 1;
            }
        }
        s
    }

    /// Writes the lower triangle of `s` into `z`.
    pub fn pack_into(&self, s: &Matrix, z: &mut [f64]) {
        let mut k = self.offset;
        for j in 0..self.n {
            for i in j..self.n {
                z[k] = s[(i, j)];
                k += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatVar {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl MatVar {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn unpack(&self, z: &[f64]) -> Matrix {
        Matrix::from_column_slice(self.rows, self.cols, &z[self.range()])
    }

    pub fn pack_into(&self, x: &Matrix, z: &mut [f64]) {
        z[self.range()].copy_from_slice(x.as_slice());
    }
}

/// Hands out consecutive slots of the decision vector.
#[derive(Debug, Clone, Default)]
pub struct VarAllocator {
    next: usize,
}

impl VarAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sym(&mut self, n: usize) -> SymVar {
        let v = SymVar { offset: self.next, n };
        self.next += v.len();
        v
    }

    pub fn mat(&mut self, rows: usize, cols: usize) -> MatVar {
        let v = MatVar {
            offset: self.next,
            rows,
            cols,
        };
        self.next += v.len();
        v
    }

    pub fn scalar(&mut self) -> usize {
        self.next += 1;
        self.next - 1
    }

    pub fn dim(&self) -> usize {
        self.next
    }
}

/// Recovers `A_0` and the `A_i` of an affine map by evaluating it at the
/// origin and at unit vectors of the listed variables.
pub struct AffineBlockBuilder {
    dim: usize,
}

impl AffineBlockBuilder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// `f` must be affine in `z` and depend only on `vars`.
    pub fn build<F>(&self, vars: impl IntoIterator<Item = usize>, f: F) -> LmiBlock
    where
        F: Fn(&[f64]) -> Matrix,
    {
        let mut z = vec![0.0; self.dim];
        let constant = tensor::symmetrize(&f(&z));
        let size = constant.nrows();
        let mut terms = Vec::new();
        for var in vars {
            z[var] = 1.0;
            let coeff = tensor::symmetrize(&f(&z)) - &constant;
            z[var] = 0.0;
            if coeff.iter().any(|x| *x != 0.0) {
                terms.push(LmiTerm { var, coeff });
            }
        }
        LmiBlock { size, constant, terms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_pack_round_trip() {
        let mut alloc = VarAllocator::new();
        let _pad = alloc.scalar();
        let s = alloc.sym(3);
        assert_eq!(s.range(), 1..7);
        let x = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let mut z = vec![0.0; alloc.dim()];
        s.pack_into(&x, &mut z);
        assert_eq!(&z[1..], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.unpack(&z), x);
    }

    #[test]
    fn mat_pack_round_trip() {
        let mut alloc = VarAllocator::new();
        let g = alloc.mat(2, 3);
        let x = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        let mut z = vec![0.0; alloc.dim()];
        g.pack_into(&x, &mut z);
        assert_eq!(g.unpack(&z), x);
    }

    #[test]
    fn probing_recovers_coefficients() {
        let mut alloc = VarAllocator::new();
        let s = alloc.sym(2);
        let b = AffineBlockBuilder::new(alloc.dim()).build(s.range(), |z| {
            let x = s.unpack(z);
            Matrix::identity(2, 2) + x * 2.0
        });
        assert_eq!(b.constant, Matrix::identity(2, 2));
        assert_eq!(b.terms.len(), 3);
        assert_eq!(b.terms[1].coeff, Matrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        let z = [0.5, -1.0, 0.25];
        assert_eq!(b.evaluate(&z), Matrix::identity(2, 2) + s.unpack(&z) * 2.0);
    }
}
