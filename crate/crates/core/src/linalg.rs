//! Dense complex linear algebra helpers.
//!
//! Vectorization is column-stacking throughout: the matrix element
//! `X[(a, b)]` of a `d x d` matrix sits at index `a + d * b`, which is also
//! nalgebra's storage order, so `vec(A X B) = (B^T kron A) vec(X)`.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |A - A^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * re(0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(lambda)) V^dagger`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let s = f(l);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigensolve. The input is symmetrized first, so a matrix that is
/// Hermitian only up to rounding is accepted.
pub fn eigh(m: &CMatrix) -> Result<HermitianEigen> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "eigh needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("eigh: non-finite matrix entry"));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("Hermitian eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

/// One diagonal block of a block-diagonalizable Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigenBlock {
    pub indices: Vec<usize>,
    pub eigen: HermitianEigen,
}

/// Groups indices into the connected components of the graph whose edges are
/// entries larger than `threshold` in magnitude.
pub fn connected_blocks(m: &CMatrix, threshold: f64) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)].norm() > threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Hermitian eigensolve that exploits block structure. Entries below
/// `rel_threshold * max_abs(m)` are treated as structural zeros when finding
/// blocks; every block is then solved in full.
pub fn block_eigh(m: &CMatrix, rel_threshold: f64) -> Result<Vec<EigenBlock>> {
    let scale = max_abs(m);
    let blocks = connected_blocks(m, rel_threshold * scale);
    blocks
        .into_par_iter()
        .map(|indices| {
            let k = indices.len();
            let sub = CMatrix::from_fn(k, k, |a, b| m[(indices[a], indices[b])]);
            eigh(&sub).map(|eigen| EigenBlock { indices, eigen })
        })
        .collect()
}

/// All eigenvalues of a block decomposition, ascending.
pub fn block_values(blocks: &[EigenBlock]) -> Vec<f64> {
    let mut v: Vec<f64> = blocks.iter().flat_map(|b| b.eigen.values.iter().copied()).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    m.clone().singular_values().iter().copied().collect()
}

/// Spectral (2 -> 2) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Schatten-1 norm.
pub fn trace_norm(m: &CMatrix) -> f64 {
    singular_values(m).into_iter().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hilbert-Schmidt inner product `Tr(A^dagger B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for ja in 0..ac {
        for ia in 0..ar {
            let s = a[(ia, ja)];
            if s == ZERO {
                continue;
            }
            for jb in 0..bc {
                for ib in 0..br {
                    out[(ia * br + ib, ja * bc + jb)] = s * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec_of(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Superoperator of `X -> A X B`.
pub fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), a)
}

/// Applies a `d^2 x d^2` superoperator to a `d x d` matrix.
pub fn apply_superop(s: &CMatrix, x: &CMatrix) -> CMatrix {
    let d = x.nrows();
    let v = s * vec_of(x);
    unvec(&v, d)
}

/// Conjugates a superoperator by the unitary change of frame `X -> U X U^dagger`:
/// returns `T S T^dagger` with `T = conj(U) kron U`, without forming `T`.
pub fn superop_frame(s: &CMatrix, u: &CMatrix) -> CMatrix {
    let d = u.nrows();
    let ud = u.adjoint();
    let conj = |m: &CMatrix| -> CMatrix {
        let cols: Vec<CVector> = (0..m.ncols())
            .into_par_iter()
            .map(|c| {
                let x = CMatrix::from_column_slice(d, d, m.column(c).as_slice());
                vec_of(&(u * x * &ud))
            })
            .collect();
        CMatrix::from_columns(&cols)
    };
    // T S, then (T (T S)^dagger)^dagger = T S T^dagger
    let ts = conj(s);
    conj(&ts.adjoint()).adjoint()
}

/// Largest column 2-norm, a lower bound on the 2 -> 2 norm that is cheap to
/// evaluate for large superoperators.
pub fn max_column_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = re(v);
    }
    m
}
