//! Dense symmetric linear algebra helpers.
//!
//! The domain types store `nalgebra::DMatrix`; symmetric eigendecompositions
//! are delegated to `faer`, which is markedly faster at the sizes the
//! experiments use (d in the hundreds).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

/// Eigendecomposition of the symmetric part `(a + aᵀ)/2`.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if d == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if d == 1 {
        return Ok(SymEigen {
            values: vec![a[(0, 0)]],
            vectors: DMatrix::from_element(1, 1, 1.0),
        });
    }
    let m = faer::Mat::<f64>::from_fn(d, d, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = DMatrix::from_fn(d, d, |i, j| u[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = a.nrows();
    if d != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if d <= 1 {
        return Ok(a.iter().copied().collect());
    }
    let m = faer::Mat::<f64>::from_fn(d, d, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut v = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Dense product `a · b` through faer's blocked kernel.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul dimension mismatch");
    if a.nrows() == 0 || b.ncols() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), b.ncols());
    }
    let fa = faer::MatRef::from_column_major_slice(a.as_slice(), a.nrows(), a.ncols());
    let fb = faer::MatRef::from_column_major_slice(b.as_slice(), b.nrows(), b.ncols());
    let c = fa * fb;
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| c[(i, j)])
}

/// Connected components of the graph whose edges are the nonzero
/// off-diagonal entries of a symmetric matrix. Components are returned in
/// order of their smallest index, each sorted ascending.
pub fn nonzero_components(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let d = a.nrows();
    let mut label = vec![usize::MAX; d];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..d {
        if label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        label[start] = id;
        stack.push(start);
        let mut members = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..d {
                if label[j] == usize::MAX && j != i && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0) {
                    label[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    comps
}
