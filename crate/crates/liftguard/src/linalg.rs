//! Rank-revealing SVD helpers shared by the geometric-control algorithms.
//!
//! The factorization is a one-sided Jacobi SVD implemented here: it delivers
//! high relative accuracy on the small, frequently near-rank-deficient
//! matrices this crate produces (products of projectors and model matrices),
//! where a fast bidiagonalization SVD can lose several digits in the
//! singular vectors.
//!
//! All rank decisions use the tolerance `max(rows, cols) * eps * sigma_max`
//! unless an explicit tolerance is supplied.

use nalgebra::{Complex, DMatrix, DVector};

/// Default relative rank tolerance for a matrix of the given shape and scale.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON * sigma_max.max(1e-300)
}

/// A full singular value decomposition `m = u * diag(s) * v'` with
/// `u: rows x k`, `s: k`, `v: cols x k`, `k = min(rows, cols)` — except that
/// `v` always has `cols` columns so the kernel is never truncated
/// (`s` is padded with zeros when `rows < cols`).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Complex counterpart of [`Svd`]; `m = u * diag(s) * v.adjoint()`.
#[derive(Debug, Clone)]
pub struct SvdC {
    pub u: DMatrix<Complex<f64>>,
    pub s: DVector<f64>,
    pub v: DMatrix<Complex<f64>>,
}

const JACOBI_SWEEPS: usize = 64;
const JACOBI_TOL: f64 = 1e-15;

/// One-sided Jacobi SVD of a real matrix. Always returns `v` with `cols`
/// columns (orthonormal), so `v` columns beyond the rank span the kernel.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DMatrix::identity(cols, cols.min(if rows == 0 { cols } else { cols })),
        };
    }
    // work on the side with at least as many rows as columns
    if rows < cols {
        // pad with zero rows; zero rows change neither singular values nor V
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        let f = svd(&padded);
        return Svd {
            u: f.u.rows(0, rows).into_owned(),
            s: f.s,
            v: f.v,
        };
    }
    let mut a = m.clone();
    let mut v = DMatrix::identity(cols, cols);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let ap = a.column(p).into_owned();
                let aq = a.column(q).into_owned();
                let alpha = ap.norm_squared();
                let beta = aq.norm_squared();
                let gamma = ap.dot(&aq);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (beta - alpha) / (2.0 * gamma);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = cs * x - sn * y;
                    a[(i, q)] = sn * x + cs * y;
                }
                for i in 0..cols {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = cs * x - sn * y;
                    v[(i, q)] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    // extract singular values/vectors and sort descending
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = DMatrix::zeros(rows, cols);
    let mut s = DVector::zeros(cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        v_sorted.set_column(k, &v.column(j));
    }
    Svd { u, s, v: v_sorted }
}

/// One-sided Jacobi SVD of a complex matrix; see [`svd`].
pub fn svd_c(m: &DMatrix<Complex<f64>>) -> SvdC {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return SvdC {
            u: DMatrix::zeros(rows, 0),
            s: DVector::zeros(0),
            v: DMatrix::identity(cols, cols),
        };
    }
    if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        let f = svd_c(&padded);
        return SvdC {
            u: f.u.rows(0, rows).into_owned(),
            s: f.s,
            v: f.v,
        };
    }
    let mut a = m.clone();
    let mut v: DMatrix<Complex<f64>> = DMatrix::identity(cols, cols);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = a.column(p).iter().map(|x| x.norm_sqr()).sum();
                let beta: f64 = a.column(q).iter().map(|x| x.norm_sqr()).sum();
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma: Complex<f64> = a
                    .column(p)
                    .iter()
                    .zip(a.column(q).iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let g_abs = gamma.norm();
                if g_abs <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g_abs;
                let tau = (beta - alpha) / (2.0 * g_abs);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                // unitary rotation [[cs, sn*phase], [-sn*conj(phase), cs]]
                // applied on the right of both the work matrix and v
                let sp = phase * sn;
                for i in 0..rows {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = x * cs - y * sp.conj();
                    a[(i, q)] = x * sp + y * cs;
                }
                for i in 0..cols {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = x * cs - y * sp.conj();
                    v[(i, q)] = x * sp + y * cs;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols)
        .map(|j| a.column(j).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let mut u = DMatrix::zeros(rows, cols);
    let mut s = DVector::zeros(cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        if norms[j] > 0.0 {
            let scale = Complex::new(1.0 / norms[j], 0.0);
            u.set_column(k, &(a.column(j) * scale));
        }
        v_sorted.set_column(k, &v.column(j));
    }
    SvdC { u, s, v: v_sorted }
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    svd(m).s
}

/// `a^k` by repeated multiplication. Exponents here are small (frame periods
/// and state dimensions), so no squaring scheme is used.
pub fn mat_pow(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "mat_pow needs a square matrix");
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        out = &out * a;
    }
    out
}

/// Largest singular value (spectral norm). Zero-sized matrices have norm 0.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    svd(m).s.max()
}

/// Orthonormal basis of the column space, at the given (or default) tolerance.
pub fn col_space(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let f = svd(m);
    let smax = f.s.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    let rank = f.s.iter().filter(|&&s| s > tol).count();
    f.u.columns(0, rank).into_owned()
}

/// Orthonormal basis of the kernel. An empty matrix (no rows) has a full
/// kernel; the identity basis is returned.
pub fn kernel(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(m.ncols(), m.ncols());
    }
    let f = svd(m);
    let smax = f.s.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    let rank = f.s.iter().filter(|&&s| s > tol).count();
    f.v.columns(rank, m.ncols() - rank).into_owned()
}

/// Orthonormal kernel basis of a complex matrix.
pub fn kernel_c(m: &DMatrix<Complex<f64>>, tol: Option<f64>) -> DMatrix<Complex<f64>> {
    if m.ncols() == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(m.ncols(), m.ncols());
    }
    let f = svd_c(m);
    let smax = f.s.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    let rank = f.s.iter().filter(|&&s| s > tol).count();
    f.v.columns(rank, m.ncols() - rank).into_owned()
}

/// Moore-Penrose pseudoinverse at the given (or default) rank tolerance.
pub fn pinv_tol(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let f = svd(m);
    let smax = f.s.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..f.s.len() {
        if f.s[k] > tol {
            let uk = f.u.column(k);
            let vk = f.v.column(k);
            let w = 1.0 / f.s[k];
            for i in 0..m.ncols() {
                for j in 0..m.nrows() {
                    out[(i, j)] += vk[i] * w * uk[j];
                }
            }
        }
    }
    out
}

/// Moore-Penrose pseudoinverse at the default rank tolerance.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_tol(m, None)
}

/// Complex Moore-Penrose pseudoinverse at the default rank tolerance.
pub fn pinv_c(m: &DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let f = svd_c(m);
    let smax = f.s.max();
    let tol = default_rank_tol(m.nrows(), m.ncols(), smax);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..f.s.len() {
        if f.s[k] > tol {
            let uk = f.u.column(k);
            let vk = f.v.column(k);
            let w = Complex::new(1.0 / f.s[k], 0.0);
            for i in 0..m.ncols() {
                for j in 0..m.nrows() {
                    out[(i, j)] += vk[i] * w * uk[j].conj();
                }
            }
        }
    }
    out
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Uses a relative singular-value cutoff of `1e-11` rather than the
/// machine-epsilon rank tolerance: entries of `a` are typically products of
/// model matrices whose noise floor sits well above epsilon, and keeping a
/// noise-level singular value turns the solution into amplified rounding.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), b.ncols());
    }
    let smax = spectral_norm(a);
    let tol = (1e-11 * smax).max(default_rank_tol(a.nrows(), a.ncols(), smax));
    pinv_tol(a, Some(tol)) * b
}

/// Smallest singular value above the rank tolerance, i.e. the smallest gain
/// of the map restricted to the orthogonal complement of its kernel.
/// Returns `None` for a (numerically) zero matrix.
pub fn smallest_nonzero_sv(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return None;
    }
    let sv = singular_values(m);
    let smax = sv.max();
    let tol = default_rank_tol(m.nrows(), m.ncols(), smax);
    sv.iter().copied().filter(|&s| s > tol).fold(None, |acc, s| {
        Some(acc.map_or(s, |a: f64| a.min(s)))
    })
}

/// Numerical rank at the default tolerance.
pub fn rank(m: &DMatrix<f64>, tol: Option<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = singular_values(m);
    let smax = sv.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    sv.iter().filter(|&&s| s > tol).count()
}

/// Complex numerical rank at the default tolerance.
pub fn rank_c(m: &DMatrix<Complex<f64>>, tol: Option<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = svd_c(m).s;
    let smax = sv.max();
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), smax));
    sv.iter().filter(|&&s| s > tol).count()
}

/// Horizontal concatenation.
pub fn hcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    assert!(!blocks.is_empty());
    let rows = blocks[0].nrows();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Vertical concatenation.
pub fn vcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    assert!(!blocks.is_empty());
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// 2x2 block matrix `[[a, b], [c, d]]`.
pub fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    vcat(&[hcat(&[a.clone(), b.clone()]), hcat(&[c.clone(), d.clone()])])
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn kron_c(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> DMatrix<Complex<f64>> {
    a.kronecker(b)
}

/// Lift a real matrix into the complex field.
pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// Spectral radius via the (complex) eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Stack the columns of `m` into one vector (column-major vec operator).
pub fn vec_of(m: &DMatrix<Complex<f64>>) -> DVector<Complex<f64>> {
    DVector::from_iterator(m.nrows() * m.ncols(), m.iter().copied())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<Complex<f64>>, rows: usize, cols: usize) -> DMatrix<Complex<f64>> {
    DMatrix::from_iterator(rows, cols, v.iter().copied())
}
