//! Subspace lattice operations and geometric-control algorithms: the maximal
//! output-nulling subspace, friends, restricted maps, and the eigenspace
//! assignment equation used by the vulnerability check.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg;

/// Threshold on principal angles used for subspace comparisons.
pub const ANGLE_TOL: f64 = 1e-7;

/// Band around `|lambda| = 1` inside which an eigenvalue is reported as
/// borderline (still classified unstable, per the closed condition
/// `|lambda| >= 1`).
pub const STABILITY_BAND: f64 = 1e-6;

/// An orthonormal-basis representation of a linear subspace.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    ambient: usize,
    tol: f64,
}

impl Subspace {
    /// Wrap a matrix whose column space is the subspace; the basis is
    /// orthonormalized at the given (or default) tolerance.
    pub fn from_columns(cols: &DMatrix<f64>, tol: Option<f64>) -> Self {
        let basis = linalg::col_space(cols, tol);
        let used_tol = tol.unwrap_or_else(|| {
            linalg::default_rank_tol(cols.nrows(), cols.ncols().max(1), linalg::spectral_norm(cols))
        });
        Subspace {
            ambient: cols.nrows(),
            basis,
            tol: used_tol,
        }
    }

    /// Wrap an already-orthonormal basis without re-orthonormalizing.
    pub fn from_orthonormal(basis: DMatrix<f64>, tol: f64) -> Self {
        let ambient = basis.nrows();
        Subspace { basis, ambient, tol }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::identity(ambient, ambient),
            ambient,
            tol: ambient as f64 * f64::EPSILON,
        }
    }

    pub fn trivial(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient, 0),
            ambient,
            tol: ambient as f64 * f64::EPSILON,
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Orthogonal projection matrix `P = V V'`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Projection onto the orthogonal complement, `I - V V'`.
    pub fn complement_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.ambient, self.ambient) - self.projector()
    }

    /// `sin` of the angle between a vector and the subspace.
    pub fn sin_angle_to_vector(&self, v: &nalgebra::DVector<f64>) -> f64 {
        let norm = v.norm();
        if norm == 0.0 {
            return 0.0;
        }
        (self.complement_projector() * v).norm() / norm
    }

    /// Largest principal angle to another subspace of the same dimension.
    /// Returns `pi/2` when dimensions differ (the subspaces cannot be equal).
    pub fn largest_principal_angle(&self, other: &Subspace) -> f64 {
        if self.ambient != other.ambient || self.dim() != other.dim() {
            return std::f64::consts::FRAC_PI_2;
        }
        if self.dim() == 0 {
            return 0.0;
        }
        let g = self.basis.transpose() * &other.basis;
        let smin = linalg::singular_values(&g).min();
        smin.clamp(-1.0, 1.0).acos()
    }

    /// Subspace equality at the principal-angle threshold.
    pub fn approx_eq(&self, other: &Subspace) -> bool {
        self.dim() == other.dim() && self.largest_principal_angle(other) < ANGLE_TOL
    }

    /// `self ⊆ other` up to the angle threshold.
    pub fn is_contained_in(&self, other: &Subspace) -> bool {
        if self.ambient != other.ambient || self.dim() > other.dim() {
            return false;
        }
        if self.dim() == 0 {
            return true;
        }
        let resid = other.complement_projector() * &self.basis;
        linalg::spectral_norm(&resid) < ANGLE_TOL
    }

    /// Intersection via the projector-sum formula
    /// `P_perp(V ∩ W) = (P_perp_V + P_perp_W)^† (P_perp_V + P_perp_W)`.
    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch(self.ambient, other.ambient));
        }
        let tol = self.tol.max(other.tol);
        if self.dim() == 0 || other.dim() == 0 {
            return Ok(Subspace::trivial(self.ambient));
        }
        // a vector in both subspaces is V x = W y, i.e. [V | -W](x; y) = 0;
        // with orthonormal bases the nonzero singular values of the stacked
        // matrix are O(1), so the kernel cut is an angle threshold
        let stacked = linalg::hcat(&[self.basis.clone(), -other.basis.clone()]);
        let ker = linalg::kernel(&stacked, Some(tol));
        if ker.ncols() == 0 {
            return Ok(Subspace::trivial(self.ambient));
        }
        let coeffs = ker.rows(0, self.dim()).into_owned();
        let vectors = &self.basis * coeffs;
        Ok(Subspace::from_columns(&vectors, Some(tol)))
    }

    /// Sum of subspaces.
    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        if self.ambient != other.ambient {
            return Err(Error::AmbientMismatch(self.ambient, other.ambient));
        }
        let stacked = linalg::hcat(&[self.basis.clone(), other.basis.clone()]);
        Ok(Subspace::from_columns(&stacked, None))
    }
}

/// Orthonormal basis of the numerical kernel of `mat` at tolerance `tol`
/// (relative to the largest singular value when `None`).
pub fn null_space(mat: &DMatrix<f64>, tol: Option<f64>) -> Subspace {
    let basis = linalg::kernel(mat, tol);
    let used_tol = tol.unwrap_or_else(|| {
        linalg::default_rank_tol(mat.nrows(), mat.ncols(), linalg::spectral_norm(mat))
    });
    Subspace::from_orthonormal(basis, used_tol)
}

/// Column space of the controllability matrix `[B AB ... A^{n-1}B]`.
pub fn controllable_subspace(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Subspace> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "controllable_subspace".into(),
            expected: format!("A {n}x{n}, B {n}xm"),
            got: format!("A {}x{}, B {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols()),
        });
    }
    // grow the Krylov space incrementally instead of factoring the full
    // n-block controllability matrix: each step orthonormalizes a matrix
    // with at most 2n columns, and the dimension stabilizes within n steps
    let mut basis = linalg::col_space(b, None);
    for _ in 0..n {
        if basis.ncols() == 0 || basis.ncols() == n {
            break;
        }
        let grown = linalg::col_space(&linalg::hcat(&[basis.clone(), a * &basis]), None);
        if grown.ncols() == basis.ncols() {
            break;
        }
        basis = grown;
    }
    Ok(Subspace::from_columns(&basis, None))
}

/// Maximal output-nulling subspace of `(A, B, C, D)`: the largest `V` for
/// which some `M` gives `(A+BM)V ⊆ V` and `(C+DM)V = 0`.
///
/// Computed by the decreasing fixed-point iteration
/// `V_{i+1} = { x : ∃u, Ax+Bu ∈ V_i, Cx+Du = 0 }`, one kernel computation
/// per step; stabilizes within `n` steps.
pub fn max_output_nulling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<Subspace> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            context: "max_output_nulling".into(),
            expected: format!("A {n}x{n}, B {n}xm, C pxn, D pxm"),
            got: format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(), a.ncols(), b.nrows(), b.ncols(),
                c.nrows(), c.ncols(), d.nrows(), d.ncols()
            ),
        });
    }
    let m = b.ncols();
    let mut v = Subspace::full(n);
    for _ in 0..=n {
        let p_perp = v.complement_projector();
        let top = linalg::hcat(&[&p_perp * a, &p_perp * b]);
        let bot = linalg::hcat(&[c.clone(), d.clone()]);
        let stacked = linalg::vcat(&[top, bot]);
        let k = linalg::kernel(&stacked, None);
        let next = if k.ncols() == 0 {
            Subspace::trivial(n)
        } else {
            Subspace::from_columns(&k.rows(0, n).into_owned(), None)
        };
        debug_assert!(next.dim() <= v.dim() + m.min(0)); // non-increasing
        if next.dim() == v.dim() {
            return Ok(next);
        }
        v = next;
    }
    Ok(v)
}

/// A feedback/injection pair `(M, N)` rendering a subspace output-nulling
/// invariant: `(A+BM)V ⊆ V`, `(C+DM)V = 0`, `Im N ⊆ ker D`,
/// `Im(BN) = B ker D ∩ V`.
#[derive(Debug, Clone)]
pub struct Friend {
    pub m: DMatrix<f64>,
    pub n_mat: DMatrix<f64>,
    pub subspace: Subspace,
}

impl Friend {
    /// Residuals of the defining identities, for diagnostics and tests.
    pub fn residuals(
        &self,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> (f64, f64, f64) {
        let v = self.subspace.basis();
        let p_perp = self.subspace.complement_projector();
        let a_cl = a + b * &self.m;
        let inv = linalg::spectral_norm(&(&p_perp * (&a_cl * v)));
        let nul = linalg::spectral_norm(&((c + d * &self.m) * v));
        let dn = linalg::spectral_norm(&(d * &self.n_mat));
        (inv, nul, dn)
    }
}

/// Compute one friend of an output-nulling subspace.
///
/// For the basis `V`, solve least-squares for `U` with `AV + BU ∈ V` and
/// `CV + DU = 0`; `M = U V'` (zero on the orthogonal complement of the
/// subspace). `N` spans a preimage in `ker D` of `B ker D ∩ V`.
pub fn compute_friend(
    v: &Subspace,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<Friend> {
    let n = a.nrows();
    let m_in = b.ncols();
    let vb = v.basis();
    let scale = linalg::spectral_norm(a)
        .max(linalg::spectral_norm(c))
        .max(1.0);
    let tol = 1e-8 * scale;

    let m = if v.is_trivial() {
        DMatrix::zeros(m_in, n)
    } else {
        let p_perp = v.complement_projector();
        let lhs = linalg::vcat(&[&p_perp * b, d.clone()]);
        let rhs = -linalg::vcat(&[&p_perp * (a * vb), c * vb]);
        let u = linalg::lstsq(&lhs, &rhs);
        let residual = linalg::spectral_norm(&(&lhs * &u - &rhs));
        if residual > tol {
            return Err(Error::NotOutputNulling { residual, tol });
        }
        &u * vb.transpose()
    };

    // N: basis inside ker D whose image under B spans B ker D ∩ V
    let ker_d = linalg::kernel(d, None);
    let n_mat = if ker_d.ncols() == 0 {
        DMatrix::zeros(m_in, 0)
    } else {
        let b_kd = b * &ker_d;
        let image = Subspace::from_columns(&b_kd, None);
        let target = image.intersect(v)?;
        if target.is_trivial() {
            DMatrix::zeros(m_in, 0)
        } else {
            let coeffs = linalg::lstsq(&b_kd, target.basis());
            &ker_d * coeffs
        }
    };

    Ok(Friend {
        m,
        n_mat,
        subspace: v.clone(),
    })
}

/// The closed-loop dynamics confined to an invariant subspace:
/// `(A+BM) V* = V* A_restricted` and `B N = V* b_n_restricted`.
#[derive(Debug, Clone)]
pub struct RestrictedMap {
    pub v_star: Subspace,
    pub a_restricted: DMatrix<f64>,
    pub b_n_restricted: DMatrix<f64>,
}

/// Restrict `A + B M` to `v_star` (must be invariant) and express `B N` in
/// the `v_star` basis.
pub fn restrict(
    v_star: &Subspace,
    friend: &Friend,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<RestrictedMap> {
    let vb = v_star.basis();
    let a_cl = a + b * &friend.m;
    let a_restricted = vb.transpose() * &a_cl * vb;
    let scale = linalg::spectral_norm(&a_cl).max(1.0);
    let tol = 1e-7 * scale;
    let residual = linalg::spectral_norm(&(&a_cl * vb - vb * &a_restricted));
    if residual > tol {
        return Err(Error::NotInvariant { residual, tol });
    }
    let bn = b * &friend.n_mat;
    let b_n_restricted = vb.transpose() * &bn;
    let bn_residual = linalg::spectral_norm(&(&bn - vb * &b_n_restricted));
    if bn_residual > tol {
        return Err(Error::NotInvariant {
            residual: bn_residual,
            tol,
        });
    }
    Ok(RestrictedMap {
        v_star: v_star.clone(),
        a_restricted,
        b_n_restricted,
    })
}

/// One eigenvalue cluster of a restricted map, with its staircase structure.
#[derive(Debug, Clone)]
pub struct EigStructure {
    pub lambda: Complex<f64>,
    pub algebraic_multiplicity: usize,
    pub geometric_multiplicity: usize,
    /// Largest Jordan block size, from the kernel staircase.
    pub max_chain_len: usize,
    /// Eigenvectors (kernel of `A - lambda I`), complex columns.
    pub eigenvectors: DMatrix<Complex<f64>>,
    pub unstable: bool,
    pub borderline: bool,
    /// `(A|_{V*}, B_N)`-controllability of the eigenvalue (PBH test).
    pub controllable: bool,
    /// Set when neighboring clusters are closer than 10x the cluster radius.
    pub low_confidence: bool,
}

/// Eigenvalues of the restricted map with chain structure, stability and
/// controllability flags. Conjugate eigenvalues are merged into clusters and
/// the cluster mean is reported (this recovers defective eigenvalues that
/// split numerically).
pub fn eig_structure(map: &RestrictedMap, tol: Option<f64>) -> Vec<EigStructure> {
    let a = &map.a_restricted;
    let r = a.nrows();
    if r == 0 {
        return Vec::new();
    }
    let scale = linalg::spectral_norm(a).max(1.0);
    let radius = tol.map(|t| 10.0 * t).unwrap_or(2e-7 * scale).max(f64::EPSILON * scale * r as f64);
    let eigs = a.complex_eigenvalues();

    // greedy clustering in the complex plane
    let mut assigned = vec![false; r];
    let mut clusters: Vec<Vec<Complex<f64>>> = Vec::new();
    for i in 0..r {
        if assigned[i] {
            continue;
        }
        let mut cluster = vec![eigs[i]];
        assigned[i] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for j in 0..r {
                if assigned[j] {
                    continue;
                }
                if cluster.iter().any(|l| (l - eigs[j]).norm() < radius) {
                    cluster.push(eigs[j]);
                    assigned[j] = true;
                    changed = true;
                }
            }
        }
        clusters.push(cluster);
    }

    let means: Vec<Complex<f64>> = clusters
        .iter()
        .map(|c| {
            let mut mean = c.iter().sum::<Complex<f64>>() / Complex::new(c.len() as f64, 0.0);
            // conjugate-symmetric clusters are real eigenvalues
            if mean.im.abs() < radius {
                mean.im = 0.0;
            }
            mean
        })
        .collect();

    let ac = linalg::to_complex(a);
    let mut out = Vec::new();
    for (ci, cluster) in clusters.iter().enumerate() {
        let lambda = means[ci];
        let alg = cluster.len();
        let shifted = &ac - DMatrix::from_diagonal_element(r, r, lambda);
        // kernel staircase of (A - lambda I)^k
        let mut powered = DMatrix::identity(r, r);
        let mut dims = Vec::new();
        let mut eigvecs = DMatrix::zeros(r, 0);
        for k in 1..=alg {
            powered = &powered * &shifted;
            let ker = linalg::kernel_c(&powered, Some(1e-7 * scale.powi(k as i32)));
            if k == 1 {
                eigvecs = ker.clone();
            }
            dims.push(ker.ncols());
            if ker.ncols() >= alg {
                break;
            }
        }
        let geometric = dims.first().copied().unwrap_or(0);
        let mut max_chain = 0;
        let mut prev = 0;
        for (k, &dk) in dims.iter().enumerate() {
            if dk > prev {
                max_chain = k + 1;
            }
            prev = dk;
        }
        let modulus = lambda.norm();
        let unstable = modulus >= 1.0 - STABILITY_BAND;
        let borderline = (modulus - 1.0).abs() <= STABILITY_BAND;
        let controllable = if map.b_n_restricted.ncols() == 0 {
            false
        } else {
            let pbh = linalg::hcat(&[
                (a - DMatrix::from_diagonal_element(r, r, lambda.re)).map(|x| x),
                map.b_n_restricted.clone(),
            ]);
            // PBH in complex arithmetic when lambda is complex. Rank cut at
            // the cluster radius: lambda itself is only known to clustering
            // precision, so (A - lambda I) retains singular values of that
            // size along genuinely uncontrollable directions.
            let pbh_rank = if lambda.im == 0.0 {
                linalg::rank(&pbh, Some(radius))
            } else {
                let shifted_c = &ac - DMatrix::from_diagonal_element(r, r, lambda);
                let bc = linalg::to_complex(&map.b_n_restricted);
                let stacked = DMatrix::from_fn(r, r + bc.ncols(), |i, j| {
                    if j < r {
                        shifted_c[(i, j)]
                    } else {
                        bc[(i, j - r)]
                    }
                });
                linalg::rank_c(&stacked, Some(radius))
            };
            pbh_rank == r
        };
        let gap = means
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != ci)
            .map(|(_, l)| (l - lambda).norm())
            .fold(f64::INFINITY, f64::min);
        out.push(EigStructure {
            lambda,
            algebraic_multiplicity: alg,
            geometric_multiplicity: geometric,
            max_chain_len: max_chain,
            eigenvectors: eigvecs,
            unstable,
            borderline,
            controllable,
            low_confidence: gap < 10.0 * radius,
        });
    }
    // decreasing |lambda|: the vulnerability scan wants the most unstable first
    out.sort_by(|a, b| b.lambda.norm().partial_cmp(&a.lambda.norm()).unwrap());
    out
}

/// Solution space of the eigenspace-assignment equation
/// `(I - B_N B_N^†)(G J(lambda) - A|_{V*} G) = 0`, viewed as a linear system
/// in `vec(G)`. Columns of the result are stacked `r x jordan_size` chain
/// candidates (column-major).
pub fn eigenspace_assignment_solutions(
    map: &RestrictedMap,
    lambda: Complex<f64>,
    jordan_size: usize,
) -> DMatrix<Complex<f64>> {
    assert!(jordan_size >= 1);
    let r = map.a_restricted.nrows();
    let bn = &map.b_n_restricted;
    let p = if bn.ncols() == 0 {
        DMatrix::identity(r, r)
    } else {
        DMatrix::identity(r, r) - bn * linalg::pinv(bn)
    };
    let pc = linalg::to_complex(&p);
    let pa = linalg::to_complex(&(&p * &map.a_restricted));
    // J(lambda): lambda on the diagonal, ones on the superdiagonal
    let mut j = DMatrix::from_diagonal_element(jordan_size, jordan_size, lambda);
    for i in 0..jordan_size.saturating_sub(1) {
        j[(i, i + 1)] = Complex::new(1.0, 0.0);
    }
    let eye_j = DMatrix::identity(jordan_size, jordan_size);
    // vec(P G J) = (J' ⊗ P) vec(G), vec(P A G) = (I ⊗ P A) vec(G)
    let lin = linalg::kron_c(&j.transpose(), &pc) - linalg::kron_c(&eye_j, &pa);
    // generous cut: near-kernel directions are acceptable candidates since
    // every caller re-verifies the closed-loop residual at its own
    // tolerance, while a machine-precision cut misses exact solutions whose
    // singular values carry accumulated rounding from the restriction
    let scale = linalg::spectral_norm(&map.a_restricted).max(1.0);
    linalg::kernel_c(&lin, Some(1e-9 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        })
    }

    fn axis(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn axis_mat(n: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn null_space_examples() {
        assert!(null_space(&DMatrix::identity(3, 3), None).is_trivial());
        let s = null_space(&dmatrix![1.0, 1.0; 1.0, 1.0], None);
        assert_eq!(s.dim(), 1);
        assert!(s.sin_angle_to_vector(&DVector::from_vec(vec![1.0, -1.0])) < 1e-12);
    }

    #[test]
    fn intersect_axis_planes() {
        let v = Subspace::from_columns(&linalg::hcat(&[axis_mat(3, 0), axis_mat(3, 1)]), None);
        let w = Subspace::from_columns(&linalg::hcat(&[axis_mat(3, 1), axis_mat(3, 2)]), None);
        let i = v.intersect(&w).unwrap();
        assert_eq!(i.dim(), 1);
        assert!(i.sin_angle_to_vector(&axis(3, 1)) < 1e-10);
        // identity case
        assert!(v.intersect(&v).unwrap().approx_eq(&v));
    }

    #[test]
    fn intersect_planted_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let shared = randn(&mut rng, 5, 1);
            let v = Subspace::from_columns(&linalg::hcat(&[shared.clone(), randn(&mut rng, 5, 2)]), None);
            let w = Subspace::from_columns(&linalg::hcat(&[shared.clone(), randn(&mut rng, 5, 2)]), None);
            let i = v.intersect(&w).unwrap();
            assert_eq!(i.dim(), 1);
            let dir = DVector::from_column_slice(shared.as_slice());
            assert!(i.sin_angle_to_vector(&dir) < 1e-8);
        }
    }

    #[test]
    fn projectors_sum_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = Subspace::from_columns(&randn(&mut rng, 4, 2), None);
        let sum = v.projector() + v.complement_projector();
        assert!(linalg::spectral_norm(&(sum - DMatrix::identity(4, 4))) < 1e-12);
        assert!(
            linalg::spectral_norm(&(Subspace::full(4).projector() - DMatrix::identity(4, 4)))
                < 1e-14
        );
    }

    #[test]
    fn intersection_formula_matches_stacked_kernel() {
        // projection-formula path inside `intersect` vs the direct stacked-kernel route
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let v = Subspace::from_columns(&randn(&mut rng, 6, 3), None);
            let w = Subspace::from_columns(&randn(&mut rng, 6, 4), None);
            let lhs = v.intersect(&w).unwrap();
            let stacked = linalg::vcat(&[v.complement_projector(), w.complement_projector()]);
            let direct = Subspace::from_orthonormal(linalg::kernel(&stacked, None), 1e-12);
            assert_eq!(lhs.dim(), direct.dim());
            if lhs.dim() > 0 {
                assert!(lhs.largest_principal_angle(&direct) < 1e-7);
            }
        }
    }

    #[test]
    fn controllable_subspace_examples() {
        let s = controllable_subspace(&DMatrix::zeros(3, 3), &axis_mat(3, 0)).unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.sin_angle_to_vector(&axis(3, 0)) < 1e-14);
        let full = controllable_subspace(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert!(full.is_full());
        // random pair vs rank of the explicitly formed controllability matrix
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = randn(&mut rng, 4, 4);
            let b = randn(&mut rng, 4, 1);
            let s = controllable_subspace(&a, &b).unwrap();
            let explicit = linalg::hcat(&[
                b.clone(),
                &a * &b,
                linalg::mat_pow(&a, 2) * &b,
                linalg::mat_pow(&a, 3) * &b,
            ]);
            assert_eq!(s.dim(), linalg::rank(&explicit, None));
        }
    }

    #[test]
    fn output_nulling_degenerate_cases() {
        let a = dmatrix![0.5, 0.1; 0.0, 0.4];
        let b = dmatrix![1.0; 0.0];
        // C = I, D = 0: full observation kills nulling
        let v = max_output_nulling(&a, &b, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 1)).unwrap();
        assert!(v.is_trivial());
        // C = 0: full space
        let v = max_output_nulling(&a, &b, &DMatrix::zeros(1, 2), &DMatrix::zeros(1, 1)).unwrap();
        assert!(v.is_full());
    }

    /// Horizon-n zero-output feasibility oracle: x0 is nullable over n+1
    /// outputs iff it lies in the kernel of `P_perp(Im G) O`.
    fn nulling_oracle(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Subspace {
        let n = a.nrows();
        let p = c.nrows();
        let m = b.ncols();
        let steps = n + 1;
        let mut obs = Vec::new();
        for k in 0..steps {
            obs.push(c * linalg::mat_pow(a, k));
        }
        let o = linalg::vcat(&obs);
        let mut g = DMatrix::zeros(p * steps, m * steps);
        for i in 0..steps {
            for j in 0..=i {
                let blk = if i == j {
                    d.clone()
                } else {
                    c * linalg::mat_pow(a, i - j - 1) * b
                };
                g.view_mut((p * i, m * j), (p, m)).copy_from(&blk);
            }
        }
        let range = linalg::col_space(&g, None);
        let p_perp = DMatrix::identity(p * steps, p * steps) - &range * range.transpose();
        null_space(&(&p_perp * o), Some(1e-8))
    }

    #[test]
    fn output_nulling_matches_feasibility_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let n = rng.gen_range(2..=4);
            let a = randn(&mut rng, n, n) * 0.5;
            let mb = rng.gen_range(1..=2);
            let pc = rng.gen_range(1..=2);
            let b = randn(&mut rng, n, mb);
            let c = randn(&mut rng, pc, n);
            let d = randn(&mut rng, c.nrows(), b.ncols())
                * if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let v = max_output_nulling(&a, &b, &c, &d).unwrap();
            let oracle = nulling_oracle(&a, &b, &c, &d);
            assert_eq!(v.dim(), oracle.dim(), "dims differ");
            if v.dim() > 0 {
                assert!(v.largest_principal_angle(&oracle) < 1e-6);
            }
        }
    }

    #[test]
    fn friend_of_trivial_subspace() {
        let a = dmatrix![0.5, 0.0; 0.0, 0.4];
        let b = dmatrix![1.0; 1.0];
        let c = DMatrix::identity(2, 2);
        let d = DMatrix::zeros(2, 1);
        let f = compute_friend(&Subspace::trivial(2), &a, &b, &c, &d).unwrap();
        assert!(linalg::spectral_norm(&f.m) == 0.0);
        assert_eq!(f.n_mat.ncols(), 0);
    }

    #[test]
    fn friend_residuals_small_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut nontrivial = 0;
        for _ in 0..40 {
            let n = rng.gen_range(2..=5);
            let a = randn(&mut rng, n, n) * 0.6;
            let mb = rng.gen_range(1..=2);
            let b = randn(&mut rng, n, mb);
            let c = randn(&mut rng, 1, n);
            let d = DMatrix::zeros(1, b.ncols());
            let v = max_output_nulling(&a, &b, &c, &d).unwrap();
            if v.is_trivial() {
                continue;
            }
            nontrivial += 1;
            let f = compute_friend(&v, &a, &b, &c, &d).unwrap();
            let (inv, nul, dn) = f.residuals(&a, &b, &c, &d);
            assert!(inv < 1e-8 && nul < 1e-8 && dn < 1e-8, "residuals {inv} {nul} {dn}");
            // Im(B N) = B ker D ∩ V
            let bn = &b * &f.n_mat;
            let im_bn = Subspace::from_columns(&bn, None);
            let bkd = Subspace::from_columns(&(&b * linalg::kernel(&d, None)), None);
            let target = bkd.intersect(&v).unwrap();
            assert_eq!(im_bn.dim(), target.dim());
        }
        assert!(nontrivial >= 5, "generator produced too few nontrivial cases");
    }

    #[test]
    fn restrict_full_space_identity_friend() {
        let a = dmatrix![0.3, 1.0; 0.0, 0.2];
        let b = dmatrix![0.0; 0.0];
        let v = Subspace::full(2);
        let f = Friend {
            m: DMatrix::zeros(1, 2),
            n_mat: DMatrix::zeros(1, 0),
            subspace: v.clone(),
        };
        let r = restrict(&v, &f, &a, &b).unwrap();
        assert!(linalg::spectral_norm(&(&r.a_restricted - &a)) < 1e-12);
    }

    #[test]
    fn eig_structure_diagonal() {
        let map = RestrictedMap {
            v_star: Subspace::full(2),
            a_restricted: dmatrix![0.5, 0.0; 0.0, 1.2],
            b_n_restricted: DMatrix::zeros(2, 0),
        };
        let eigs = eig_structure(&map, None);
        assert_eq!(eigs.len(), 2);
        assert!(eigs[0].unstable && (eigs[0].lambda.re - 1.2).abs() < 1e-10);
        assert!(!eigs[1].unstable && (eigs[1].lambda.re - 0.5).abs() < 1e-10);
        assert!(eigs.iter().all(|e| e.max_chain_len == 1));
    }

    #[test]
    fn eig_structure_recovers_jordan_chain() {
        // 2x2 Jordan block at 1.0 hidden by a similarity
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = dmatrix![1.0, 1.0; 0.0, 1.0];
        let mut t = randn(&mut rng, 2, 2);
        while t.determinant().abs() < 0.3 {
            t = randn(&mut rng, 2, 2);
        }
        let a = &t * j * t.try_inverse().unwrap();
        let map = RestrictedMap {
            v_star: Subspace::full(2),
            a_restricted: a,
            b_n_restricted: DMatrix::zeros(2, 0),
        };
        let eigs = eig_structure(&map, None);
        assert_eq!(eigs.len(), 1);
        let e = &eigs[0];
        assert!((e.lambda - Complex::new(1.0, 0.0)).norm() < 1e-6);
        assert_eq!(e.algebraic_multiplicity, 2);
        assert_eq!(e.max_chain_len, 2);
        assert!(e.unstable && !e.controllable);
    }

    #[test]
    fn assignment_solutions_degenerate_cases() {
        // B_N square invertible: left factor vanishes, everything solves
        let map = RestrictedMap {
            v_star: Subspace::full(2),
            a_restricted: dmatrix![0.2, 0.0; 0.0, 0.9],
            b_n_restricted: DMatrix::identity(2, 2),
        };
        let sol = eigenspace_assignment_solutions(&map, Complex::new(1.5, 0.0), 1);
        assert_eq!(sol.ncols(), 2);

        // B_N = 0, size 1: solutions are exactly the eigenvectors
        let map = RestrictedMap {
            v_star: Subspace::full(2),
            a_restricted: dmatrix![1.2, 0.0; 0.0, 0.5],
            b_n_restricted: DMatrix::zeros(2, 0),
        };
        let sol = eigenspace_assignment_solutions(&map, Complex::new(1.2, 0.0), 1);
        assert_eq!(sol.ncols(), 1);
        assert!(sol[(0, 0)].norm() > 0.9 && sol[(1, 0)].norm() < 1e-10);
    }

    #[test]
    fn assignment_solutions_verify_feedback_reconstruction() {
        // each returned G must admit a K with (A + B_N K) G = G J
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let r = rng.gen_range(2..=4);
            let a = randn(&mut rng, r, r);
            let bn = randn(&mut rng, r, 1);
            let map = RestrictedMap {
                v_star: Subspace::full(r),
                a_restricted: a.clone(),
                b_n_restricted: bn.clone(),
            };
            let lambda = Complex::new(1.3, 0.0);
            let sol = eigenspace_assignment_solutions(&map, lambda, 1);
            for col in 0..sol.ncols() {
                let g: DMatrix<f64> = DMatrix::from_fn(r, 1, |i, _| sol[(i, col)].re);
                if linalg::spectral_norm(&g) < 1e-8 {
                    continue;
                }
                // residual of the assignment equation
                let p = DMatrix::identity(r, r) - &bn * linalg::pinv(&bn);
                let resid = &p * (&g * lambda.re - &a * &g);
                assert!(linalg::spectral_norm(&resid) < 1e-8);
                // reconstruct K with K g = B_N^†(lambda g - A g)
                let w = linalg::pinv(&bn) * (&g * lambda.re - &a * &g);
                let k = &w * linalg::pinv(&g);
                let acl = &a + &bn * k;
                assert!(linalg::spectral_norm(&(&acl * &g - &g * lambda.re)) < 1e-7);
            }
        }
    }
}
