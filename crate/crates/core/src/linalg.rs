//! Small dense linear-algebra helpers shared by the geometry and bundle code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `i` derived from a master seed: `seed ^ hash(i)`.
pub fn split_seed(seed: u64, i: u64) -> u64 {
    seed ^ mix64(i)
}

/// Flips `v` so that its first entry with magnitude above `1e-12` is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    if let Some(x) = v.iter().find(|x| x.abs() > 1e-12) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending and
/// eigenvectors (columns) in canonical sign.
pub fn sym_eigen_ascending(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let mut vals = Vec::with_capacity(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        let mut v = eig.eigenvectors.column(i).into_owned();
        canonical_sign(&mut v);
        vecs.set_column(k, &v);
    }
    (vals, vecs)
}

/// Modified Gram-Schmidt over the columns of `m`; columns whose residual norm
/// falls below `tol` are dropped.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol {
            cols.push(v / norm);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis (columns) of the orthogonal complement of the column span
/// of an orthonormal `basis`.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let d = basis.ncols();
    let mut cols: Vec<DVector<f64>> = (0..d).map(|j| basis.column(j).into_owned()).collect();
    let mut out = Vec::with_capacity(n - d);
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            let q = v / norm;
            cols.push(q.clone());
            out.push(q);
        }
    }
    if out.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

/// Proper rotation whose first `d` columns are the given orthonormal tangent
/// basis; the remaining columns complete it, with the last one flipped if needed
/// so that the determinant is +1.
pub fn rotation_from_tangent(tangent: &DMatrix<f64>) -> DMatrix<f64> {
    let n = tangent.nrows();
    let d = tangent.ncols();
    let comp = orthonormal_complement(tangent);
    let mut r = DMatrix::zeros(n, n);
    r.view_mut((0, 0), (n, d)).copy_from(tangent);
    r.view_mut((0, d), (n, n - d)).copy_from(&comp);
    if r.determinant() < 0.0 {
        let c = -r.column(n - 1).into_owned();
        r.set_column(n - 1, &c);
    }
    r
}

/// Orthonormalized i.i.d. standard-normal `n x g` frame.
pub fn random_frame(n: usize, g: usize, rng: &mut Rng) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, g, |_, _| StandardNormal.sample(rng));
        let q = gram_schmidt(&m, 1e-10);
        if q.ncols() == g {
            return q;
        }
    }
}

/// Uniformly random proper rotation of R^n.
pub fn random_rotation(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut q = random_frame(n, n, rng);
    if q.determinant() < 0.0 {
        let c = -q.column(0).into_owned();
        q.set_column(0, &c);
    }
    q
}

/// `exp(A)` for a small skew-symmetric `A`, by scaling and squaring a Taylor series.
pub fn expm_skew(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.norm();
    let mut s = 0;
    while norm / f64::from(1u32 << s.min(30)) > 0.25 && s < 30 {
        s += 1;
    }
    let b = a / f64::from(1u32 << s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..16 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Largest deviation of `m^T m` from the identity, entrywise.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let n = g.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Spectral norm via the largest eigenvalue of `m^T m`.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let (vals, _) = sym_eigen_ascending(&(m.transpose() * m));
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Principal angles (radians, ascending) between the column spans of two
/// orthonormal bases of equal width.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let m = a.transpose() * b;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let sv = m.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}
