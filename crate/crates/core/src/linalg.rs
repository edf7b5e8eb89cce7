//! Dense kernels shared by the analysis and reduction code: complex Schur
//! forms, triangular Sylvester/Lyapunov solvers, and small matrix helpers.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub const DEFAULT_MAX_DIM: usize = 4000;

/// Dimension cap for dense cubic-cost solves, overridable via `PHSG_MAX_DIM`.
pub fn max_dense_dim() -> usize {
    std::env::var("PHSG_MAX_DIM")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_DIM)
}

pub(crate) fn check_dense_dim(dim: usize) -> Result<()> {
    let cap = max_dense_dim();
    if dim > cap {
        return Err(Error::TooLarge { dim, cap });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// max |M + Mᵀ|
pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] + m[(j, i)]).abs());
        }
    }
    worst
}

/// max |M − Mᵀ|
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Reciprocal 2-norm condition number from the singular values.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| C64::new(v, 0.0))
}

pub fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

pub fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, C64::new)
}

/// Complex product through four real gemm calls.
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut re = &ar * &br;
    re.gemm(-1.0, &ai, &bi, 1.0);
    let mut im = &ar * &bi;
    im.gemm(1.0, &ai, &br, 1.0);
    join(&re, &im)
}

/// Product of a real and a complex matrix.
pub fn rcmul(a: &DMatrix<f64>, b: &CMatrix) -> CMatrix {
    let (br, bi) = split(b);
    join(&(a * br), &(a * bi))
}

/// Complex upper-triangular Schur form `A = U T Uᴴ` of a real matrix.
#[derive(Clone, Debug)]
pub struct ComplexSchur {
    pub u: CMatrix,
    pub t: CMatrix,
    /// Real Schur vectors `Q` and quasi-triangular `T_r` with `A = Q T_r Qᵀ`.
    pub q: DMatrix<f64>,
    pub tr: DMatrix<f64>,
    /// `U = Q G` with `G` a product of 2×2 rotations `(k, g1, g2)` on rows/columns `k, k+1`.
    rotations: Vec<(usize, C64, C64)>,
}

impl ComplexSchur {
    pub fn of_real(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension(format!("Schur form of {}x{} matrix", n, a.ncols())));
        }
        if n == 0 {
            return Ok(Self {
                u: CMatrix::zeros(0, 0),
                t: CMatrix::zeros(0, 0),
                q: DMatrix::zeros(0, 0),
                tr: DMatrix::zeros(0, 0),
                rotations: Vec::new(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenFailure("non-finite matrix entry".into()));
        }
        let schur = nalgebra::linalg::Schur::try_new(a, f64::EPSILON, 0)
            .ok_or_else(|| Error::EigenFailure("real Schur iteration did not converge".into()))?;
        let (q, tr) = schur.unpack();
        let mut u = to_complex(&q);
        let mut t = to_complex(&tr);
        let mut rotations = Vec::new();

        // Split each 2x2 bump with a unitary rotation built from one of its eigenvectors.
        let mut k = 0;
        while k + 1 < n {
            if tr[(k + 1, k)] == 0.0 {
                k += 1;
                continue;
            }
            let (a11, a12, a21, a22) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
            let half = (a11 - a22) * 0.5;
            let lambda = (a11 + a22) * 0.5 + (half * half + a12 * a21).sqrt();
            let v_a = (a12, lambda - a11);
            let v_b = (lambda - a22, a21);
            let norm_a = (v_a.0.norm_sqr() + v_a.1.norm_sqr()).sqrt();
            let norm_b = (v_b.0.norm_sqr() + v_b.1.norm_sqr()).sqrt();
            let (v1, v2) = if norm_a >= norm_b {
                (v_a.0 / norm_a, v_a.1 / norm_a)
            } else {
                (v_b.0 / norm_b, v_b.1 / norm_b)
            };
            for j in k..n {
                let (x, y) = (t[(k, j)], t[(k + 1, j)]);
                t[(k, j)] = v1.conj() * x + v2.conj() * y;
                t[(k + 1, j)] = -v2 * x + v1 * y;
            }
            for i in 0..=k + 1 {
                let (x, y) = (t[(i, k)], t[(i, k + 1)]);
                t[(i, k)] = x * v1 + y * v2;
                t[(i, k + 1)] = -x * v2.conj() + y * v1.conj();
            }
            for i in 0..n {
                let (x, y) = (u[(i, k)], u[(i, k + 1)]);
                u[(i, k)] = x * v1 + y * v2;
                u[(i, k + 1)] = -x * v2.conj() + y * v1.conj();
            }
            t[(k + 1, k)] = C64::new(0.0, 0.0);
            rotations.push((k, v1, v2));
            k += 2;
        }
        for j in 0..n {
            for i in j + 1..n {
                t[(i, j)] = C64::new(0.0, 0.0);
            }
        }
        Ok(Self { u, t, q, tr, rotations })
    }

    /// `x ← G x`, mapping complex Schur coordinates to real Schur coordinates.
    pub fn to_real_coordinates(&self, x: &mut [C64]) {
        for &(k, g1, g2) in &self.rotations {
            let (a, b) = (x[k], x[k + 1]);
            x[k] = g1 * a - g2.conj() * b;
            x[k + 1] = g2 * a + g1.conj() * b;
        }
    }

    /// `x ← conj(G) x`
    pub fn to_real_coordinates_conj(&self, x: &mut [C64]) {
        for &(k, g1, g2) in &self.rotations {
            let (a, b) = (x[k], x[k + 1]);
            x[k] = g1.conj() * a - g2 * b;
            x[k + 1] = g2.conj() * a + g1 * b;
        }
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.t.diagonal().iter().copied().collect()
    }
}

fn pivot(d: C64) -> Result<C64> {
    if d.norm() == 0.0 || !d.is_finite() {
        return Err(Error::Singular("shifted triangular factor".into(), 0.0));
    }
    Ok(d)
}

/// Solves `(T + shift·I) x = b` in place for upper-triangular `T`.
pub fn solve_upper_shifted(t: &CMatrix, shift: C64, x: &mut [C64]) -> Result<()> {
    let n = t.nrows();
    let ts = t.as_slice();
    for i in (0..n).rev() {
        let col = &ts[i * n..i * n + i + 1];
        let xi = x[i] / pivot(col[i] + shift)?;
        x[i] = xi;
        for (h, c) in x[..i].iter_mut().zip(&col[..i]) {
            *h -= c * xi;
        }
    }
    Ok(())
}

/// Solves `(Tᵀ + shift·I) x = b` in place for upper-triangular `T`.
pub fn solve_upper_transposed_shifted(t: &CMatrix, shift: C64, x: &mut [C64]) -> Result<()> {
    let n = t.nrows();
    let ts = t.as_slice();
    for i in 0..n {
        let col = &ts[i * n..i * n + i];
        let s: C64 = col.iter().zip(&x[..i]).map(|(c, v)| c * v).sum();
        x[i] = (x[i] - s) / pivot(ts[i * n + i] + shift)?;
    }
    Ok(())
}

const SYLVESTER_BLOCK: usize = 64;

/// Solves `T1 X + X T2ᴴ = F` for upper-triangular `T1` (n1×n1) and `T2` (n2×n2).
pub fn sylvester_triangular(t1: &CMatrix, t2: &CMatrix, f: CMatrix) -> Result<CMatrix> {
    let n1 = t1.nrows();
    let n2 = t2.nrows();
    if f.nrows() != n1 || f.ncols() != n2 {
        return Err(Error::Dimension(format!(
            "Sylvester right-hand side {}x{} for factors {n1} and {n2}",
            f.nrows(),
            f.ncols()
        )));
    }
    let mut x = f;
    let mut jend = n2;
    while jend > 0 {
        let jstart = jend.saturating_sub(SYLVESTER_BLOCK);
        for j in (jstart..jend).rev() {
            for k in j + 1..jend {
                let c = t2[(j, k)].conj();
                if c != C64::new(0.0, 0.0) {
                    let (left, right) = x.as_mut_slice().split_at_mut(k * n1);
                    let xj = &mut left[j * n1..(j + 1) * n1];
                    let xk = &right[..n1];
                    for (a, b) in xj.iter_mut().zip(xk) {
                        *a -= c * b;
                    }
                }
            }
            let shift = t2[(j, j)].conj();
            solve_upper_shifted(t1, shift, &mut x.as_mut_slice()[j * n1..(j + 1) * n1])?;
        }
        if jstart > 0 {
            let width = jend - jstart;
            let xb = x.columns(jstart, width).into_owned();
            let coupling = t2.view((0, jstart), (jstart, width)).adjoint();
            let update = cmul(&xb, &coupling);
            let mut left = x.columns_mut(0, jstart);
            left -= update;
        }
        jend = jstart;
    }
    Ok(x)
}

/// Modified Gram–Schmidt with one reorthogonalization pass. Returns
/// `‖w_after‖/‖w_before‖`.
pub fn orthogonalize_against(w: &mut DVector<f64>, basis: &[DVector<f64>]) -> f64 {
    let before = w.norm();
    for _ in 0..2 {
        for v in basis {
            let h = v.dot(w);
            w.axpy(-h, v, 1.0);
        }
    }
    if before == 0.0 {
        0.0
    } else {
        w.norm() / before
    }
}

/// Orthonormal basis for the column span of `m`, dropping columns whose
/// relative residual after orthogonalization falls below `drop_tol`.
pub fn orthonormalize(m: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut w = m.column(j).into_owned();
        let ratio = orthogonalize_against(&mut w, &cols);
        if ratio > drop_tol {
            let nrm = w.norm();
            cols.push(w / nrm);
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// max |VᵀV − I|
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// LU solve `M X = B`, failing when the factor is singular.
pub fn lu_solve(m: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let lu = m.clone().lu();
    lu.solve(b).ok_or_else(|| Error::Singular(what.to_string(), 0.0))
}
