//! Projection-based model order reduction: one-sided Arnoldi, IRKA used
//! with `W := V`, balanced truncation, and structure-preserving Galerkin reduction.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::analysis::SchurRealization;
use crate::error::{dim_check, Error, Result};
use crate::linalg::{self, C64};
use crate::ph::{self, LTISystem, StandardPHSystem, ValidationReport};
use crate::sg::SGSystem;

pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Projection matrices `V`, `W` (`n × r`).
#[derive(Clone, Debug)]
pub struct ProjectionPair {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub galerkin: bool,
    pub biorthogonal: bool,
}

impl ProjectionPair {
    pub fn galerkin(v: DMatrix<f64>) -> Self {
        Self { w: v.clone(), v, galerkin: true, biorthogonal: false }
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    /// First `r` columns of both matrices.
    pub fn truncate(&self, r: usize) -> Result<ProjectionPair> {
        if r > self.rank() {
            return Err(Error::RankExceeded { requested: r, available: self.rank() });
        }
        Ok(Self {
            v: self.v.columns(0, r).into_owned(),
            w: self.w.columns(0, r).into_owned(),
            galerkin: self.galerkin,
            biorthogonal: self.biorthogonal,
        })
    }
}

/// Galerkin ROM of a standard pH system, with the basis used for lifting.
#[derive(Clone, Debug)]
pub struct ReducedPHSystem {
    pub system: StandardPHSystem,
    pub v: DMatrix<f64>,
}

impl ReducedPHSystem {
    pub fn dim(&self) -> usize {
        self.system.e.nrows()
    }

    pub fn to_lti(&self) -> LTISystem {
        self.system.to_lti()
    }

    pub fn validate(&self, tol: f64) -> Result<ValidationReport> {
        ph::validate_standard(&self.system, tol)
    }

    pub fn hamiltonian(&self, v: &[f64]) -> Result<f64> {
        ph::standard_hamiltonian(&self.system, &DVector::from_column_slice(v))
    }

    /// `V v̄`
    pub fn lift(&self, v: &[f64]) -> DVector<f64> {
        &self.v * DVector::from_column_slice(v)
    }
}

fn check_orthonormal(v: &DMatrix<f64>) -> Result<()> {
    let defect = linalg::orthonormality_defect(v);
    if !(defect <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(defect));
    }
    Ok(())
}

/// `Ē = VᵀÊV`, `J̄ = VᵀĴV`, `R̄ = VᵀR̂V`, `B̄ = VᵀB̂`, `P̄ = VᵀP̂`; `S`, `N` unchanged.
pub fn galerkin_reduce(sg: &SGSystem, v: &DMatrix<f64>) -> Result<ReducedPHSystem> {
    dim_check(v.nrows() == sg.dimension(), || {
        format!("basis with {} rows for SG dimension {}", v.nrows(), sg.dimension())
    })?;
    check_orthonormal(v)?;
    let vt = v.transpose();
    let sandwich = |m: &nalgebra_sparse::CscMatrix<f64>| &vt * (m * v);
    let left = |m: &nalgebra_sparse::CscMatrix<f64>| &vt * crate::sg::csc_to_dense(m);
    let system = StandardPHSystem {
        e: linalg::symmetrize(&sandwich(&sg.e)),
        j: skew_part(&sandwich(&sg.j)),
        r: linalg::symmetrize(&sandwich(&sg.r)),
        b: left(&sg.b),
        p: left(&sg.p),
        s: crate::sg::csc_to_dense(&sg.s),
        n: crate::sg::csc_to_dense(&sg.n),
    };
    Ok(ReducedPHSystem { system, v: v.clone() })
}

fn skew_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Same as [`galerkin_reduce`] for a dense standard system.
pub fn galerkin_reduce_standard(sys: &StandardPHSystem, v: &DMatrix<f64>) -> Result<ReducedPHSystem> {
    sys.check_dims()?;
    dim_check(v.nrows() == sys.e.nrows(), || "basis rows differ from state dimension".into())?;
    check_orthonormal(v)?;
    let vt = v.transpose();
    let system = StandardPHSystem {
        e: linalg::symmetrize(&(&vt * &sys.e * v)),
        j: skew_part(&(&vt * &sys.j * v)),
        r: linalg::symmetrize(&(&vt * &sys.r * v)),
        b: &vt * &sys.b,
        p: &vt * &sys.p,
        s: sys.s.clone(),
        n: sys.n.clone(),
    };
    Ok(ReducedPHSystem { system, v: v.clone() })
}

/// `Ē = WᵀEV`, `Ā = WᵀAV`, `B̄ = WᵀB`, `C̄ = CV`, `D̄ = D`.
pub fn petrov_reduce(sys: &LTISystem, v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<LTISystem> {
    sys.check_dims()?;
    let n = sys.state_dim();
    dim_check(v.nrows() == n && w.nrows() == n && v.ncols() == w.ncols(), || {
        format!("projection {}x{} / {}x{} for dimension {n}", v.nrows(), v.ncols(), w.nrows(), w.ncols())
    })?;
    let wt = w.transpose();
    let wv = &wt * v;
    let r = v.ncols();
    if r > 0 {
        let rc = linalg::rcond(&wv);
        if rc < ph::RCOND_MIN {
            return Err(Error::Singular("W^T V".into(), rc));
        }
    }
    LTISystem::new(&wt * &sys.e * v, &wt * &sys.a * v, &wt * &sys.b, &sys.c * v, sys.d.clone())
}

/// Orthonormal basis of `K_r((σ0E − A)⁻¹E, (σ0E − A)⁻¹B)`, block-wise for several inputs.
/// Stops early, with a warning, when the space becomes invariant.
pub fn arnoldi_basis(sys: &LTISystem, r: usize, sigma0: f64) -> Result<DMatrix<f64>> {
    sys.check_dims()?;
    let n = sys.state_dim();
    if r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("reduced dimension {r} outside 1..={n}")));
    }
    linalg::check_dense_dim(n)?;
    let pencil = &sys.e * sigma0 - &sys.a;
    let lu = pencil.lu();
    let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        let x = lu
            .solve(rhs)
            .ok_or_else(|| Error::Singular(format!("sigma0 E - A at sigma0 = {sigma0}"), 0.0))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("sigma0 E - A at sigma0 = {sigma0}"), 0.0));
        }
        Ok(x)
    };
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut frontier: Vec<DVector<f64>> =
        (0..sys.inputs()).map(|j| solve(&sys.b.column(j).into_owned())).collect::<Result<_>>()?;
    while basis.len() < r {
        let mut next = Vec::new();
        for mut w in frontier {
            if basis.len() == r {
                break;
            }
            let ratio = linalg::orthogonalize_against(&mut w, &basis);
            if ratio <= 1e-12 {
                continue;
            }
            let nrm = w.norm();
            let v = w / nrm;
            next.push(solve(&(&sys.e * &v))?);
            basis.push(v);
        }
        if next.is_empty() {
            warn!("Krylov space became invariant at dimension {} (requested {r})", basis.len());
            break;
        }
        frontier = next;
    }
    if basis.is_empty() {
        return Err(Error::Singular("Krylov start vector vanished".into(), 0.0));
    }
    Ok(DMatrix::from_columns(&basis))
}

#[derive(Clone, Debug)]
pub struct IrkaOptions {
    pub init_shifts: Option<Vec<f64>>,
    pub maxiter: usize,
    pub tol: f64,
}

impl Default for IrkaOptions {
    fn default() -> Self {
        Self { init_shifts: None, maxiter: 100, tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct IrkaResult {
    /// Orthonormal `V`.
    pub v: DMatrix<f64>,
    pub shifts: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
}

fn is_real_shift(s: C64) -> bool {
    s.im.abs() <= 1e-10 * s.norm().max(f64::MIN_POSITIVE)
}

/// Real-ified directions for a conjugation-closed shift set.
fn real_directions(
    shifts: &[C64],
    n: usize,
    dir: impl Fn(C64) -> Result<linalg::CMatrix>,
) -> Result<DMatrix<f64>> {
    let r = shifts.len();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut used = vec![false; r];
    for k in 0..r {
        if used[k] {
            continue;
        }
        used[k] = true;
        let s = shifts[k];
        if is_real_shift(s) {
            let y = dir(C64::new(s.re, 0.0))?;
            cols.push(y.column(0).map(|c| c.re));
            continue;
        }
        let partner = (k + 1..r)
            .filter(|&j| !used[j])
            .find(|&j| (shifts[j] - s.conj()).norm() <= 1e-8 * s.norm());
        let Some(j) = partner else {
            return Err(Error::ShiftPairing { r });
        };
        used[j] = true;
        let y = dir(s)?;
        cols.push(y.column(0).map(|c| c.re));
        cols.push(y.column(0).map(|c| c.im));
    }
    debug_assert_eq!(cols.len(), r);
    let m = DMatrix::from_columns(&cols);
    dim_check(m.nrows() == n, || "direction length".into())?;
    Ok(m)
}

fn sorted(mut s: Vec<C64>) -> Vec<C64> {
    s.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    s
}

/// Snaps a numerically conjugation-closed set onto an exactly closed one.
fn conjugate_closed(vals: &[C64]) -> Result<Vec<C64>> {
    let r = vals.len();
    let mut out = Vec::with_capacity(r);
    let mut used = vec![false; r];
    for k in 0..r {
        if used[k] {
            continue;
        }
        used[k] = true;
        let s = vals[k];
        let scale = s.norm().max(f64::MIN_POSITIVE);
        if s.im.abs() <= 1e-8 * scale {
            out.push(C64::new(s.re, 0.0));
            continue;
        }
        let partner = (0..r)
            .filter(|&j| !used[j])
            .map(|j| (j, (vals[j] - s.conj()).norm()))
            .filter(|&(_, d)| d <= 1e-6 * scale)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = partner else {
            return Err(Error::ShiftPairing { r });
        };
        used[j] = true;
        let mid = (s + vals[j].conj()) * 0.5;
        out.push(mid);
        out.push(mid.conj());
    }
    Ok(sorted(out))
}

/// Resolvent directions `(σI − T_r)⁻¹ b` and `(σI − T_rᵀ)⁻¹ cᵀ` in real Schur coordinates.
fn real_schur_resolvent(fom: &SchurRealization, sigma: C64, transposed: bool) -> Result<linalg::CMatrix> {
    let schur = &fom.schur;
    let mut col: Vec<C64> = if transposed {
        fom.schur_output().row(0).iter().map(|v| -v).collect()
    } else {
        fom.schur_input().column(0).iter().map(|v| -v).collect()
    };
    if transposed {
        linalg::solve_upper_transposed_shifted(&schur.t, -sigma, &mut col)?;
        schur.to_real_coordinates_conj(&mut col);
    } else {
        linalg::solve_upper_shifted(&schur.t, -sigma, &mut col)?;
        schur.to_real_coordinates(&mut col);
    }
    let n = col.len();
    Ok(linalg::CMatrix::from_vec(n, 1, col))
}

/// Reduced poles of the two-sided interpolant at `shifts`.
fn interpolant_poles(fom: &SchurRealization, shifts: &[C64]) -> Result<Vec<C64>> {
    let n = fom.state_dim();
    let y = real_directions(shifts, n, |s| real_schur_resolvent(fom, s, false))?;
    let z = real_directions(shifts, n, |s| real_schur_resolvent(fom, s, true))?;
    let qy = y.qr().q();
    let qz = z.qr().q();
    let singular = || Error::Singular("interpolation basis in IRKA".into(), 0.0);
    let qzt = qz.transpose();
    let er = &qzt * &qy;
    let ar = &qzt * (&fom.schur.tr * &qy);
    let m = er.lu().solve(&ar).filter(|m| m.iter().all(|x| x.is_finite())).ok_or_else(singular)?;
    Ok(m.complex_eigenvalues().iter().copied().collect())
}

/// IRKA on a SISO system given by its Schur realization. The two-sided interpolant drives the
/// shift iteration; only the orthonormalized `V` of the final shifts is returned.
pub fn irka_galerkin(fom: &SchurRealization, r: usize, opts: &IrkaOptions) -> Result<IrkaResult> {
    let n = fom.state_dim();
    if fom.inputs() != 1 || fom.outputs() != 1 {
        return Err(Error::InvalidArgument(format!(
            "IRKA needs a SISO system, got {} inputs and {} outputs",
            fom.inputs(),
            fom.outputs()
        )));
    }
    if r < 2 || r > n {
        return Err(Error::InvalidArgument(format!("reduced dimension {r} outside 2..={n}")));
    }
    let mut shifts: Vec<C64> = match &opts.init_shifts {
        Some(s) if s.len() == r => s.iter().map(|&x| C64::new(x.abs(), 0.0)).collect(),
        Some(s) => {
            return Err(Error::InvalidArgument(format!("{} initial shifts for r = {r}", s.len())))
        }
        None => linalg::logspace(1e-2, 1e6, r).into_iter().map(|x| C64::new(x, 0.0)).collect(),
    };
    shifts = sorted(shifts);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.maxiter {
        iterations += 1;
        let poles = interpolant_poles(fom, &shifts)?;
        let mirrored: Vec<C64> = poles.iter().map(|l| C64::new(l.re.abs(), -l.im)).collect();
        let next = conjugate_closed(&mirrored)?;
        let change = next
            .iter()
            .zip(&shifts)
            .map(|(a, b)| (a - b).norm() / b.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        shifts = next;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("IRKA did not converge in {} iterations at r = {r}", opts.maxiter);
    }
    let v = real_directions(&shifts, n, |s| real_schur_resolvent(fom, s, false))?;
    let v = &fom.schur.q * linalg::orthonormalize(&v, 1e-12);
    if v.ncols() < r {
        return Err(Error::RankExceeded { requested: r, available: v.ncols() });
    }
    Ok(IrkaResult { v, shifts, iterations, converged })
}

/// Square-root balancing of the standard-form realization.
#[derive(Clone, Debug)]
pub struct BalancedBasis {
    /// `Ṽ` with `W̃ᵀṼ = I`; columns ordered by decreasing Hankel value.
    pub v: DMatrix<f64>,
    /// Left basis for the standard form `(I, Ã, B̃, C)`.
    pub w: DMatrix<f64>,
    pub hankel: Vec<f64>,
}

fn gramian_factor(g: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v));
    let cut = max * f64::EPSILON * g.nrows() as f64;
    let keep: Vec<usize> = (0..g.nrows()).filter(|&k| eig.eigenvalues[k] > cut).collect();
    let mut out = DMatrix::zeros(g.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        out.set_column(c, &(eig.eigenvectors.column(k) * eig.eigenvalues[k].sqrt()));
    }
    out
}

/// Balanced bases of order up to `r_max`.
pub fn balanced_basis(fom: &SchurRealization, r_max: usize) -> Result<BalancedBasis> {
    let p = fom.controllability_gramian()?;
    let q = fom.observability_gramian()?;
    let rf = gramian_factor(&p);
    let lf = gramian_factor(&q);
    let svd = (lf.transpose() * &rf).svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let hankel: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = hankel.first().copied().unwrap_or(0.0);
    let available = hankel.iter().filter(|&&s| s > smax * 1e-15 && s > 0.0).count();
    if r_max > available {
        return Err(Error::RankExceeded { requested: r_max, available });
    }
    let u = svd.u.as_ref().ok_or_else(|| Error::EigenFailure("SVD left vectors".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::EigenFailure("SVD right vectors".into()))?;
    let n = fom.state_dim();
    let mut v = DMatrix::zeros(n, r_max);
    let mut w = DMatrix::zeros(n, r_max);
    for (c, &k) in order.iter().take(r_max).enumerate() {
        let scale = 1.0 / svd.singular_values[k].sqrt();
        v.set_column(c, &(&rf * vt.row(k).transpose() * scale));
        w.set_column(c, &(&lf * u.column(k) * scale));
    }
    Ok(BalancedBasis { v, w, hankel })
}

impl BalancedBasis {
    /// Order-`r` ROM `(I, W̃ᵀÃṼ, W̃ᵀB̃, CṼ, D)`.
    pub fn reduce(&self, fom: &SchurRealization, r: usize) -> Result<LTISystem> {
        if r > self.v.ncols() {
            return Err(Error::RankExceeded { requested: r, available: self.v.ncols() });
        }
        let v = self.v.columns(0, r).into_owned();
        let w = self.w.columns(0, r).into_owned();
        let wt = w.transpose();
        LTISystem::new(
            DMatrix::identity(r, r),
            &wt * (&fom.a * &v),
            &wt * &fom.b,
            &fom.c * &v,
            fom.d.clone(),
        )
    }

    /// Projection pair for the descriptor form `(E, A, B, C)`: `W = E⁻ᵀW̃`, so `WᵀEV = I`.
    pub fn descriptor_pair(&self, e: &DMatrix<f64>) -> Result<ProjectionPair> {
        let w = linalg::lu_solve(&e.transpose(), &self.w, "E^T")?;
        Ok(ProjectionPair { v: self.v.clone(), w, galerkin: false, biorthogonal: true })
    }
}

/// Balanced truncation to order `r`; returns the ROM and all Hankel singular values.
pub fn balanced_truncation(sys: &LTISystem, r: usize) -> Result<(LTISystem, Vec<f64>)> {
    let no_feedthrough = LTISystem { d: DMatrix::zeros(sys.outputs(), sys.inputs()), ..sys.clone() };
    let fom = SchurRealization::new(&no_feedthrough)?;
    if !fom.is_stable(0.0) {
        return Err(Error::Unstable(fom.spectral_abscissa()));
    }
    let bb = balanced_basis(&fom, r)?;
    let mut rom = bb.reduce(&fom, r)?;
    rom.d = sys.d.clone();
    Ok((rom, bb.hankel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{self, transfer, SchurRealization};
    use crate::models::{parametrize, Benchmark};
    use crate::pce::ChaosBasis;
    use crate::ph::{image_transform, DEFAULT_TOL};
    use crate::sg::{assemble_sg, io_restrict, IoMode, SgQuadrature};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0)).qr().q()
    }

    fn random_ph_lti(n: usize, seed: u64) -> (StandardPHSystem, LTISystem) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sys = crate::ph::tests::random_ph(n, 1, &mut rng);
        sys.s.fill(0.0);
        sys.n.fill(0.0);
        sys.p.fill(0.0);
        let std = image_transform(&sys).unwrap();
        let lti = std.to_lti();
        (std, lti)
    }

    fn cmax(m: &linalg::CMatrix) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    #[test]
    fn first_arnoldi_vector_is_normalized_solve() {
        let (_, lti) = random_ph_lti(6, 3);
        let v = arnoldi_basis(&lti, 1, 0.0).unwrap();
        let x = (-&lti.a).lu().solve(&lti.b).unwrap();
        let x = &x / x.norm();
        let sign = v[(0, 0)].signum() * x[(0, 0)].signum();
        assert!((v.column(0) - x.column(0) * sign).amax() < 1e-12);
        assert!(linalg::orthonormality_defect(&v) < 1e-12);
    }

    #[test]
    fn full_space_reproduces_transfer() {
        let (std, lti) = random_ph_lti(6, 4);
        let v = arnoldi_basis(&lti, 6, 0.0).unwrap();
        assert!(linalg::orthonormality_defect(&v) < 1e-12);
        let rom = galerkin_reduce_standard(&std, &v).unwrap().to_lti();
        for w in [0.1, 1.0, 10.0] {
            let s = C64::new(0.0, w);
            let d = transfer(&lti, s).unwrap() - transfer(&rom, s).unwrap();
            assert!(cmax(&d) < 1e-10 * cmax(&transfer(&lti, s).unwrap()));
        }
        let sr = SchurRealization::new(&lti).unwrap();
        let irka = irka_galerkin(&sr, 6, &IrkaOptions::default()).unwrap();
        let rom = galerkin_reduce_standard(&std, &irka.v).unwrap().to_lti();
        assert!(analysis::rel_h2_difference(&lti, &rom).unwrap() < 1e-7);
    }

    #[test]
    fn arnoldi_matches_moments() {
        // Moments at σ0: H(σ) = Σ m_k (σ − σ0)^k, compared through finite differences of order ≤ 2.
        let (std, lti) = random_ph_lti(8, 9);
        let sigma0 = 0.5;
        let v = arnoldi_basis(&lti, 3, sigma0).unwrap();
        let rom = galerkin_reduce_standard(&std, &v).unwrap().to_lti();
        let h = |sys: &LTISystem, s: f64| transfer(sys, C64::new(s, 0.0)).unwrap()[(0, 0)].re;
        let eps = 1e-3;
        for sys_pair in [(&lti, &rom)] {
            let (f, g) = sys_pair;
            let d0 = h(f, sigma0) - h(g, sigma0);
            let d1 = (h(f, sigma0 + eps) - h(f, sigma0 - eps)) - (h(g, sigma0 + eps) - h(g, sigma0 - eps));
            let scale = h(f, sigma0).abs();
            assert!(d0.abs() < 1e-10 * scale);
            assert!(d1.abs() / (2.0 * eps) < 1e-6 * scale);
        }
        // One-sided projection with 3 vectors matches 3 moments: the mismatch grows like ε³.
        let gap = |e: f64| (h(&lti, sigma0 + e) - h(&rom, sigma0 + e)).abs();
        assert!(gap(2e-2) / gap(1e-2) > 6.0);
    }

    #[test]
    fn arnoldi_deflates_gracefully() {
        let n = 4;
        let lti = LTISystem::new(
            DMatrix::identity(n, n),
            -DMatrix::identity(n, n),
            DMatrix::from_column_slice(n, 1, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, n, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!(arnoldi_basis(&lti, 3, 0.0).unwrap().ncols(), 1);
        let singular = LTISystem { a: DMatrix::zeros(n, n), ..lti.clone() };
        assert!(matches!(arnoldi_basis(&singular, 2, 0.0), Err(Error::Singular(..))));
    }

    #[test]
    fn irka_beats_arnoldi_on_seeded_system() {
        let (std, lti) = random_ph_lti(10, 21);
        let sr = SchurRealization::new(&lti).unwrap();
        let irka = irka_galerkin(&sr, 4, &IrkaOptions::default()).unwrap();
        let e_irka = analysis::rel_h2_difference(&lti, &galerkin_reduce_standard(&std, &irka.v).unwrap().to_lti()).unwrap();
        let arn = arnoldi_basis(&lti, 4, 0.0).unwrap();
        let e_arn = analysis::rel_h2_difference(&lti, &galerkin_reduce_standard(&std, &arn).unwrap().to_lti()).unwrap();
        assert!(e_irka <= e_arn, "IRKA {e_irka} vs Arnoldi {e_arn}");
        // conjugation-closed shifts
        for s in &irka.shifts {
            assert!(irka.shifts.iter().any(|t| (t - s.conj()).norm() <= 1e-8 * s.norm()));
        }
    }

    #[test]
    fn irka_rejects_bad_input() {
        let (_, lti) = random_ph_lti(5, 1);
        let sr = SchurRealization::new(&lti).unwrap();
        assert!(irka_galerkin(&sr, 1, &IrkaOptions::default()).is_err());
        let opts = IrkaOptions { init_shifts: Some(vec![1.0]), ..Default::default() };
        assert!(irka_galerkin(&sr, 3, &opts).is_err());
        let shifts = [C64::new(1.0, 1.0), C64::new(2.0, 0.0)];
        let err = real_directions(&shifts, 5, |s| sr.input_resolvent(s)).unwrap_err();
        assert!(matches!(err, Error::ShiftPairing { r: 2 }));
    }

    #[test]
    fn balanced_truncation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (_, lti) = random_ph_lti(8, 5);
        let lti = LTISystem { c: DMatrix::from_fn(2, 8, |_, _| rng.random_range(-1.0..1.0)), d: DMatrix::zeros(2, 1), ..lti };
        let (full, hankel) = balanced_truncation(&lti, 8).unwrap();
        assert!(hankel.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
        assert!(analysis::rel_h2_difference(&lti, &full).unwrap() < 1e-8);
        for r in [2, 4] {
            let (rom, hsv) = balanced_truncation(&lti, r).unwrap();
            let bound = 2.0 * hsv[r..].iter().sum::<f64>();
            for w in linalg::logspace(1e-3, 1e3, 30) {
                let s = C64::new(0.0, w);
                let d = transfer(&lti, s).unwrap() - transfer(&rom, s).unwrap();
                assert!(d.clone().svd(false, false).singular_values.max() <= bound * (1.0 + 1e-8));
            }
            assert!(analysis::stability(&rom, 0.0).unwrap());
        }
        // WᵀEV = I for the descriptor pair
        let sr = SchurRealization::new(&lti).unwrap();
        let bb = balanced_basis(&sr, 4).unwrap();
        let pair = bb.descriptor_pair(&lti.e).unwrap();
        let g = pair.w.transpose() * &lti.e * &pair.v;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-8);
        let unstable = LTISystem { a: -&lti.a, ..lti.clone() };
        assert!(matches!(balanced_truncation(&unstable, 2), Err(Error::Unstable(_))));
    }

    #[test]
    fn galerkin_on_sg_is_port_hamiltonian() {
        let sys = parametrize(Benchmark::Ladder { cells: 5 }, 10.0).unwrap().image_transformed();
        let basis = ChaosBasis::new(15, 2).unwrap();
        let sg = assemble_sg(&sys, &basis, SgQuadrature::Exact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_orthonormal(sg.dimension(), 12, &mut rng);
        let rom = galerkin_reduce(&sg, &v).unwrap();
        let rep = rom.validate(DEFAULT_TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        for _ in 0..20 {
            let vb: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lifted = rom.lift(&vb);
            let full = crate::sg::sg_hamiltonian(&sg, lifted.as_slice()).unwrap();
            let red = rom.hamiltonian(&vb).unwrap();
            assert!((full - red).abs() <= 1e-12 * full.abs());
        }
        let mut bad = v.clone();
        bad[(0, 0)] += 1e-3;
        assert!(matches!(galerkin_reduce(&sg, &bad), Err(Error::NotOrthonormal(_))));
        // Leading identity columns give the principal block subsystem.
        let eye = DMatrix::<f64>::identity(sg.dimension(), 5);
        let lead = galerkin_reduce(&sg, &eye).unwrap();
        let e = crate::sg::csc_to_dense(&sg.e);
        assert_eq!(lead.system.e, e.view((0, 0), (5, 5)).into_owned());
        let _ = io_restrict(&sg, IoMode::Simo);
    }

    #[test]
    fn petrov_consistency() {
        let (std, lti) = random_ph_lti(6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = random_orthonormal(6, 3, &mut rng);
        let gal = galerkin_reduce_standard(&std, &v).unwrap().to_lti();
        let pet = petrov_reduce(&lti, &v, &v).unwrap();
        assert!((gal.a - pet.a).amax() < 1e-12);
        assert!((gal.e - pet.e).amax() < 1e-12);
        let eye = DMatrix::identity(6, 6);
        let same = petrov_reduce(&lti, &eye, &eye).unwrap();
        assert_eq!(same, lti);
        let zero = DMatrix::zeros(6, 3);
        assert!(matches!(petrov_reduce(&lti, &v, &zero), Err(Error::Singular(..))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_is_linear(seed in 0u64..100_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 7;
            let v = random_orthonormal(n, 3, &mut rng);
            let w = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let proj = |m: &DMatrix<f64>| w.transpose() * m * &v;
            let lhs = proj(&(&a * alpha + &b * beta));
            let rhs = proj(&a) * alpha + proj(&b) * beta;
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }

        #[test]
        fn galerkin_preserves_structure(seed in 0u64..100_000, r in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = crate::ph::tests::random_ph(6, 2, &mut rng);
            let std = image_transform(&sys).unwrap();
            let v = random_orthonormal(6, r, &mut rng);
            let rom = galerkin_reduce_standard(&std, &v).unwrap();
            let rep = rom.validate(DEFAULT_TOL).unwrap();
            prop_assert!(rep.passed(), "{:?}", rep.failures());
            let vb: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let full = ph::standard_hamiltonian(&std, &rom.lift(&vb)).unwrap();
            let red = rom.hamiltonian(&vb).unwrap();
            prop_assert!((full - red).abs() <= 1e-12 * full.abs().max(1e-300));
            prop_assert!(analysis::SchurRealization::new(&rom.to_lti()).unwrap().spectral_abscissa() <= 1e-10);
        }
    }
}
