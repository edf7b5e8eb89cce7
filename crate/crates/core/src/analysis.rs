//! Transfer functions, stability, H2 norms and Bode data.
//!
//! Everything cubic goes through one complex Schur form of `Ã = E⁻¹A` per
//! system, reused for Gramians, resolvents and cross inner products.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, LU};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_check, Error, Result};
use crate::linalg::{self, check_dense_dim, CMatrix, ComplexSchur, C64};
use crate::ph::LTISystem;

/// `H(σ) = C(σE − A)⁻¹B + D` by a dense complex LU.
pub fn transfer(sys: &LTISystem, sigma: C64) -> Result<CMatrix> {
    sys.check_dims()?;
    let pencil = linalg::to_complex(&sys.e) * sigma - linalg::to_complex(&sys.a);
    let x = LU::new(pencil)
        .solve(&linalg::to_complex(&sys.b))
        .ok_or_else(|| Error::Singular(format!("sE - A at s = {sigma}"), 0.0))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("sE - A at s = {sigma}"), 0.0));
    }
    Ok(linalg::to_complex(&sys.c) * x + linalg::to_complex(&sys.d))
}

/// Standard-form system `(Ã, B̃, C, D)` with its complex Schur form.
pub struct SchurRealization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub schur: ComplexSchur,
    bs: CMatrix,
    cs: CMatrix,
    ctrl: OnceLock<CMatrix>,
    obs: OnceLock<CMatrix>,
}

impl std::fmt::Debug for SchurRealization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SchurRealization")
            .field("n", &self.state_dim())
            .field("inputs", &self.inputs())
            .field("outputs", &self.outputs())
            .finish()
    }
}

impl SchurRealization {
    pub fn new(sys: &LTISystem) -> Result<Self> {
        sys.check_dims()?;
        check_dense_dim(sys.state_dim())?;
        let (a, b) = if is_identity(&sys.e) {
            (sys.a.clone(), sys.b.clone())
        } else {
            let lu = sys.e.clone().lu();
            let singular = || Error::Singular("E".into(), 0.0);
            let a = lu.solve(&sys.a).ok_or_else(singular)?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(singular());
            }
            (a, lu.solve(&sys.b).ok_or_else(singular)?)
        };
        let schur = ComplexSchur::of_real(a.clone())?;
        let bs = schur.u.adjoint() * linalg::to_complex(&b);
        let cs = linalg::rcmul(&sys.c, &schur.u);
        Ok(Self {
            a,
            b,
            c: sys.c.clone(),
            d: sys.d.clone(),
            schur,
            bs,
            cs,
            ctrl: OnceLock::new(),
            obs: OnceLock::new(),
        })
    }

    /// Same state dynamics restricted to the listed inputs and outputs; reuses the Schur form.
    pub fn select_io(&self, inputs: &[usize], outputs: &[usize]) -> Result<SchurRealization> {
        let bad = inputs.iter().any(|&i| i >= self.inputs()) || outputs.iter().any(|&o| o >= self.outputs());
        dim_check(!bad, || "input or output index out of range".into())?;
        let b = self.b.select_columns(inputs);
        let c = self.c.select_rows(outputs);
        Ok(Self {
            a: self.a.clone(),
            bs: self.bs.select_columns(inputs),
            cs: self.cs.select_rows(outputs),
            d: self.d.select_rows(outputs).select_columns(inputs),
            schur: self.schur.clone(),
            b,
            c,
            ctrl: OnceLock::new(),
            obs: OnceLock::new(),
        })
    }

    /// `(I, Ã, B̃, C, D)`
    pub fn standard_system(&self) -> LTISystem {
        let n = self.state_dim();
        LTISystem {
            e: DMatrix::identity(n, n),
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// `Uᴴ B̃`
    pub fn schur_input(&self) -> &CMatrix {
        &self.bs
    }

    /// `C U`
    pub fn schur_output(&self) -> &CMatrix {
        &self.cs
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.schur.eigenvalues()
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues().iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self, margin: f64) -> bool {
        self.state_dim() == 0 || self.spectral_abscissa() < -margin
    }

    fn require_h2(&self) -> Result<()> {
        let dmax = linalg::max_abs(&self.d);
        if dmax != 0.0 {
            return Err(Error::NonzeroFeedthrough(dmax));
        }
        if !self.is_stable(0.0) {
            return Err(Error::Unstable(self.spectral_abscissa()));
        }
        Ok(())
    }

    /// `X` with `T X + X Tᴴ + B_s B_sᴴ = 0`; the controllability Gramian is `U X Uᴴ`.
    pub fn controllability_schur(&self) -> Result<&CMatrix> {
        if let Some(x) = self.ctrl.get() {
            return Ok(x);
        }
        self.require_h2()?;
        let rhs = -linalg::cmul(&self.bs, &self.bs.adjoint());
        let x = linalg::sylvester_triangular(&self.schur.t, &self.schur.t, rhs)?;
        Ok(self.ctrl.get_or_init(|| x))
    }

    /// `Z` with `Tᴴ Z + Z T + C_sᴴ C_s = 0`; the observability Gramian is `U Z Uᴴ`.
    pub fn observability_schur(&self) -> Result<&CMatrix> {
        if let Some(z) = self.obs.get() {
            return Ok(z);
        }
        self.require_h2()?;
        // Reversing the index order turns Tᴴ into an upper-triangular matrix.
        let n = self.state_dim();
        let rev = |m: &CMatrix| CMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)]);
        let tf = rev(&self.schur.t.adjoint());
        let rhs = -rev(&linalg::cmul(&self.cs.adjoint(), &self.cs));
        let zf = linalg::sylvester_triangular(&tf, &tf, rhs)?;
        Ok(self.obs.get_or_init(|| rev(&zf)))
    }

    fn real_gramian(&self, x: &CMatrix) -> DMatrix<f64> {
        let u = &self.schur.u;
        let g = linalg::cmul(&linalg::cmul(u, x), &u.adjoint());
        linalg::symmetrize(&g.map(|v| v.re))
    }

    pub fn controllability_gramian(&self) -> Result<DMatrix<f64>> {
        Ok(self.real_gramian(self.controllability_schur()?))
    }

    pub fn observability_gramian(&self) -> Result<DMatrix<f64>> {
        Ok(self.real_gramian(self.observability_schur()?))
    }

    pub fn h2_norm(&self) -> Result<f64> {
        if self.state_dim() == 0 {
            self.require_h2()?;
            return Ok(0.0);
        }
        let x = self.controllability_schur()?;
        let v = linalg::cmul(&linalg::cmul(&self.cs, x), &self.cs.adjoint()).trace().re;
        Ok(v.max(0.0).sqrt())
    }

    /// Same value through the observability Gramian.
    pub fn h2_norm_observability(&self) -> Result<f64> {
        if self.state_dim() == 0 {
            self.require_h2()?;
            return Ok(0.0);
        }
        let z = self.observability_schur()?;
        let v = linalg::cmul(&linalg::cmul(&self.bs.adjoint(), z), &self.bs).trace().re;
        Ok(v.max(0.0).sqrt())
    }

    /// `⟨H_self, H_other⟩` in H2.
    pub fn h2_inner(&self, other: &SchurRealization) -> Result<f64> {
        dim_check(self.inputs() == other.inputs() && self.outputs() == other.outputs(), || {
            format!(
                "systems with {}x{} and {}x{} transfer matrices",
                self.outputs(),
                self.inputs(),
                other.outputs(),
                other.inputs()
            )
        })?;
        self.require_h2()?;
        other.require_h2()?;
        if self.state_dim() == 0 || other.state_dim() == 0 {
            return Ok(0.0);
        }
        let rhs = -linalg::cmul(&self.bs, &other.bs.adjoint());
        let y = linalg::sylvester_triangular(&self.schur.t, &other.schur.t, rhs)?;
        Ok(linalg::cmul(&linalg::cmul(&self.cs, &y), &other.cs.adjoint()).trace().re)
    }

    /// `‖H_self − H_other‖` from the blocks of the block-diagonal difference realization.
    pub fn h2_distance(&self, other: &SchurRealization) -> Result<f64> {
        let n00 = self.h2_norm()?.powi(2);
        let n11 = other.h2_norm()?.powi(2);
        let n01 = self.h2_inner(other)?;
        Ok((n00 - 2.0 * n01 + n11).max(0.0).sqrt())
    }

    /// `(σI − Ã)⁻¹ B̃`
    pub fn input_resolvent(&self, sigma: C64) -> Result<CMatrix> {
        let mut y = -self.bs.clone();
        for mut col in y.column_iter_mut() {
            linalg::solve_upper_shifted(&self.schur.t, -sigma, col.as_mut_slice())?;
        }
        Ok(linalg::cmul(&self.schur.u, &y))
    }

    /// `(σI − Ã)⁻ᵀ Cᵀ`
    pub fn output_resolvent(&self, sigma: C64) -> Result<CMatrix> {
        let mut y = -self.cs.transpose();
        for mut col in y.column_iter_mut() {
            linalg::solve_upper_transposed_shifted(&self.schur.t, -sigma, col.as_mut_slice())?;
        }
        Ok(linalg::cmul(&self.schur.u.map(|v| v.conj()), &y))
    }

    pub fn transfer(&self, sigma: C64) -> Result<CMatrix> {
        let mut y = -self.bs.clone();
        for mut col in y.column_iter_mut() {
            linalg::solve_upper_shifted(&self.schur.t, -sigma, col.as_mut_slice())?;
        }
        Ok(linalg::cmul(&self.cs, &y) + linalg::to_complex(&self.d))
    }
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.iter().enumerate().all(|(k, &v)| v == if k % (m.nrows() + 1) == 0 { 1.0 } else { 0.0 })
}

pub fn h2_norm(sys: &LTISystem) -> Result<f64> {
    SchurRealization::new(sys)?.h2_norm()
}

pub fn stability(sys: &LTISystem, margin: f64) -> Result<bool> {
    Ok(SchurRealization::new(sys)?.is_stable(margin))
}

/// `‖H0 − Hi‖ / ‖H0‖`
pub fn rel_h2_difference(h0: &LTISystem, hi: &LTISystem) -> Result<f64> {
    let a = SchurRealization::new(h0)?;
    let b = SchurRealization::new(hi)?;
    rel_h2_difference_schur(&a, &b)
}

pub fn rel_h2_difference_schur(h0: &SchurRealization, hi: &SchurRealization) -> Result<f64> {
    let norm = h0.h2_norm()?;
    if norm == 0.0 {
        return Err(Error::InvalidArgument("reference system has zero H2 norm".into()));
    }
    Ok(h0.h2_distance(hi)? / norm)
}

/// Relative H2 error of a reduced model against the full model.
pub fn mor_rel_error(fom: &SchurRealization, rom: &LTISystem) -> Result<f64> {
    let r = SchurRealization::new(rom)?;
    rel_h2_difference_schur(fom, &r)
}

/// Bode data on a logarithmic grid.
#[derive(Clone, Debug, Serialize)]
pub struct FrequencyResponse {
    pub omega: Vec<f64>,
    pub outputs: usize,
    pub inputs: usize,
    /// `values[k][(i, j)]` is `H_ij(iω_k)`.
    #[serde(skip)]
    pub values: Vec<CMatrix>,
}

impl FrequencyResponse {
    /// `20 log10 |H_ij|` per frequency.
    pub fn magnitude_db(&self, i: usize, j: usize) -> Vec<f64> {
        self.values.iter().map(|h| 20.0 * h[(i, j)].norm().log10()).collect()
    }

    /// Unwrapped phase of `H_ij` in degrees.
    pub fn phase_deg(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut prev: Option<f64> = None;
        let mut offset = 0.0;
        for h in &self.values {
            let raw = h[(i, j)].arg();
            if let Some(p) = prev {
                let mut jump = raw + offset - p;
                while jump > PI {
                    offset -= 2.0 * PI;
                    jump -= 2.0 * PI;
                }
                while jump < -PI {
                    offset += 2.0 * PI;
                    jump += 2.0 * PI;
                }
            }
            let v = raw + offset;
            prev = Some(v);
            out.push(v.to_degrees());
        }
        out
    }
}

pub const BODE_POINTS: usize = 400;
pub const BODE_OMEGA: (f64, f64) = (1e0, 1e7);

pub fn bode(sys: &LTISystem, omega_min: f64, omega_max: f64, points: usize) -> Result<FrequencyResponse> {
    if points < 2 || !(omega_min > 0.0 && omega_max > omega_min) {
        return Err(Error::InvalidArgument(format!(
            "Bode grid needs points >= 2 and 0 < omega_min < omega_max, got {points} on [{omega_min}, {omega_max}]"
        )));
    }
    let omega = linalg::logspace(omega_min, omega_max, points);
    let values = if sys.state_dim() <= 64 {
        omega
            .par_iter()
            .map(|&w| transfer(sys, C64::new(0.0, w)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let sr = SchurRealization::new(sys)?;
        omega
            .par_iter()
            .map(|&w| sr.transfer(C64::new(0.0, w)))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(FrequencyResponse { omega, outputs: sys.outputs(), inputs: sys.inputs(), values })
}
