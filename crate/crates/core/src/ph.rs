//! Linear port-Hamiltonian systems `E ẋ = (J − R) Q x + (B − P) u`,
//! `y = (B + P)ᵀ Q x + (S + N) u`, their validation and equivalence
//! transformations to the `Q = I` form.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const RCOND_MIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PHSystem {
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

/// pH system with `Q = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardPHSystem {
    pub e: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

/// `E ẋ = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LTISystem {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

fn check_square(m: &DMatrix<f64>, n: usize, name: &str) -> Result<()> {
    dim_check(m.nrows() == n && m.ncols() == n, || {
        format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())
    })
}

fn check_shape(m: &DMatrix<f64>, r: usize, c: usize, name: &str) -> Result<()> {
    dim_check(m.nrows() == r && m.ncols() == c, || {
        format!("{name} is {}x{}, expected {r}x{c}", m.nrows(), m.ncols())
    })
}

impl PHSystem {
    /// System with `E = Q = I` and all other slots zero.
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            e: DMatrix::identity(n, n),
            j: DMatrix::zeros(n, n),
            r: DMatrix::zeros(n, n),
            q: DMatrix::identity(n, n),
            b: DMatrix::zeros(n, m),
            p: DMatrix::zeros(n, m),
            s: DMatrix::zeros(m, m),
            n: DMatrix::zeros(m, m),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn port_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (n, m) = (self.state_dim(), self.port_dim());
        check_square(&self.e, n, "E")?;
        check_square(&self.j, n, "J")?;
        check_square(&self.r, n, "R")?;
        check_square(&self.q, n, "Q")?;
        check_shape(&self.b, n, m, "B")?;
        check_shape(&self.p, n, m, "P")?;
        check_square(&self.s, m, "S")?;
        check_square(&self.n, m, "N")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: ModelJson = serde_json::from_str(text)?;
        raw.into_system()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelJson::from_system(self)).expect("plain numeric json")
    }
}

impl StandardPHSystem {
    pub fn state_dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn port_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn check_dims(&self) -> Result<()> {
        self.clone().into_general().check_dims()
    }

    pub fn into_general(self) -> PHSystem {
        let n = self.e.nrows();
        PHSystem {
            e: self.e,
            j: self.j,
            r: self.r,
            q: DMatrix::identity(n, n),
            b: self.b,
            p: self.p,
            s: self.s,
            n: self.n,
        }
    }

    pub fn to_lti(&self) -> LTISystem {
        LTISystem {
            e: self.e.clone(),
            a: &self.j - &self.r,
            b: &self.b - &self.p,
            c: (&self.b + &self.p).transpose(),
            d: &self.s + &self.n,
        }
    }
}

impl LTISystem {
    pub fn new(
        e: DMatrix<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let sys = Self { e, a, b, c, d };
        sys.check_dims()?;
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (n, p, q) = (self.state_dim(), self.inputs(), self.outputs());
        check_square(&self.a, n, "A")?;
        check_square(&self.e, n, "E")?;
        check_shape(&self.b, n, p, "B")?;
        check_shape(&self.c, q, n, "C")?;
        check_shape(&self.d, q, p, "D")
    }

    /// Same system with `E = I`.
    pub fn standard_form(&self) -> Result<LTISystem> {
        let lu = self.e.clone().lu();
        let a = lu.solve(&self.a).ok_or_else(|| Error::Singular("E".into(), 0.0))?;
        let b = lu.solve(&self.b).ok_or_else(|| Error::Singular("E".into(), 0.0))?;
        let n = self.state_dim();
        Ok(LTISystem { e: DMatrix::identity(n, n), a, b, c: self.c.clone(), d: self.d.clone() })
    }

    /// Keeps the listed input columns and output rows.
    pub fn select_io(&self, inputs: &[usize], outputs: &[usize]) -> LTISystem {
        LTISystem {
            e: self.e.clone(),
            a: self.a.clone(),
            b: self.b.select_columns(inputs),
            c: self.c.select_rows(outputs),
            d: self.d.select_rows(outputs).select_columns(inputs),
        }
    }

    pub fn to_json_string(&self) -> String {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        serde_json::to_string_pretty(&serde_json::json!({
            "n": self.state_dim(),
            "p": self.inputs(),
            "q": self.outputs(),
            "E": rows(&self.e),
            "A": rows(&self.a),
            "B": rows(&self.b),
            "C": rows(&self.c),
            "D": rows(&self.d),
        }))
        .expect("plain numeric json")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Size of the violation; zero when the invariant holds exactly.
    pub violation: f64,
    /// The raw quantity behind the check (defect, smallest eigenvalue, rcond).
    pub measured: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    fn skew(&mut self, name: &str, m: &DMatrix<f64>, tol: f64) {
        let defect = linalg::skew_defect(m);
        self.checks.push(InvariantCheck {
            name: name.into(),
            passed: defect <= tol * (1.0 + m.norm()),
            violation: defect,
            measured: defect,
        });
    }

    fn symmetric(&mut self, name: &str, m: &DMatrix<f64>, tol: f64) {
        let defect = linalg::asymmetry(m);
        self.checks.push(InvariantCheck {
            name: name.into(),
            passed: defect <= tol * (1.0 + m.norm()),
            violation: defect,
            measured: defect,
        });
    }

    /// Returns the ascending eigenvalues of the symmetric part for reuse.
    fn psd(&mut self, name: &str, m: &DMatrix<f64>, tol: f64) -> Vec<f64> {
        let ev = linalg::sym_eigenvalues(m);
        let lmin = ev.first().copied().unwrap_or(0.0);
        self.checks.push(InvariantCheck {
            name: name.into(),
            passed: lmin >= -tol * (1.0 + m.norm()),
            violation: (-lmin).max(0.0),
            measured: lmin,
        });
        ev
    }

    fn nonsingular(&mut self, name: &str, rcond: f64) {
        self.checks.push(InvariantCheck {
            name: name.into(),
            passed: rcond >= RCOND_MIN,
            violation: (RCOND_MIN - rcond).max(0.0),
            measured: rcond,
        });
    }
}

fn dissipation_block(r: &DMatrix<f64>, p: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (r.nrows(), s.nrows());
    let mut w = DMatrix::zeros(n + m, n + m);
    w.view_mut((0, 0), (n, n)).copy_from(r);
    w.view_mut((0, n), (n, m)).copy_from(p);
    w.view_mut((n, 0), (m, n)).copy_from(&p.transpose());
    w.view_mut((n, n), (m, m)).copy_from(s);
    w
}

pub fn validate_ph(sys: &PHSystem, tol: f64) -> Result<ValidationReport> {
    sys.check_dims()?;
    let mut rep = ValidationReport::default();
    rep.skew("J skew-symmetric", &sys.j, tol);
    rep.skew("N skew-symmetric", &sys.n, tol);
    let etq = sys.e.transpose() * &sys.q;
    rep.symmetric("E^T Q symmetric", &etq, tol);
    rep.psd("E^T Q positive semi-definite", &etq, tol);
    let qt = sys.q.transpose();
    let w = dissipation_block(&(&qt * &sys.r * &sys.q), &(&qt * &sys.p), &sys.s);
    rep.symmetric("W symmetric", &w, tol);
    rep.psd("W positive semi-definite", &w, tol);
    rep.nonsingular("E nonsingular", linalg::rcond(&sys.e));
    Ok(rep)
}

/// Validation for the `Q = I` form; `E` must be symmetric positive definite.
pub fn validate_standard(sys: &StandardPHSystem, tol: f64) -> Result<ValidationReport> {
    sys.check_dims()?;
    let mut rep = ValidationReport::default();
    rep.skew("J skew-symmetric", &sys.j, tol);
    rep.skew("N skew-symmetric", &sys.n, tol);
    rep.symmetric("E symmetric", &sys.e, tol);
    let ev = rep.psd("E positive semi-definite", &sys.e, tol);
    let w = dissipation_block(&sys.r, &sys.p, &sys.s);
    rep.symmetric("W symmetric", &w, tol);
    rep.psd("W positive semi-definite", &w, tol);
    let rcond = match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => lo / hi,
        (Some(_), Some(_)) => 0.0,
        _ => 1.0,
    };
    rep.nonsingular("E nonsingular", rcond);
    Ok(rep)
}

/// `½ xᵀ EᵀQ x`
pub fn hamiltonian(sys: &PHSystem, x: &DVector<f64>) -> Result<f64> {
    dim_check(x.len() == sys.state_dim(), || {
        format!("state of length {} for system of dimension {}", x.len(), sys.state_dim())
    })?;
    Ok(0.5 * (&sys.e * x).dot(&(&sys.q * x)))
}

/// `½ xᵀ E x`
pub fn standard_hamiltonian(sys: &StandardPHSystem, x: &DVector<f64>) -> Result<f64> {
    dim_check(x.len() == sys.state_dim(), || {
        format!("state of length {} for system of dimension {}", x.len(), sys.state_dim())
    })?;
    Ok(0.5 * x.dot(&(&sys.e * x)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decomposition {
    Cholesky,
    #[default]
    Sqrt,
}

impl FromStr for Decomposition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "sqrt" => Ok(Self::Sqrt),
            other => Err(Error::InvalidArgument(format!("unknown decomposition '{other}'"))),
        }
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.iter().enumerate().all(|(k, &v)| v == 0.0 || k % m.nrows() == k / m.nrows())
}

/// `T` with `Q = T Tᵀ`: lower triangular for Cholesky, symmetric for the square root.
pub fn symmetric_decomposition(q: &DMatrix<f64>, method: Decomposition) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    check_square(q, n, "Q")?;
    let asym = linalg::asymmetry(q);
    if asym > DEFAULT_TOL * (1.0 + q.norm()) {
        return Err(Error::NotPositiveDefinite(format!("Q is not symmetric (defect {asym:.3e})")));
    }
    if is_diagonal(q) {
        let d = q.diagonal();
        if let Some(bad) = d.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {bad}")));
        }
        return Ok(DMatrix::from_diagonal(&d.map(f64::sqrt)));
    }
    let qs = linalg::symmetrize(q);
    match method {
        Decomposition::Cholesky => qs
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky breakdown".into())),
        Decomposition::Sqrt => {
            let eig = qs.symmetric_eigen();
            let lmin = eig.eigenvalues.min();
            if !(lmin > 0.0) {
                return Err(Error::NotPositiveDefinite(format!("eigenvalue {lmin:.3e}")));
            }
            let v = &eig.eigenvectors;
            let root = v * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * v.transpose();
            Ok(linalg::symmetrize(&root))
        }
    }
}

/// Change of state `x̃ = Tᵀx` with `Q = TTᵀ`.
pub fn basis_transform(
    sys: &PHSystem,
    method: Decomposition,
) -> Result<(StandardPHSystem, DMatrix<f64>)> {
    sys.check_dims()?;
    let t = symmetric_decomposition(&sys.q, method)?;
    let tt = t.transpose();
    // Ẽ = Tᵀ E T⁻ᵀ, with E T⁻ᵀ obtained from T (E T⁻ᵀ)ᵀ = Eᵀ.
    let e_tinv_t = linalg::lu_solve(&t, &sys.e.transpose(), "T")?.transpose();
    let std = StandardPHSystem {
        e: &tt * e_tinv_t,
        j: &tt * &sys.j * &t,
        r: &tt * &sys.r * &t,
        b: &tt * &sys.b,
        p: &tt * &sys.p,
        s: sys.s.clone(),
        n: sys.n.clone(),
    };
    Ok((std, t))
}

/// Premultiplication of the dynamics by `Qᵀ`.
pub fn image_transform(sys: &PHSystem) -> Result<StandardPHSystem> {
    sys.check_dims()?;
    let rc = linalg::rcond(&sys.q);
    if rc < RCOND_MIN {
        return Err(Error::Singular("Q".into(), rc));
    }
    let qt = sys.q.transpose();
    Ok(StandardPHSystem {
        e: &qt * &sys.e,
        j: &qt * &sys.j * &sys.q,
        r: &qt * &sys.r * &sys.q,
        b: &qt * &sys.b,
        p: &qt * &sys.p,
        s: sys.s.clone(),
        n: sys.n.clone(),
    })
}

pub fn to_lti(sys: &PHSystem) -> LTISystem {
    LTISystem {
        e: sys.e.clone(),
        a: (&sys.j - &sys.r) * &sys.q,
        b: &sys.b - &sys.p,
        c: (&sys.b + &sys.p).transpose() * &sys.q,
        d: &sys.s + &sys.n,
    }
}

/// Residual `dH/dt − yᵀu` on a sampled trajectory; central differences at
/// interior samples with a Simpson average of the supply rate.
pub fn passivity_residual(
    times: &[f64],
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    outputs: &[DVector<f64>],
    sys: &PHSystem,
) -> Result<Vec<f64>> {
    let k = times.len();
    dim_check(states.len() == k && inputs.len() == k && outputs.len() == k, || {
        "trajectory, inputs and outputs must share the time grid".into()
    })?;
    let energy = states.iter().map(|x| hamiltonian(sys, x)).collect::<Result<Vec<_>>>()?;
    let supply: Vec<f64> = outputs.iter().zip(inputs).map(|(y, u)| y.dot(u)).collect();
    energy_balance_residual(times, &energy, &supply)
}

/// Residual `dH/dt − w` from sampled energy `H` and supply rate `w`.
pub fn energy_balance_residual(times: &[f64], energy: &[f64], supply: &[f64]) -> Result<Vec<f64>> {
    let k = times.len();
    if k < 2 {
        return Err(Error::InvalidArgument("passivity residual needs at least 2 samples".into()));
    }
    dim_check(energy.len() == k && supply.len() == k, || "samples of unequal length".into())?;
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time samples must be strictly increasing".into()));
    }
    if k == 2 {
        let h = times[1] - times[0];
        return Ok(vec![(energy[1] - energy[0]) / h - 0.5 * (supply[0] + supply[1])]);
    }
    Ok((1..k - 1)
        .map(|i| {
            let h0 = times[i] - times[i - 1];
            let h1 = times[i + 1] - times[i];
            let span = h0 + h1;
            let integral = span / 6.0
                * ((2.0 - h1 / h0) * supply[i - 1]
                    + span * span / (h0 * h1) * supply[i]
                    + (2.0 - h0 / h1) * supply[i + 1]);
            (energy[i + 1] - energy[i - 1]) / span - integral / span
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    n: usize,
    m: usize,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    j: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    s: Option<Vec<Vec<f64>>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    nn: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(
    rows: Option<Vec<Vec<f64>>>,
    r: usize,
    c: usize,
    name: &str,
    identity: bool,
) -> Result<DMatrix<f64>> {
    let Some(rows) = rows else {
        return Ok(if identity { DMatrix::identity(r, c) } else { DMatrix::zeros(r, c) });
    };
    dim_check(rows.len() == r && rows.iter().all(|row| row.len() == c), || {
        format!("{name} must be {r}x{c}")
    })?;
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelJson {
    fn into_system(self) -> Result<PHSystem> {
        let (n, m) = (self.n, self.m);
        let sys = PHSystem {
            e: rows_to_matrix(self.e, n, n, "E", true)?,
            j: rows_to_matrix(self.j, n, n, "J", false)?,
            r: rows_to_matrix(self.r, n, n, "R", false)?,
            q: rows_to_matrix(self.q, n, n, "Q", true)?,
            b: rows_to_matrix(self.b, n, m, "B", false)?,
            p: rows_to_matrix(self.p, n, m, "P", false)?,
            s: rows_to_matrix(self.s, m, m, "S", false)?,
            n: rows_to_matrix(self.nn, m, m, "N", false)?,
        };
        Ok(sys)
    }

    fn from_system(sys: &PHSystem) -> Self {
        Self {
            n: sys.state_dim(),
            m: sys.port_dim(),
            e: Some(matrix_to_rows(&sys.e)),
            j: Some(matrix_to_rows(&sys.j)),
            r: Some(matrix_to_rows(&sys.r)),
            q: Some(matrix_to_rows(&sys.q)),
            b: Some(matrix_to_rows(&sys.b)),
            p: Some(matrix_to_rows(&sys.p)),
            s: Some(matrix_to_rows(&sys.s)),
            nn: Some(matrix_to_rows(&sys.n)),
        }
    }
}
