//! Stochastic Galerkin projection `𝒢_s` and the SG system.
//!
//! Block `(i, j)` of `𝒢_s(A)` is `E[A(μ) Φ_i(μ) Φ_j(μ)]` (mode-major layout).
//! Each matrix entry is integrated only over the parameters it depends on;
//! the remaining directions contribute `δ` factors by orthonormality.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_check, Error, Result};
use crate::parametric::{Degree, ParametricPHSystem, ParametricStandardPH, StandardDegrees};
use crate::pce::{gauss_legendre, normalized_legendre, ChaosBasis, ParameterBox, QuadratureRule};
use crate::ph::{validate_standard, LTISystem, StandardPHSystem, ValidationReport};

pub const DROPTOL: f64 = 1e-14;

/// Quadrature used for SG assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SgQuadrature {
    /// Gauss rules just large enough for the declared polynomial degrees.
    Exact,
    /// Fixed number of Gauss–Legendre points per parameter.
    Gauss(usize),
}

impl SgQuadrature {
    /// Exact when every slot is polynomial, else seven points per dimension.
    pub fn auto(degrees: &StandardDegrees) -> Self {
        if degrees.all_polynomial() {
            SgQuadrature::Exact
        } else {
            SgQuadrature::Gauss(7)
        }
    }

    fn points(self, degree: Degree, d: usize, slot: &'static str) -> Result<usize> {
        let needed = match degree {
            Degree::Poly(p) => Some((p as usize + 2 * d + 1).div_ceil(2)),
            Degree::NonPolynomial => None,
        };
        match (self, needed) {
            (SgQuadrature::Exact, Some(k)) => Ok(k.max(1)),
            (SgQuadrature::Exact, None) => Err(Error::NonPolynomial(slot)),
            (SgQuadrature::Gauss(p), Some(k)) if p < k => {
                Err(Error::InsufficientExactness { slot, needed: k, got: p })
            }
            (SgQuadrature::Gauss(0), _) => Err(Error::InvalidArgument("zero quadrature points".into())),
            (SgQuadrature::Gauss(p), _) => Ok(p),
        }
    }
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Interior probe points at irrational offsets, used to detect which
/// parameters each entry depends on.
fn probe_points(pbox: &ParameterBox) -> Vec<(Vec<f64>, Vec<Vec<f64>>)> {
    let q = pbox.dim();
    let at = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..q)
            .map(|j| {
                let (lo, hi) = pbox.interval(j);
                lo + (hi - lo) * f(j)
            })
            .collect()
    };
    let offsets = [(0.754_877_666_2, 0.0), (0.569_840_291_0, 0.3)];
    offsets
        .iter()
        .map(|&(g, shift)| {
            let base_f = move |j: usize| 0.15 + 0.7 * frac(shift + g * (j + 1) as f64);
            let base = at(&base_f);
            let perturbed = (0..q)
                .map(|j| {
                    let mut p = base.clone();
                    let (lo, hi) = pbox.interval(j);
                    p[j] = lo + (hi - lo) * (0.15 + 0.7 * frac(base_f(j) + 0.381_966));
                    p
                })
                .collect();
            (base, perturbed)
        })
        .collect()
}

type Field<'a> = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Sync + 'a;

/// Entries grouped by the set of parameters they depend on; identically zero entries are omitted.
fn dependency_groups(
    field: &Field<'_>,
    pbox: &ParameterBox,
    shape: (usize, usize),
) -> Result<BTreeMap<Vec<usize>, Vec<(usize, usize)>>> {
    let (nr, nc) = shape;
    let q = pbox.dim();
    let mut deps = vec![vec![false; q]; nr * nc];
    let mut nonzero = vec![false; nr * nc];
    for (base, perturbed) in probe_points(pbox) {
        let fb = field(&base)?;
        dim_check(fb.shape() == shape, || {
            format!("field returned {:?}, expected {:?}", fb.shape(), shape)
        })?;
        for (k, v) in fb.iter().enumerate() {
            nonzero[k] |= *v != 0.0;
        }
        for (j, p) in perturbed.iter().enumerate() {
            let fp = field(p)?;
            for (k, (a, b)) in fp.iter().zip(fb.iter()).enumerate() {
                if a != b {
                    deps[k][j] = true;
                    nonzero[k] = true;
                }
            }
        }
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
    for col in 0..nc {
        for row in 0..nr {
            let k = col * nr + row;
            if nonzero[k] {
                let set: Vec<usize> = (0..q).filter(|&j| deps[k][j]).collect();
                groups.entry(set).or_default().push((row, col));
            }
        }
    }
    Ok(groups)
}

/// Triplets of one dependency group.
fn project_group(
    field: &Field<'_>,
    basis: &ChaosBasis,
    pbox: &ParameterBox,
    dims: &[usize],
    entries: &[(usize, usize)],
    points: usize,
    shape: (usize, usize),
) -> Result<Vec<(usize, usize, f64)>> {
    let (nr, nc) = shape;
    let q = basis.q();
    let dl = dims.len();
    let (x1, w1) = gauss_legendre(points);
    let total = points.pow(dl as u32);

    // Distinct restrictions of the multi-indices to `dims`, and the classes of
    // basis functions agreeing outside `dims`.
    let mut pattern_of = Vec::with_capacity(basis.len());
    let mut patterns: Vec<Vec<u32>> = Vec::new();
    let mut pattern_ids: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
    let mut classes: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    for (i, alpha) in basis.indices().iter().enumerate() {
        let beta: Vec<u32> = dims.iter().map(|&t| alpha[t]).collect();
        let id = *pattern_ids.entry(beta.clone()).or_insert_with(|| {
            patterns.push(beta);
            patterns.len() - 1
        });
        pattern_of.push(id);
        let key: Vec<u32> = (0..q).filter(|t| !dims.contains(t)).map(|t| alpha[t]).collect();
        classes.entry(key).or_default().push(i);
    }
    let np = patterns.len();
    let ne = entries.len();

    let center = pbox.center();
    let mut moments = vec![0.0; np * np * ne];
    let mut counter = vec![0usize; dl];
    let mut mu = center.clone();
    let mut psi = vec![0.0; np];
    let mut xi = vec![0.0; dl];
    for _ in 0..total {
        let mut w = 1.0;
        for (slot, &t) in dims.iter().enumerate() {
            xi[slot] = x1[counter[slot]];
            w *= w1[counter[slot]];
            let (lo, hi) = pbox.interval(t);
            mu[t] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi[slot];
        }
        for (p, beta) in patterns.iter().enumerate() {
            psi[p] = beta
                .iter()
                .zip(&xi)
                .map(|(&b, &x)| if b == 0 { 1.0 } else { normalized_legendre(b as usize, x) })
                .product();
        }
        let a = field(&mu)?;
        for (e, &(row, col)) in entries.iter().enumerate() {
            let wa = w * a[(row, col)];
            if wa == 0.0 {
                continue;
            }
            for p1 in 0..np {
                let f1 = wa * psi[p1];
                let base = (p1 * np) * ne + e;
                for p2 in 0..np {
                    moments[base + p2 * ne] += f1 * psi[p2];
                }
            }
        }
        for slot in (0..dl).rev() {
            counter[slot] += 1;
            if counter[slot] < points {
                break;
            }
            counter[slot] = 0;
        }
    }

    let mut out = Vec::new();
    for members in classes.values() {
        for &i in members {
            for &j in members {
                let (pi, pj) = (pattern_of[i], pattern_of[j]);
                for (e, &(row, col)) in entries.iter().enumerate() {
                    let v = moments[(pi * np + pj) * ne + e];
                    if v != 0.0 {
                        out.push((i * nr + row, j * nc + col, v));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn triplets_to_csc(nrows: usize, ncols: usize, triplets: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    let max = triplets.iter().fold(0.0_f64, |a, t| a.max(t.2.abs()));
    let cut = DROPTOL * max;
    let mut coo = CooMatrix::new(nrows, ncols);
    for (r, c, v) in triplets {
        if v.abs() > cut {
            coo.push(r, c, v);
        }
    }
    let csc = CscMatrix::from(&coo);
    // Duplicates were summed; drop anything that cancelled below the cut.
    let mut out = CooMatrix::new(nrows, ncols);
    let max = csc.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for (r, c, v) in csc.triplet_iter() {
        if v.abs() > DROPTOL * max {
            out.push(r, c, *v);
        }
    }
    CscMatrix::from(&out)
}

/// `𝒢_s(A)` for a parametric `nr × nc` matrix function with declared degree.
pub fn sg_project(
    field: &Field<'_>,
    shape: (usize, usize),
    degree: Degree,
    basis: &ChaosBasis,
    pbox: &ParameterBox,
    quad: SgQuadrature,
    slot: &'static str,
) -> Result<CscMatrix<f64>> {
    dim_check(basis.q() == pbox.dim(), || {
        format!("basis in {} variables, box of dimension {}", basis.q(), pbox.dim())
    })?;
    let points = quad.points(degree, basis.degree(), slot)?;
    let groups = dependency_groups(field, pbox, shape)?;
    let groups: Vec<(Vec<usize>, Vec<(usize, usize)>)> = groups.into_iter().collect();
    let parts: Vec<Vec<(usize, usize, f64)>> = groups
        .par_iter()
        .map(|(dims, entries)| project_group(field, basis, pbox, dims, entries, points, shape))
        .collect::<Result<_>>()?;
    let s = basis.len();
    Ok(triplets_to_csc(shape.0 * s, shape.1 * s, parts.into_iter().flatten().collect()))
}

/// `𝒢_s(A)` evaluated literally as `Σ_nodes w A(μ) ⊗ Φ(μ)Φ(μ)ᵀ` over `rule`.
pub fn sg_project_rule(
    field: &Field<'_>,
    shape: (usize, usize),
    basis: &ChaosBasis,
    rule: &QuadratureRule,
) -> Result<CscMatrix<f64>> {
    let pbox = rule.parameter_box();
    dim_check(basis.q() == pbox.dim(), || "rule and basis dimensions differ".into())?;
    let (nr, nc) = shape;
    let s = basis.len();
    let mut acc = DMatrix::<f64>::zeros(nr * s, nc * s);
    for (mu, w) in rule.iter() {
        let a = field(mu)?;
        dim_check(a.shape() == shape, || "field returned wrong shape".into())?;
        let phi = basis.eval(pbox, mu)?;
        for i in 0..s {
            for j in 0..s {
                let f = w * phi[i] * phi[j];
                if f != 0.0 {
                    let mut blk = acc.view_mut((i * nr, j * nc), (nr, nc));
                    blk += &a * f;
                }
            }
        }
    }
    let triplets = (0..nc * s)
        .flat_map(|c| (0..nr * s).map(move |r| (r, c)))
        .map(|(r, c)| (r, c, acc[(r, c)]))
        .filter(|t| t.2 != 0.0)
        .collect();
    Ok(triplets_to_csc(nr * s, nc * s, triplets))
}

pub fn csc_to_dense(m: &CscMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from(m)
}

pub fn csc_matvec(m: &CscMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    for (j, col) in m.col_iter().enumerate() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (&i, &v) in col.row_indices().iter().zip(col.values()) {
            y[i] += v * xj;
        }
    }
    y
}

pub fn nnz_ratio(m: &CscMatrix<f64>) -> f64 {
    m.nnz() as f64 / (m.nrows() as f64 * m.ncols() as f64)
}

/// SG system with `Q̂ = I`.
#[derive(Clone, Debug)]
pub struct SGSystem {
    pub e: CscMatrix<f64>,
    pub j: CscMatrix<f64>,
    pub r: CscMatrix<f64>,
    pub b: CscMatrix<f64>,
    pub p: CscMatrix<f64>,
    pub s: CscMatrix<f64>,
    pub n: CscMatrix<f64>,
    pub basis: Arc<ChaosBasis>,
    pub base_states: usize,
    pub base_ports: usize,
    pub quadrature: SgQuadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IoMode {
    Mimo,
    Simo,
    Siso,
}

impl FromStr for IoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mimo" => Ok(IoMode::Mimo),
            "simo" => Ok(IoMode::Simo),
            "siso" => Ok(IoMode::Siso),
            other => Err(Error::InvalidArgument(format!("unknown io mode '{other}'"))),
        }
    }
}

impl IoMode {
    pub fn label(&self) -> &'static str {
        match self {
            IoMode::Mimo => "mimo",
            IoMode::Simo => "simo",
            IoMode::Siso => "siso",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SgMetadata {
    pub modes: usize,
    pub degree: usize,
    pub parameters: usize,
    pub base_states: usize,
    pub base_ports: usize,
    pub dimension: usize,
    pub droptol: f64,
    pub quadrature: SgQuadrature,
    pub nnz: BTreeMap<String, usize>,
    pub nnz_ratio: BTreeMap<String, f64>,
}

impl SGSystem {
    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn dimension(&self) -> usize {
        self.e.nrows()
    }

    pub fn ports(&self) -> usize {
        self.b.ncols()
    }

    pub fn named_matrices(&self) -> [(&'static str, &CscMatrix<f64>); 7] {
        [
            ("E", &self.e),
            ("J", &self.j),
            ("R", &self.r),
            ("B", &self.b),
            ("P", &self.p),
            ("S", &self.s),
            ("N", &self.n),
        ]
    }

    pub fn to_standard(&self) -> StandardPHSystem {
        StandardPHSystem {
            e: csc_to_dense(&self.e),
            j: csc_to_dense(&self.j),
            r: csc_to_dense(&self.r),
            b: csc_to_dense(&self.b),
            p: csc_to_dense(&self.p),
            s: csc_to_dense(&self.s),
            n: csc_to_dense(&self.n),
        }
    }

    /// MIMO realization `(Ê, Ĵ − R̂, B̂ − P̂, (B̂ + P̂)ᵀ, Ŝ + N̂)`.
    pub fn to_lti(&self) -> LTISystem {
        self.to_standard().to_lti()
    }

    pub fn validate(&self, tol: f64) -> Result<ValidationReport> {
        validate_standard(&self.to_standard(), tol)
    }

    pub fn metadata(&self) -> SgMetadata {
        let mut nnz = BTreeMap::new();
        let mut ratio = BTreeMap::new();
        for (name, m) in self.named_matrices() {
            nnz.insert(name.to_string(), m.nnz());
            ratio.insert(name.to_string(), nnz_ratio(m));
        }
        SgMetadata {
            modes: self.modes(),
            degree: self.basis.degree(),
            parameters: self.basis.q(),
            base_states: self.base_states,
            base_ports: self.base_ports,
            dimension: self.dimension(),
            droptol: DROPTOL,
            quadrature: self.quadrature,
            nnz,
            nnz_ratio: ratio,
        }
    }
}

pub fn assemble_sg(
    sys: &ParametricStandardPH,
    basis: &ChaosBasis,
    quad: SgQuadrature,
) -> Result<SGSystem> {
    let pbox = sys.parameter_box();
    let (n, m) = (sys.state_dim(), sys.port_dim());
    let deg = *sys.degrees();
    type Pick = fn(StandardPHSystem) -> DMatrix<f64>;
    let project = |pick: Pick, shape: (usize, usize), degree: Degree, slot: &'static str| {
        let field = move |mu: &[f64]| sys.eval(mu).map(pick);
        sg_project(&field, shape, degree, basis, pbox, quad, slot)
    };
    Ok(SGSystem {
        e: project(|s| s.e, (n, n), deg.e, "E")?,
        j: project(|s| s.j, (n, n), deg.j, "J")?,
        r: project(|s| s.r, (n, n), deg.r, "R")?,
        b: project(|s| s.b, (n, m), deg.b, "B")?,
        p: project(|s| s.p, (n, m), deg.p, "P")?,
        s: project(|s| s.s, (m, m), deg.s, "S")?,
        n: project(|s| s.n, (m, m), deg.n, "N")?,
        basis: Arc::new(basis.clone()),
        base_states: n,
        base_ports: m,
        quadrature: quad,
    })
}

/// Galerkin projection of the LTI matrices of a general-`Q` system; not structure-preserving.
pub fn assemble_sg_general(
    sys: &ParametricPHSystem,
    basis: &ChaosBasis,
    quad: SgQuadrature,
) -> Result<LTISystem> {
    let pbox = sys.parameter_box();
    let (n, m) = (sys.state_dim(), sys.port_dim());
    let d = *sys.degrees();
    let quad_for = |deg: Degree| match (quad, deg) {
        (SgQuadrature::Exact, Degree::NonPolynomial) => SgQuadrature::Gauss(7),
        _ => quad,
    };
    let dense = |f: &Field<'_>, shape, deg: Degree, slot| -> Result<DMatrix<f64>> {
        Ok(csc_to_dense(&sg_project(f, shape, deg, basis, pbox, quad_for(deg), slot)?))
    };
    let e = dense(&|mu| Ok(sys.eval(mu)?.e), (n, n), d.e, "E")?;
    let a = dense(
        &|mu| {
            let s = sys.eval(mu)?;
            Ok((&s.j - &s.r) * &s.q)
        },
        (n, n),
        d.j.max(d.r).plus(d.q),
        "(J-R)Q",
    )?;
    let b = dense(
        &|mu| {
            let s = sys.eval(mu)?;
            Ok(&s.b - &s.p)
        },
        (n, m),
        d.b.max(d.p),
        "B-P",
    )?;
    let c = dense(
        &|mu| {
            let s = sys.eval(mu)?;
            Ok((&s.b + &s.p).transpose() * &s.q)
        },
        (m, n),
        d.b.max(d.p).plus(d.q),
        "(B+P)^T Q",
    )?;
    let dd = dense(
        &|mu| {
            let s = sys.eval(mu)?;
            Ok(&s.s + &s.n)
        },
        (m, m),
        d.s.max(d.n),
        "S+N",
    )?;
    LTISystem::new(e, a, b, c, dd)
}

/// `½ v̂ᵀ Ê v̂`
pub fn sg_hamiltonian(sg: &SGSystem, v: &[f64]) -> Result<f64> {
    dim_check(v.len() == sg.dimension(), || {
        format!("coefficient vector of length {} for SG dimension {}", v.len(), sg.dimension())
    })?;
    let ev = csc_matvec(&sg.e, v);
    Ok(0.5 * ev.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
}

/// `E[½ x(μ)ᵀ Ẽ(μ) x(μ)]` with `x(μ) = Σ_i v̂_i Φ_i(μ)`, computed with `rule`.
pub fn expected_hamiltonian_oracle(
    sys: &ParametricStandardPH,
    basis: &ChaosBasis,
    v: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    let n = sys.state_dim();
    dim_check(v.len() == n * basis.len(), || "coefficient vector length".into())?;
    dim_check(rule.parameter_box() == sys.parameter_box(), || "rule over a different box".into())?;
    let vm = DMatrix::from_column_slice(n, basis.len(), v);
    let mut total = 0.0;
    for (mu, w) in rule.iter() {
        let phi = basis.eval(rule.parameter_box(), mu)?;
        let x = &vm * &phi;
        let e = sys.eval(mu)?.e;
        total += w * 0.5 * x.dot(&(&e * &x));
    }
    Ok(total)
}

/// `Ĥ_k = 𝒢_s(Ẽ Φ_k)` for 1-based `k`; `Ĥ_1 = Ê`.
pub fn higher_mode_matrices(
    sys: &ParametricStandardPH,
    basis: &ChaosBasis,
    quad: SgQuadrature,
    k: usize,
) -> Result<CscMatrix<f64>> {
    if k == 0 || k > basis.len() {
        return Err(Error::InvalidArgument(format!("mode index {k} outside 1..={}", basis.len())));
    }
    let pbox = sys.parameter_box();
    let n = sys.state_dim();
    let alpha = basis.index(k - 1).to_vec();
    let order: u32 = alpha.iter().sum();
    let field = move |mu: &[f64]| -> Result<DMatrix<f64>> {
        let e = sys.eval(mu)?.e;
        if order == 0 {
            return Ok(e);
        }
        let xi = pbox.to_reference(mu)?;
        let phi: f64 = alpha
            .iter()
            .zip(&xi)
            .map(|(&a, &x)| normalized_legendre(a as usize, x))
            .product();
        Ok(e * phi)
    };
    sg_project(&field, (n, n), sys.degrees().e.plus(Degree::Poly(order)), basis, pbox, quad, "E Phi_k")
}

pub fn io_restrict(sg: &SGSystem, mode: IoMode) -> LTISystem {
    let full = sg.to_lti();
    let (m, ms) = (sg.base_ports, sg.ports());
    let all: Vec<usize> = (0..ms).collect();
    let first: Vec<usize> = (0..m).collect();
    match mode {
        IoMode::Mimo => full,
        IoMode::Simo => full.select_io(&first, &all),
        IoMode::Siso => full.select_io(&first, &first),
    }
}

/// `û(t) = (u(t)ᵀ, 0, …, 0)ᵀ` for an input writing `m` values.
pub fn lift_input<F>(u: F, m: usize, s: usize) -> impl Fn(f64, &mut [f64])
where
    F: Fn(f64, &mut [f64]),
{
    move |t, out: &mut [f64]| {
        debug_assert_eq!(out.len(), m * s);
        out.fill(0.0);
        u(t, &mut out[..m]);
    }
}

/// Coefficient blocks `v̂_i` of a mode-major SG vector.
pub fn mode_blocks(v: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    v.as_slice().chunks(n).map(DVector::from_column_slice).collect()
}
