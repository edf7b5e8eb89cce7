//! Orthonormal Legendre chaos on boxes with uniform densities, tensor
//! Gauss–Legendre rules, and PC statistics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODE_CAP: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParameterBox {
    pub fn new(intervals: &[(f64, f64)]) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("parameter box needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "degenerate interval [{lo}, {hi}] in dimension {i}"
                )));
            }
        }
        Ok(Self {
            lo: intervals.iter().map(|p| p.0).collect(),
            hi: intervals.iter().map(|p| p.1).collect(),
        })
    }

    /// Intervals `μ̄(1 ± pct/100)` around each mean.
    pub fn around_means(means: &[f64], pct: f64) -> Result<Self> {
        if !(pct > 0.0 && pct < 100.0) {
            return Err(Error::InvalidArgument(format!(
                "variation must lie in (0, 100) percent, got {pct}"
            )));
        }
        let f = pct / 100.0;
        let iv: Vec<(f64, f64)> = means
            .iter()
            .map(|&m| {
                let (a, b) = (m * (1.0 - f), m * (1.0 + f));
                (a.min(b), a.max(b))
            })
            .collect();
        Self::new(&iv)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Affine map of a parameter point to `[-1, 1]^q`.
    pub fn to_reference(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if mu.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameter point of length {} for box of dimension {}",
                mu.len(),
                self.dim()
            )));
        }
        let mut xi = Vec::with_capacity(mu.len());
        for (dim, &value) in mu.iter().enumerate() {
            let (lo, hi) = (self.lo[dim], self.hi[dim]);
            let slack = 1e-12 * (hi - lo);
            if !(value >= lo - slack && value <= hi + slack) {
                return Err(Error::OutsideBox { dim, value, lo, hi });
            }
            xi.push(((2.0 * value - lo - hi) / (hi - lo)).clamp(-1.0, 1.0));
        }
        Ok(xi)
    }

    pub fn from_reference(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter()
            .enumerate()
            .map(|(i, &x)| 0.5 * (self.lo[i] + self.hi[i]) + 0.5 * (self.hi[i] - self.lo[i]) * x)
            .collect()
    }
}

/// Number of multi-indices in `q` variables with total degree at most `d`.
pub fn basis_size(q: usize, d: usize) -> Result<usize> {
    if q == 0 {
        return Err(Error::InvalidArgument("basis needs q >= 1".into()));
    }
    let k = q.min(d) as u128;
    let top = (q + d) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc
            .checked_mul(top - k + i)
            .ok_or_else(|| Error::InvalidArgument("basis size overflows".into()))?
            / i;
    }
    usize::try_from(acc).map_err(|_| Error::InvalidArgument("basis size overflows".into()))
}

/// `√(2k+1)·P_k(ξ)`
pub fn normalized_legendre(k: usize, xi: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, xi);
    if k == 0 {
        return 1.0;
    }
    for n in 1..k {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * xi * p1 - nf * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (2.0 * k as f64 + 1.0).sqrt() * p1
}

fn legendre_table(d: usize, xi: f64, out: &mut [f64]) {
    let mut p0 = 1.0;
    let mut p1 = xi;
    out[0] = 1.0;
    if d >= 1 {
        out[1] = 3f64.sqrt() * xi;
    }
    for n in 1..d {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * xi * p1 - nf * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
        out[n + 1] = (2.0 * nf + 3.0).sqrt() * p2;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosBasis {
    q: usize,
    degree: usize,
    indices: Vec<Vec<u32>>,
}

impl ChaosBasis {
    /// Multi-indices of total degree ≤ `d`, graded by degree; within a degree
    /// the order is reverse lexicographic so that the first-order terms come in
    /// parameter order.
    pub fn new(q: usize, d: usize) -> Result<Self> {
        let s = basis_size(q, d)?;
        let mut indices = Vec::with_capacity(s);
        let mut scratch = vec![0u32; q];
        for k in 0..=d {
            compositions(k as u32, 0, &mut scratch, &mut indices);
        }
        debug_assert_eq!(indices.len(), s);
        Ok(Self { q, degree: d, indices })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[u32] {
        &self.indices[i]
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Basis values at a point of the reference cube `[-1, 1]^q`.
    pub fn eval_reference(&self, xi: &[f64]) -> Vec<f64> {
        let d1 = self.degree + 1;
        let mut table = vec![0.0; self.q * d1];
        for (j, &x) in xi.iter().enumerate() {
            legendre_table(self.degree, x, &mut table[j * d1..(j + 1) * d1]);
        }
        self.indices
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a > 0)
                    .map(|(j, &a)| table[j * d1 + a as usize])
                    .product()
            })
            .collect()
    }

    pub fn eval(&self, pbox: &ParameterBox, mu: &[f64]) -> Result<DVector<f64>> {
        if pbox.dim() != self.q {
            return Err(Error::Dimension(format!(
                "basis in {} variables, box of dimension {}",
                self.q,
                pbox.dim()
            )));
        }
        let xi = pbox.to_reference(mu)?;
        Ok(DVector::from_vec(self.eval_reference(&xi)))
    }
}

fn compositions(rest: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = rest;
        out.push(scratch.to_vec());
        return;
    }
    for a in (0..=rest).rev() {
        scratch[pos] = a;
        compositions(rest - a, pos + 1, scratch, out);
    }
    scratch[pos] = 0;
}

pub fn eval_basis(basis: &ChaosBasis, pbox: &ParameterBox, mu: &[f64]) -> Result<DVector<f64>> {
    basis.eval(pbox, mu)
}

/// Gauss–Legendre nodes on `[-1, 1]` with weights normalized to sum to one.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let (pn, pnm1) = if n == 1 { (x, 1.0) } else { (p1, p0) };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            x = 0.0;
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    if n == 1 {
        weights[0] = 1.0;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (nodes, weights)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pbox: ParameterBox,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exactness: Vec<usize>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let q = self.pbox.dim();
        &self.nodes[i * q..(i + 1) * q]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn parameter_box(&self) -> &ParameterBox {
        &self.pbox
    }

    /// Per-dimension polynomial degree integrated exactly.
    pub fn exactness(&self) -> &[usize] {
        &self.exactness
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.node(i), self.weights[i]))
    }
}

pub fn tensor_gauss_rule(pbox: &ParameterBox, points_per_dim: usize) -> Result<QuadratureRule> {
    tensor_gauss_rule_anisotropic(pbox, &vec![points_per_dim; pbox.dim()], DEFAULT_NODE_CAP)
}

/// Tensor Gauss–Legendre rule with a per-dimension point count; the last
/// dimension varies fastest.
pub fn tensor_gauss_rule_anisotropic(
    pbox: &ParameterBox,
    points: &[usize],
    cap: usize,
) -> Result<QuadratureRule> {
    let q = pbox.dim();
    if points.len() != q {
        return Err(Error::Dimension(format!("{} point counts for {q} dimensions", points.len())));
    }
    if points.contains(&0) {
        return Err(Error::InvalidArgument("quadrature needs at least one point per dimension".into()));
    }
    let total = points
        .iter()
        .try_fold(1u128, |acc, &p| acc.checked_mul(p as u128))
        .unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::QuadratureTooLarge { nodes: total, cap });
    }
    let total = total as usize;
    let rules: Vec<(Vec<f64>, Vec<f64>)> = points.iter().map(|&p| gauss_legendre(p)).collect();
    let mut nodes = Vec::with_capacity(total * q);
    let mut weights = Vec::with_capacity(total);
    let mut counter = vec![0usize; q];
    let mut xi = vec![0.0; q];
    for _ in 0..total {
        let mut w = 1.0;
        for j in 0..q {
            xi[j] = rules[j].0[counter[j]];
            w *= rules[j].1[counter[j]];
        }
        nodes.extend(pbox.from_reference(&xi));
        weights.push(w);
        for j in (0..q).rev() {
            counter[j] += 1;
            if counter[j] < points[j] {
                break;
            }
            counter[j] = 0;
        }
    }
    Ok(QuadratureRule {
        pbox: pbox.clone(),
        nodes,
        weights,
        exactness: points.iter().map(|&p| 2 * p - 1).collect(),
    })
}

pub fn expectation<F: Fn(&[f64]) -> f64>(f: F, rule: &QuadratureRule) -> f64 {
    rule.iter().map(|(mu, w)| w * f(mu)).sum()
}

pub fn inner_product<F, G>(f: F, g: G, rule: &QuadratureRule) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    rule.iter().map(|(mu, w)| w * f(mu) * g(mu)).sum()
}

/// PC coefficients `⟨f, Φ_i⟩` computed with `rule`.
pub fn pc_coefficients<F: Fn(&[f64]) -> f64>(
    f: F,
    basis: &ChaosBasis,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let mut c = vec![0.0; basis.len()];
    for (mu, w) in rule.iter() {
        let phi = basis.eval(rule.parameter_box(), mu)?;
        let fw = w * f(mu);
        for (ci, p) in c.iter_mut().zip(phi.iter()) {
            *ci += fw * p;
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcStatistics {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
}

impl PcStatistics {
    pub fn std(&self) -> DVector<f64> {
        self.variance.map(f64::sqrt)
    }
}

/// Mean and variance from PC coefficient vectors indexed by basis order.
pub fn pc_statistics(coeffs: &[DVector<f64>]) -> Result<PcStatistics> {
    let first = coeffs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no PC coefficients".into()))?;
    let mut variance = DVector::zeros(first.len());
    for c in &coeffs[1..] {
        if c.len() != first.len() {
            return Err(Error::Dimension("PC coefficients of unequal length".into()));
        }
        variance += c.component_mul(c);
    }
    Ok(PcStatistics { mean: first.clone(), variance })
}
