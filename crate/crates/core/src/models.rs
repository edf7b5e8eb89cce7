//! Benchmark systems: a DC motor and an RLC ladder network.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::parametric::{Degree, ParametricPHSystem, PhDegrees};
use crate::pce::ParameterBox;
use crate::ph::PHSystem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotorParams {
    pub inductance: f64,
    pub resistance: f64,
    pub gyrator: f64,
    pub friction: f64,
    pub inertia: f64,
}

impl MotorParams {
    pub const MEAN: MotorParams = MotorParams {
        inductance: 0.001,
        resistance: 0.01,
        gyrator: 10.0,
        friction: 1.0,
        inertia: 1.0,
    };

    /// Order `(L, R, K, B, J)`.
    pub fn from_slice(mu: &[f64]) -> Result<Self> {
        if mu.len() != 5 {
            return Err(Error::Dimension(format!("motor has 5 parameters, got {}", mu.len())));
        }
        Ok(Self { inductance: mu[0], resistance: mu[1], gyrator: mu[2], friction: mu[3], inertia: mu[4] })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.inductance, self.resistance, self.gyrator, self.friction, self.inertia]
    }
}

pub fn dc_motor(p: &MotorParams) -> Result<PHSystem> {
    let positive = [p.inductance, p.resistance, p.friction, p.inertia];
    if positive.iter().any(|v| !(*v > 0.0)) || !(p.gyrator >= 0.0) {
        return Err(Error::InvalidArgument(format!("motor parameters must be positive: {p:?}")));
    }
    let mut sys = PHSystem::zeros(2, 1);
    sys.j[(0, 1)] = -p.gyrator;
    sys.j[(1, 0)] = p.gyrator;
    sys.r[(0, 0)] = p.resistance;
    sys.r[(1, 1)] = p.friction;
    sys.q[(0, 0)] = 1.0 / p.inductance;
    sys.q[(1, 1)] = 1.0 / p.inertia;
    sys.b[(0, 0)] = 1.0;
    Ok(sys)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderParams {
    pub capacitances: Vec<f64>,
    pub inductances: Vec<f64>,
    pub resistances: Vec<f64>,
}

impl LadderParams {
    pub const MEAN_C: f64 = 1e-6;
    pub const MEAN_L: f64 = 1e-4;
    pub const MEAN_R: f64 = 1.0;

    pub fn uniform(cells: usize, c: f64, l: f64, r: f64) -> Self {
        Self { capacitances: vec![c; cells], inductances: vec![l; cells], resistances: vec![r; cells] }
    }

    pub fn mean(cells: usize) -> Self {
        Self::uniform(cells, Self::MEAN_C, Self::MEAN_L, Self::MEAN_R)
    }

    pub fn cells(&self) -> usize {
        self.capacitances.len()
    }

    /// From `μ = (1/C_1..1/C_k, 1/L_1..1/L_k, R_1..R_k)`.
    pub fn from_mu(mu: &[f64]) -> Result<Self> {
        if mu.is_empty() || mu.len() % 3 != 0 {
            return Err(Error::Dimension(format!("ladder needs 3k parameters, got {}", mu.len())));
        }
        let k = mu.len() / 3;
        Ok(Self {
            capacitances: mu[..k].iter().map(|v| 1.0 / v).collect(),
            inductances: mu[k..2 * k].iter().map(|v| 1.0 / v).collect(),
            resistances: mu[2 * k..].to_vec(),
        })
    }

    pub fn mu(&self) -> Vec<f64> {
        self.capacitances
            .iter()
            .map(|c| 1.0 / c)
            .chain(self.inductances.iter().map(|l| 1.0 / l))
            .chain(self.resistances.iter().copied())
            .collect()
    }
}

/// Ladder assembled directly from `μ`, so that `Q` and `R` are affine in `μ`.
fn ladder_from_mu(mu: &[f64]) -> Result<PHSystem> {
    if mu.is_empty() || mu.len() % 3 != 0 {
        return Err(Error::Dimension(format!("ladder needs 3k parameters, got {}", mu.len())));
    }
    if mu.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("ladder parameters must be positive".into()));
    }
    let k = mu.len() / 3;
    let n = 2 * k;
    let mut sys = PHSystem::zeros(n, 1);
    for i in 0..n - 1 {
        sys.j[(i, i + 1)] = -1.0;
        sys.j[(i + 1, i)] = 1.0;
    }
    let mut qd = DVector::zeros(n);
    let mut rd = DVector::zeros(n);
    for i in 0..k {
        qd[2 * i] = mu[i];
        qd[2 * i + 1] = mu[k + i];
        rd[2 * i + 1] = mu[2 * k + i];
    }
    sys.q = DMatrix::from_diagonal(&qd);
    sys.r = DMatrix::from_diagonal(&rd);
    sys.b[(0, 0)] = 1.0;
    Ok(sys)
}

pub fn rlc_ladder(p: &LadderParams) -> Result<PHSystem> {
    let k = p.cells();
    if k == 0 || p.inductances.len() != k || p.resistances.len() != k {
        return Err(Error::Dimension("ladder needs k >= 1 cells with one C, L, R each".into()));
    }
    ladder_from_mu(&p.mu())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Benchmark {
    Motor,
    Ladder { cells: usize },
}

impl Benchmark {
    pub fn name(&self) -> String {
        match self {
            Benchmark::Motor => "motor".into(),
            Benchmark::Ladder { cells } => format!("ladder-k{cells}"),
        }
    }

    /// Mean values of the random parameters.
    pub fn mean_parameters(&self) -> Vec<f64> {
        match self {
            Benchmark::Motor => MotorParams::MEAN.to_vec(),
            Benchmark::Ladder { cells } => LadderParams::mean(*cells).mu(),
        }
    }

    pub fn nominal(&self) -> Result<PHSystem> {
        self.at(&self.mean_parameters())
    }

    pub fn at(&self, mu: &[f64]) -> Result<PHSystem> {
        match self {
            Benchmark::Motor => dc_motor(&MotorParams::from_slice(mu)?),
            Benchmark::Ladder { .. } => ladder_from_mu(mu),
        }
    }

    /// Polynomial degrees of the matrix slots in the random parameters.
    pub fn degrees(&self) -> PhDegrees {
        let mut d = PhDegrees::constant();
        match self {
            Benchmark::Motor => {
                d.j = Degree::Poly(1);
                d.r = Degree::Poly(1);
                d.q = Degree::NonPolynomial;
            }
            Benchmark::Ladder { .. } => {
                d.r = Degree::Poly(1);
                d.q = Degree::Poly(1);
            }
        }
        d
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Benchmark::Motor => f.write_str("motor"),
            Benchmark::Ladder { cells } => write!(f, "ladder:k={cells}"),
        }
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motor" => Ok(Benchmark::Motor),
            "ladder" => Ok(Benchmark::Ladder { cells: 5 }),
            _ => {
                let cells = s
                    .strip_prefix("ladder:k=")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}'")))?;
                Ok(Benchmark::Ladder { cells })
            }
        }
    }
}

/// Parametric benchmark with every random parameter varying by `pct` percent around its mean.
pub fn parametrize(model: Benchmark, pct: f64) -> Result<ParametricPHSystem> {
    let pbox = ParameterBox::around_means(&model.mean_parameters(), pct)?;
    let (n, m) = match model {
        Benchmark::Motor => (2, 1),
        Benchmark::Ladder { cells } => (2 * cells, 1),
    };
    Ok(ParametricPHSystem::new(pbox, n, m, model.degrees(), move |mu| model.at(mu)))
}
