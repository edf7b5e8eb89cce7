//! Parameter-dependent pH systems over a box, with polynomial-degree
//! metadata per matrix slot.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pce::{ParameterBox, QuadratureRule};
use crate::ph::{self, Decomposition, PHSystem, StandardPHSystem, ValidationReport};

/// Total polynomial degree of a matrix slot in the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degree {
    Poly(u32),
    NonPolynomial,
}

impl Degree {
    pub const CONST: Degree = Degree::Poly(0);

    pub fn plus(self, other: Degree) -> Degree {
        match (self, other) {
            (Degree::Poly(a), Degree::Poly(b)) => Degree::Poly(a + b),
            _ => Degree::NonPolynomial,
        }
    }

    pub fn max(self, other: Degree) -> Degree {
        match (self, other) {
            (Degree::Poly(a), Degree::Poly(b)) => Degree::Poly(a.max(b)),
            _ => Degree::NonPolynomial,
        }
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Degree::Poly(d) => write!(f, "{d}"),
            Degree::NonPolynomial => f.write_str("non-polynomial"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhDegrees {
    pub e: Degree,
    pub j: Degree,
    pub r: Degree,
    pub q: Degree,
    pub b: Degree,
    pub p: Degree,
    pub s: Degree,
    pub n: Degree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardDegrees {
    pub e: Degree,
    pub j: Degree,
    pub r: Degree,
    pub b: Degree,
    pub p: Degree,
    pub s: Degree,
    pub n: Degree,
}

impl StandardDegrees {
    pub fn all_polynomial(&self) -> bool {
        [self.e, self.j, self.r, self.b, self.p, self.s, self.n]
            .iter()
            .all(|d| matches!(d, Degree::Poly(_)))
    }
}

impl PhDegrees {
    pub fn constant() -> Self {
        let c = Degree::CONST;
        Self { e: c, j: c, r: c, q: c, b: c, p: c, s: c, n: c }
    }
}

type PhMap = Arc<dyn Fn(&[f64]) -> Result<PHSystem> + Send + Sync>;
type StandardMap = Arc<dyn Fn(&[f64]) -> Result<StandardPHSystem> + Send + Sync>;

#[derive(Clone)]
pub struct ParametricPHSystem {
    pbox: ParameterBox,
    n: usize,
    m: usize,
    degrees: PhDegrees,
    eval: PhMap,
}

/// Parametric system in `Q = I` form; the only input accepted by structure-preserving SG assembly.
#[derive(Clone)]
pub struct ParametricStandardPH {
    pbox: ParameterBox,
    n: usize,
    m: usize,
    degrees: StandardDegrees,
    eval: StandardMap,
}

impl fmt::Debug for ParametricPHSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricPHSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.pbox.dim())
            .field("degrees", &self.degrees)
            .finish()
    }
}

impl fmt::Debug for ParametricStandardPH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricStandardPH")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.pbox.dim())
            .field("degrees", &self.degrees)
            .finish()
    }
}

impl ParametricPHSystem {
    pub fn new<F>(pbox: ParameterBox, n: usize, m: usize, degrees: PhDegrees, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<PHSystem> + Send + Sync + 'static,
    {
        Self { pbox, n, m, degrees, eval: Arc::new(f) }
    }

    /// Constant system viewed as parametric over `pbox`.
    pub fn constant(pbox: ParameterBox, sys: PHSystem) -> Self {
        let (n, m) = (sys.state_dim(), sys.port_dim());
        Self::new(pbox, n, m, PhDegrees::constant(), move |_| Ok(sys.clone()))
    }

    pub fn eval(&self, mu: &[f64]) -> Result<PHSystem> {
        self.pbox.to_reference(mu)?;
        (self.eval)(mu)
    }

    pub fn parameter_box(&self) -> &ParameterBox {
        &self.pbox
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn port_dim(&self) -> usize {
        self.m
    }

    pub fn degrees(&self) -> &PhDegrees {
        &self.degrees
    }

    pub fn image_transformed(&self) -> ParametricStandardPH {
        let d = self.degrees;
        let degrees = StandardDegrees {
            e: d.q.plus(d.e),
            j: d.q.plus(d.q).plus(d.j),
            r: d.q.plus(d.q).plus(d.r),
            b: d.q.plus(d.b),
            p: d.q.plus(d.p),
            s: d.s,
            n: d.n,
        };
        let inner = self.eval.clone();
        ParametricStandardPH {
            pbox: self.pbox.clone(),
            n: self.n,
            m: self.m,
            degrees,
            eval: Arc::new(move |mu| ph::image_transform(&inner(mu)?)),
        }
    }

    pub fn basis_transformed(&self, method: Decomposition) -> ParametricStandardPH {
        let d = self.degrees;
        let degrees = if d.q == Degree::CONST {
            StandardDegrees { e: d.e, j: d.j, r: d.r, b: d.b, p: d.p, s: d.s, n: d.n }
        } else {
            let np = Degree::NonPolynomial;
            StandardDegrees { e: np, j: np, r: np, b: np, p: np, s: d.s, n: d.n }
        };
        let inner = self.eval.clone();
        ParametricStandardPH {
            pbox: self.pbox.clone(),
            n: self.n,
            m: self.m,
            degrees,
            eval: Arc::new(move |mu| Ok(ph::basis_transform(&inner(mu)?, method)?.0)),
        }
    }

    /// Validation reports at every node of `rule`.
    pub fn validate_at_nodes(&self, rule: &QuadratureRule, tol: f64) -> Result<Vec<ValidationReport>> {
        rule.iter().map(|(mu, _)| ph::validate_ph(&self.eval(mu)?, tol)).collect()
    }
}

impl ParametricStandardPH {
    pub fn new<F>(pbox: ParameterBox, n: usize, m: usize, degrees: StandardDegrees, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<StandardPHSystem> + Send + Sync + 'static,
    {
        Self { pbox, n, m, degrees, eval: Arc::new(f) }
    }

    pub fn eval(&self, mu: &[f64]) -> Result<StandardPHSystem> {
        self.pbox.to_reference(mu)?;
        (self.eval)(mu)
    }

    pub fn parameter_box(&self) -> &ParameterBox {
        &self.pbox
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn port_dim(&self) -> usize {
        self.m
    }

    pub fn degrees(&self) -> &StandardDegrees {
        &self.degrees
    }

    pub fn validate_at_nodes(&self, rule: &QuadratureRule, tol: f64) -> Result<Vec<ValidationReport>> {
        rule.iter().map(|(mu, _)| ph::validate_standard(&self.eval(mu)?, tol)).collect()
    }
}
