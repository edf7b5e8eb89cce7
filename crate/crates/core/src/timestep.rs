//! Dormand–Prince 5(4) transient simulation of `E ẋ = A x + B u`, `y = C x + D u`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_check, Error, Result};
use crate::parametric::ParametricPHSystem;
use crate::pce::QuadratureRule;
use crate::ph::{self, LTISystem};
use crate::sg::{sg_hamiltonian, SGSystem};

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Where the trajectory is sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputTimes {
    /// Every accepted step.
    Steps,
    /// Strictly increasing times inside the span, starting at `t0`; filled by dense output.
    Grid(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    /// Fixed step without error control.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
    pub output: OutputTimes,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            h0: None,
            fixed_step: None,
            max_steps: 50_000_000,
            output: OutputTimes::Steps,
        }
    }
}

impl SimOptions {
    pub fn on_grid(grid: Vec<f64>) -> Self {
        Self { output: OutputTimes::Grid(grid), ..Self::default() }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Clone, Debug)]
pub struct TransientResult {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub hamiltonian: Option<Vec<f64>>,
    pub stats: StepStats,
}

impl TransientResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Outputs as a `samples × q` matrix.
    pub fn output_matrix(&self) -> DMatrix<f64> {
        let q = self.outputs.first().map_or(0, |y| y.len());
        DMatrix::from_fn(self.len(), q, |k, i| self.outputs[k][i])
    }
}

pub fn chirp(t: f64) -> f64 {
    (t * t).sin()
}

struct Rhs<'a, U> {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    u: &'a U,
    ubuf: DVector<f64>,
    evals: usize,
}

impl<U: Fn(f64, &mut [f64])> Rhs<'_, U> {
    fn eval(&mut self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.evals += 1;
        self.ubuf.fill(0.0);
        (self.u)(t, self.ubuf.as_mut_slice());
        out.gemv(1.0, &self.a, x, 0.0);
        if self.b.ncols() > 0 {
            out.gemv(1.0, &self.b, &self.ubuf, 1.0);
        }
    }
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    let n = err.len();
    if n == 0 {
        return 0.0;
    }
    let s: f64 = (0..n)
        .map(|i| {
            let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (s / n as f64).sqrt()
}

fn scaled_norm(v: &DVector<f64>, y: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    error_norm(v, y, y, rtol, atol)
}

/// Integrates on `[t0, t1]`. `E` is factorized once.
pub fn simulate<U>(
    sys: &LTISystem,
    u: U,
    x0: &[f64],
    t_span: (f64, f64),
    opts: &SimOptions,
) -> Result<TransientResult>
where
    U: Fn(f64, &mut [f64]),
{
    sys.check_dims()?;
    let n = sys.state_dim();
    let p = sys.inputs();
    dim_check(x0.len() == n, || format!("initial state of length {} for dimension {n}", x0.len()))?;
    let (t0, tend) = t_span;
    if !(tend > t0) || !t0.is_finite() || !tend.is_finite() {
        return Err(Error::InvalidArgument(format!("time span [{t0}, {tend}] is empty")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidArgument("rtol and atol must be positive".into()));
    }
    if let OutputTimes::Grid(g) = &opts.output {
        let ok = !g.is_empty()
            && g[0] == t0
            && g.windows(2).all(|w| w[1] > w[0])
            && *g.last().unwrap() <= tend;
        if !ok {
            return Err(Error::InvalidArgument(
                "output grid must start at t0, increase strictly and stay inside the span".into(),
            ));
        }
    }

    let (a, b) = if n == 0 {
        (DMatrix::zeros(0, 0), DMatrix::zeros(0, p))
    } else {
        let lu = sys.e.clone().lu();
        let singular = || Error::Singular("mass matrix E".into(), 0.0);
        let a = lu.solve(&sys.a).ok_or_else(singular)?;
        let b = lu.solve(&sys.b).ok_or_else(singular)?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(singular());
        }
        (a, b)
    };
    let mut rhs = Rhs { a, b, u: &u, ubuf: DVector::zeros(p), evals: 0 };

    let mut result = TransientResult {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        hamiltonian: None,
        stats: StepStats { min_step: f64::INFINITY, ..Default::default() },
    };
    let mut ubuf = DVector::zeros(p);
    let mut record = |t: f64, x: DVector<f64>, res: &mut TransientResult| {
        ubuf.fill(0.0);
        u(t, ubuf.as_mut_slice());
        res.outputs.push(&sys.c * &x + &sys.d * &ubuf);
        res.inputs.push(ubuf.clone());
        res.times.push(t);
        res.states.push(x);
    };

    let mut y = DVector::from_column_slice(x0);
    let mut t = t0;
    record(t0, y.clone(), &mut result);
    let grid: &[f64] = match &opts.output {
        OutputTimes::Grid(g) => g,
        OutputTimes::Steps => &[],
    };
    let mut next_out = 1;

    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut k5 = DVector::zeros(n);
    let mut k6 = DVector::zeros(n);
    let mut k7 = DVector::zeros(n);
    let mut ys = DVector::zeros(n);
    let mut y1 = DVector::zeros(n);
    let mut err = DVector::zeros(n);
    rhs.eval(t, &y, &mut k1);

    let span = tend - t0;
    let mut h = match (opts.fixed_step, opts.h0) {
        (Some(hf), _) if hf > 0.0 => hf,
        (Some(hf), _) => return Err(Error::InvalidArgument(format!("fixed step {hf} must be positive"))),
        (None, Some(h0)) if h0 > 0.0 => h0,
        _ => {
            // starting-step heuristic
            let d0 = scaled_norm(&y, &y, opts.rtol, opts.atol);
            let d1 = scaled_norm(&k1, &y, opts.rtol, opts.atol);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span);
            ys.copy_from(&y);
            ys.axpy(h0, &k1, 1.0);
            rhs.eval(t + h0, &ys, &mut k2);
            let d2 = scaled_norm(&(&k2 - &k1), &y, opts.rtol, opts.atol) / h0;
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1)
        }
    };
    h = h.min(span);

    let mut last_rejected = false;
    let mut steps = 0usize;
    loop {
        if t >= tend {
            break;
        }
        if steps >= opts.max_steps {
            return Err(Error::MaxSteps { t, steps });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) || !h.is_finite() {
            return Err(Error::StepUnderflow { t, h });
        }
        let final_step = t + h >= tend;
        if final_step {
            h = tend - t;
        }
        steps += 1;

        ys.copy_from(&y);
        ys.axpy(h * A21, &k1, 1.0);
        rhs.eval(t + C2 * h, &ys, &mut k2);
        ys.copy_from(&y);
        ys.axpy(h * A31, &k1, 1.0);
        ys.axpy(h * A32, &k2, 1.0);
        rhs.eval(t + C3 * h, &ys, &mut k3);
        ys.copy_from(&y);
        ys.axpy(h * A41, &k1, 1.0);
        ys.axpy(h * A42, &k2, 1.0);
        ys.axpy(h * A43, &k3, 1.0);
        rhs.eval(t + C4 * h, &ys, &mut k4);
        ys.copy_from(&y);
        ys.axpy(h * A51, &k1, 1.0);
        ys.axpy(h * A52, &k2, 1.0);
        ys.axpy(h * A53, &k3, 1.0);
        ys.axpy(h * A54, &k4, 1.0);
        rhs.eval(t + C5 * h, &ys, &mut k5);
        ys.copy_from(&y);
        ys.axpy(h * A61, &k1, 1.0);
        ys.axpy(h * A62, &k2, 1.0);
        ys.axpy(h * A63, &k3, 1.0);
        ys.axpy(h * A64, &k4, 1.0);
        ys.axpy(h * A65, &k5, 1.0);
        let t_new = if final_step { tend } else { t + h };
        rhs.eval(t_new, &ys, &mut k6);
        y1.copy_from(&y);
        y1.axpy(h * A71, &k1, 1.0);
        y1.axpy(h * A73, &k3, 1.0);
        y1.axpy(h * A74, &k4, 1.0);
        y1.axpy(h * A75, &k5, 1.0);
        y1.axpy(h * A76, &k6, 1.0);
        rhs.eval(t_new, &y1, &mut k7);

        let (accept, fac) = if opts.fixed_step.is_some() {
            (true, 1.0)
        } else {
            err.fill(0.0);
            err.axpy(h * E1, &k1, 1.0);
            err.axpy(h * E3, &k3, 1.0);
            err.axpy(h * E4, &k4, 1.0);
            err.axpy(h * E5, &k5, 1.0);
            err.axpy(h * E6, &k6, 1.0);
            err.axpy(h * E7, &k7, 1.0);
            let en = error_norm(&err, &y, &y1, opts.rtol, opts.atol);
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            (en <= 1.0, fac)
        };

        if !accept {
            result.stats.rejected += 1;
            last_rejected = true;
            h *= fac.min(1.0);
            continue;
        }
        result.stats.accepted += 1;
        result.stats.min_step = result.stats.min_step.min(h);
        result.stats.max_step = result.stats.max_step.max(h);

        if !grid.is_empty() {
            // dense output on (t, t_new]
            let ydiff = &y1 - &y;
            let bspl = &k1 * h - &ydiff;
            let r4 = &ydiff - &k7 * h - &bspl;
            let mut r5 = &k1 * D1;
            r5.axpy(D3, &k3, 1.0);
            r5.axpy(D4, &k4, 1.0);
            r5.axpy(D5, &k5, 1.0);
            r5.axpy(D6, &k6, 1.0);
            r5.axpy(D7, &k7, 1.0);
            r5 *= h;
            while next_out < grid.len() && grid[next_out] <= t_new {
                let tq = grid[next_out];
                let xq = if tq == t_new {
                    y1.clone()
                } else {
                    let th = (tq - t) / h;
                    let th1 = 1.0 - th;
                    let inner = &r4 + &r5 * th1;
                    let inner = &bspl + inner * th;
                    let inner = &ydiff + inner * th1;
                    &y + inner * th
                };
                record(tq, xq, &mut result);
                next_out += 1;
            }
        } else {
            record(t_new, y1.clone(), &mut result);
        }

        t = t_new;
        std::mem::swap(&mut y, &mut y1);
        std::mem::swap(&mut k1, &mut k7);
        if opts.fixed_step.is_none() {
            h *= if last_rejected { fac.min(1.0) } else { fac };
        }
        last_rejected = false;
        if final_step {
            break;
        }
    }
    result.stats.rhs_evaluations = rhs.evals;
    Ok(result)
}

/// Mean (mode-1 block) and standard deviation (root sum of squares of modes `2..s`) of SG outputs.
pub fn sg_output_statistics(result: &TransientResult, s: usize, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = result.len();
    let mut mean = DMatrix::zeros(k, m);
    let mut std = DMatrix::zeros(k, m);
    for (row, y) in result.outputs.iter().enumerate() {
        dim_check(y.len() == m * s, || format!("output of length {} for {m} ports and {s} modes", y.len()))?;
        for j in 0..m {
            mean[(row, j)] = y[j];
            std[(row, j)] = (1..s).map(|i| y[i * m + j].powi(2)).sum::<f64>().sqrt();
        }
    }
    Ok((mean, std))
}

/// `Ĥ(v̂(t))` at every stored sample.
pub fn hamiltonian_trace(result: &TransientResult, sg: &SGSystem) -> Result<Vec<f64>> {
    result.states.iter().map(|x| sg_hamiltonian(sg, x.as_slice())).collect()
}

/// `Σ_k w_k H(x(t, μ_k), μ_k)` from one IVP per node, on a shared grid.
pub fn sampled_expected_hamiltonian<U, X>(
    sys: &ParametricPHSystem,
    u: U,
    x0: X,
    rule: &QuadratureRule,
    grid: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<f64>>
where
    U: Fn(f64, &mut [f64]) + Sync,
    X: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("time grid needs at least two points".into()));
    }
    let span = (grid[0], *grid.last().unwrap());
    let opts = SimOptions { rtol, atol, ..SimOptions::on_grid(grid.to_vec()) };
    let nodes: Vec<(Vec<f64>, f64)> = rule.iter().map(|(mu, w)| (mu.to_vec(), w)).collect();
    let traces: Vec<Vec<f64>> = nodes
        .par_iter()
        .enumerate()
        .map(|(index, (mu, _))| {
            let run = || -> Result<Vec<f64>> {
                let node = sys.eval(mu)?;
                let res = simulate(&ph::to_lti(&node), &u, &x0(mu), span, &opts)?;
                res.states.iter().map(|x| ph::hamiltonian(&node, x)).collect()
            };
            run().map_err(|e| Error::NodeFailure { index, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; grid.len()];
    for ((_, w), tr) in nodes.iter().zip(&traces) {
        for (acc, h) in total.iter_mut().zip(tr) {
            *acc += w * h;
        }
    }
    Ok(total)
}
