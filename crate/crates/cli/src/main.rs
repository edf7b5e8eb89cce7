use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use phsg::analysis::{bode, mor_rel_error, rel_h2_difference_schur, SchurRealization, BODE_OMEGA, BODE_POINTS};
use phsg::export;
use phsg::models::{parametrize, Benchmark};
use phsg::mor::{arnoldi_basis, balanced_basis, galerkin_reduce, irka_galerkin, IrkaOptions};
use phsg::parametric::{ParametricPHSystem, ParametricStandardPH};
use phsg::pce::{tensor_gauss_rule, ChaosBasis};
use phsg::ph::{Decomposition, LTISystem};
use phsg::sg::{
    assemble_sg, assemble_sg_general, io_restrict, lift_input, sg_hamiltonian, IoMode, SGSystem, SgQuadrature,
};
use phsg::timestep::{chirp, sampled_expected_hamiltonian, sg_output_statistics, simulate, SimOptions};
use phsg::{Error, Result};

#[derive(Parser)]
#[command(name = "phsg", version, about = "Stochastic Galerkin analysis and model reduction of port-Hamiltonian benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the SG system and export its matrices, metadata and validation report.
    SgBuild(Common),
    /// Relative H2 differences between the SG systems of original and transformed realizations.
    Convergence(Common),
    /// Transient SG simulation with output statistics and Hamiltonian trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 300.0)]
        t_end: f64,
        #[arg(long, default_value_t = 3001)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = Input::Chirp)]
        input: Input,
        /// Gauss points per parameter for a sampled expected-Hamiltonian column.
        #[arg(long)]
        oracle_nodes: Option<usize>,
    },
    /// Reduced-order model sweep over r.
    Mor {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Method::Bt)]
        method: Method,
        #[arg(long, default_value_t = 5)]
        r_min: usize,
        #[arg(long, default_value_t = 60)]
        r_max: usize,
        /// Expansion point for Arnoldi.
        #[arg(long, default_value_t = 0.0)]
        sigma0: f64,
    },
    /// Frequency response on a logarithmic grid.
    Bode {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = BODE_OMEGA.0)]
        omega_min: f64,
        #[arg(long, default_value_t = BODE_OMEGA.1)]
        omega_max: f64,
        #[arg(long, default_value_t = BODE_POINTS)]
        points: usize,
        /// Deterministic system at the mean parameters instead of the SG system.
        #[arg(long)]
        nominal: bool,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// motor, ladder, or ladder:k=<cells>
    #[arg(long, default_value = "motor")]
    model: String,
    #[arg(long, value_enum, default_value_t = Transform::Image)]
    transform: Transform,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Percent variation of every random parameter around its mean.
    #[arg(long, default_value_t = 10.0)]
    variation: f64,
    /// Gauss points per parameter; exact polynomial quadrature when omitted.
    #[arg(long)]
    quad_points: Option<usize>,
    #[arg(long, value_enum, default_value_t = Io::Simo)]
    io_mode: Io,
    #[arg(long, default_value_t = 1e-8)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    atol: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Transform {
    None,
    BasisSqrt,
    BasisCholesky,
    Image,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Io {
    Mimo,
    Simo,
    Siso,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Method {
    Bt,
    Arnoldi,
    Irka,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq, Debug)]
enum Input {
    Chirp,
    Zero,
}

impl Transform {
    fn label(self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::BasisSqrt => "basis-sqrt",
            Transform::BasisCholesky => "basis-cholesky",
            Transform::Image => "image",
        }
    }

    fn apply(self, sys: &ParametricPHSystem) -> Option<ParametricStandardPH> {
        match self {
            Transform::None => None,
            Transform::BasisSqrt => Some(sys.basis_transformed(Decomposition::Sqrt)),
            Transform::BasisCholesky => Some(sys.basis_transformed(Decomposition::Cholesky)),
            Transform::Image => Some(sys.image_transformed()),
        }
    }
}

impl From<Io> for IoMode {
    fn from(io: Io) -> Self {
        match io {
            Io::Mimo => IoMode::Mimo,
            Io::Simo => IoMode::Simo,
            Io::Siso => IoMode::Siso,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Validated configuration shared by all commands.
struct RunConfig {
    common: Common,
    model: Benchmark,
    system: ParametricPHSystem,
    basis: ChaosBasis,
}

impl RunConfig {
    fn new(common: &Common) -> Result<Self> {
        let model = Benchmark::from_str(&common.model)?;
        if !(common.variation > 0.0 && common.variation < 100.0) {
            return Err(config_error(format!("variation {} % outside (0, 100)", common.variation)));
        }
        if !(common.rtol > 0.0 && common.atol > 0.0) {
            return Err(config_error("tolerances must be positive"));
        }
        if common.quad_points == Some(0) {
            return Err(config_error("--quad-points must be positive"));
        }
        let system = parametrize(model, common.variation)?;
        let basis = ChaosBasis::new(system.parameter_box().dim(), common.degree)?;
        Ok(Self { common: common.clone(), model, system, basis })
    }

    fn echo(&self) -> Value {
        let c = &self.common;
        json!({
            "model": self.model.to_string(),
            "transform": c.transform.label(),
            "degree": c.degree,
            "variation": c.variation,
            "quad_points": c.quad_points,
            "io_mode": IoMode::from(c.io_mode).label(),
            "rtol": c.rtol,
            "atol": c.atol,
            "seed": c.seed,
        })
    }

    fn quadrature(&self, sys: &ParametricStandardPH) -> SgQuadrature {
        match self.common.quad_points {
            Some(n) => SgQuadrature::Gauss(n),
            None => SgQuadrature::auto(sys.degrees()),
        }
    }

    fn general_quadrature(&self) -> SgQuadrature {
        self.common.quad_points.map_or(SgQuadrature::Exact, SgQuadrature::Gauss)
    }

    fn transformed(&self) -> Result<ParametricStandardPH> {
        self.common.transform.apply(&self.system).ok_or_else(|| {
            config_error("this command needs a structure-preserving transformation (--transform other than none)")
        })
    }

    fn sg(&self, sys: &ParametricStandardPH) -> Result<SGSystem> {
        assemble_sg(sys, &self.basis, self.quadrature(sys))
    }

    fn csv_path(&self, command: &str) -> PathBuf {
        let c = &self.common;
        c.out_dir.join(export::csv_file_name(command, &self.model.name(), c.degree, c.variation))
    }

    fn stem(&self, command: &str) -> String {
        let c = &self.common;
        format!("{command}_{}_{}_{}", self.model.name(), c.degree, c.variation)
    }
}

fn write_table(path: &Path, header: &Value, columns: Vec<String>, rows: &[Vec<f64>]) -> Result<()> {
    export::write_csv(path, header, &columns, rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sg_build(cfg: &RunConfig) -> Result<()> {
    let header = export::provenance("sg-build", cfg.echo());
    let dir = &cfg.common.out_dir;
    let prefix = cfg.stem("sg-build");
    match cfg.common.transform.apply(&cfg.system) {
        Some(sys) => {
            let sg = cfg.sg(&sys)?;
            let files = export::write_sg(dir, &prefix, &sg, &header, phsg::ph::DEFAULT_TOL)?;
            let report = sg.validate(phsg::ph::DEFAULT_TOL)?;
            println!("dimension {}", sg.dimension());
            println!("port-Hamiltonian structure: {}", if report.passed() { "valid" } else { "VIOLATED" });
            for f in files {
                println!("wrote {}", f.display());
            }
            if !report.passed() {
                return Err(Error::Structure(report.failures().join(", ")));
            }
        }
        None => {
            let lti = assemble_sg_general(&cfg.system, &cfg.basis, cfg.general_quadrature())?;
            std::fs::create_dir_all(dir)?;
            let mut files = serde_json::Map::new();
            for (name, m) in [("E", &lti.e), ("A", &lti.a), ("B", &lti.b), ("C", &lti.c), ("D", &lti.d)] {
                let file = format!("{prefix}_{name}.mtx");
                let csc = nalgebra_sparse::CscMatrix::from(&dense_to_coo(m));
                export::write_matrix_market(&dir.join(&file), &csc, &header)?;
                println!("wrote {}", dir.join(&file).display());
                files.insert(name.into(), Value::String(file));
            }
            let sidecar = json!({
                "provenance": header,
                "metadata": {
                    "modes": cfg.basis.len(),
                    "degree": cfg.common.degree,
                    "parameters": cfg.basis.q(),
                    "base_states": cfg.system.state_dim(),
                    "base_ports": cfg.system.port_dim(),
                    "dimension": lti.state_dim(),
                },
                "port_hamiltonian": false,
                "report": "no transformation applied: the SG system of the original realization is a general LTI system without guaranteed pH structure",
                "matrices": files,
            });
            let path = dir.join(format!("{prefix}.json"));
            std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
            println!("dimension {}", lti.state_dim());
            println!("port-Hamiltonian structure: not guaranteed (no transformation)");
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn dense_to_coo(m: &nalgebra::DMatrix<f64>) -> nalgebra_sparse::CooMatrix<f64> {
    let mut coo = nalgebra_sparse::CooMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                coo.push(i, j, m[(i, j)]);
            }
        }
    }
    coo
}

fn io_indices(mode: IoMode, m: usize, ports: usize) -> (Vec<usize>, Vec<usize>) {
    let first: Vec<usize> = (0..m).collect();
    let all: Vec<usize> = (0..ports).collect();
    match mode {
        IoMode::Mimo => (all.clone(), all),
        IoMode::Simo => (first, all),
        IoMode::Siso => (first.clone(), first),
    }
}

fn cmd_convergence(cfg: &RunConfig) -> Result<()> {
    let transforms: Vec<Transform> = match cfg.common.transform {
        Transform::None => vec![Transform::BasisSqrt, Transform::Image],
        t => vec![t],
    };
    let modes = [IoMode::Siso, IoMode::Simo, IoMode::Mimo];
    let degrees: Vec<usize> = (1..=cfg.common.degree).collect();
    if degrees.is_empty() {
        return Err(config_error("convergence needs --degree >= 1"));
    }
    let rows = degrees
        .par_iter()
        .map(|&d| -> Result<Vec<f64>> {
            let basis = ChaosBasis::new(cfg.basis.q(), d)?;
            let h0 = assemble_sg_general(&cfg.system, &basis, cfg.general_quadrature())?;
            let h0 = SchurRealization::new(&h0)?;
            let mut row = vec![d as f64];
            for t in &transforms {
                let sys = t.apply(&cfg.system).expect("transform is not none");
                let sg = assemble_sg(&sys, &basis, cfg.quadrature(&sys))?;
                let hi = SchurRealization::new(&io_restrict(&sg, IoMode::Mimo))?;
                for mode in modes {
                    let (ins, outs) = io_indices(mode, sg.base_ports, sg.ports());
                    let a = h0.select_io(&ins, &outs)?;
                    let b = hi.select_io(&ins, &outs)?;
                    row.push(rel_h2_difference_schur(&a, &b)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["degree".to_string()];
    for t in &transforms {
        for mode in modes {
            columns.push(format!("{}_{}", t.label(), mode.label().to_uppercase()));
        }
    }
    let header = export::provenance("convergence", cfg.echo());
    write_table(&cfg.csv_path("convergence"), &header, columns, &rows)
}

fn cmd_simulate(cfg: &RunConfig, t_end: f64, samples: usize, input: Input, oracle: Option<usize>) -> Result<()> {
    if !(t_end > 0.0) || samples < 2 {
        return Err(config_error("need --t-end > 0 and --samples >= 2"));
    }
    let transformed = cfg.common.transform.apply(&cfg.system);
    let sg = transformed.as_ref().map(|sys| cfg.sg(sys)).transpose()?;
    let lti: LTISystem = match &sg {
        Some(sg) => sg.to_lti(),
        None => assemble_sg_general(&cfg.system, &cfg.basis, cfg.general_quadrature())?,
    };
    let (m, s) = (cfg.system.port_dim(), cfg.basis.len());
    let scalar = move |t: f64, out: &mut [f64]| {
        let v = match input {
            Input::Chirp => chirp(t),
            Input::Zero => 0.0,
        };
        out.fill(v);
    };
    let grid: Vec<f64> = (0..samples).map(|k| t_end * k as f64 / (samples - 1) as f64).collect();
    let opts = SimOptions { rtol: cfg.common.rtol, atol: cfg.common.atol, ..SimOptions::on_grid(grid.clone()) };
    let res = simulate(&lti, lift_input(scalar, m, s), &vec![0.0; lti.state_dim()], (0.0, t_end), &opts)?;
    let (mean, std) = sg_output_statistics(&res, s, m)?;
    let with_std = cfg.common.io_mode != Io::Siso;

    let mut columns = vec!["t".to_string()];
    columns.extend((0..m).map(|j| format!("mean_y{j}")));
    if with_std {
        columns.extend((0..m).map(|j| format!("std_y{j}")));
    }
    let hamiltonian: Option<Vec<f64>> = match &sg {
        Some(sg) => {
            columns.push("hamiltonian".into());
            Some(res.states.iter().map(|x| sg_hamiltonian(sg, x.as_slice())).collect::<Result<_>>()?)
        }
        None => None,
    };
    let expected = match oracle {
        Some(k) => {
            let rule = tensor_gauss_rule(cfg.system.parameter_box(), k)?;
            let n = cfg.system.state_dim();
            let e = sampled_expected_hamiltonian(
                &cfg.system,
                scalar,
                |_| vec![0.0; n],
                &rule,
                &grid,
                cfg.common.rtol,
                cfg.common.atol,
            )?;
            columns.push(format!("expected_hamiltonian_{}nodes", rule.len()));
            if hamiltonian.is_some() {
                columns.push("hamiltonian_difference".into());
            }
            Some(e)
        }
        None => None,
    };
    let rows: Vec<Vec<f64>> = (0..res.len())
        .map(|k| {
            let mut row = vec![res.times[k]];
            row.extend(mean.row(k).iter());
            if with_std {
                row.extend(std.row(k).iter());
            }
            if let Some(h) = &hamiltonian {
                row.push(h[k]);
            }
            if let Some(e) = &expected {
                row.push(e[k]);
                if let Some(h) = &hamiltonian {
                    row.push(h[k] - e[k]);
                }
            }
            row
        })
        .collect();
    let mut echo = cfg.echo();
    echo["t_end"] = json!(t_end);
    echo["samples"] = json!(samples);
    echo["input"] = json!(format!("{input:?}").to_lowercase());
    echo["oracle_nodes"] = json!(oracle);
    let header = export::provenance("simulate", echo);
    write_table(&cfg.csv_path("simulate"), &header, columns, &rows)
}

fn cmd_mor(cfg: &RunConfig, method: Method, r_min: usize, r_max: usize, sigma0: f64) -> Result<()> {
    if r_min < 1 || r_min > r_max {
        return Err(config_error(format!("invalid r range {r_min}..={r_max}")));
    }
    let sys = cfg.transformed()?;
    let sg = cfg.sg(&sys)?;
    if r_max > sg.dimension() {
        return Err(config_error(format!("--r-max {r_max} exceeds SG dimension {}", sg.dimension())));
    }
    let mode = IoMode::from(cfg.common.io_mode);
    let (ins, outs) = io_indices(mode, sg.base_ports, sg.ports());
    let fom_lti = io_restrict(&sg, mode);
    let fom = SchurRealization::new(&fom_lti)?;
    let rs: Vec<usize> = (r_min..=r_max).collect();
    let mut echo = cfg.echo();
    echo["method"] = json!(format!("{method:?}").to_lowercase());
    echo["r_min"] = json!(r_min);
    echo["r_max"] = json!(r_max);
    if method == Method::Arnoldi {
        echo["sigma0"] = json!(sigma0);
    }
    let header = export::provenance("mor", echo);

    // (r, error, stable, pH)
    let rows: Vec<Vec<f64>> = match method {
        Method::Bt => {
            let bb = balanced_basis(&fom, r_max)?;
            let hankel: Vec<Vec<f64>> = bb.hankel.iter().enumerate().map(|(k, &h)| vec![(k + 1) as f64, h]).collect();
            let path = cfg.common.out_dir.join(format!("{}.csv", cfg.stem("hankel")));
            write_table(&path, &header, vec!["index".into(), "hankel_singular_value".into()], &hankel)?;
            rs.par_iter()
                .map(|&r| {
                    let rom = bb.reduce(&fom, r)?;
                    let stable = SchurRealization::new(&rom)?.is_stable(0.0);
                    Ok(vec![r as f64, mor_rel_error(&fom, &rom)?, flag(stable), 0.0])
                })
                .collect::<Result<_>>()?
        }
        Method::Arnoldi | Method::Irka => {
            let arn = match method {
                Method::Arnoldi => Some(arnoldi_basis(&fom_lti, r_max, sigma0)?),
                _ => None,
            };
            let siso = fom.select_io(&[0], &[0])?;
            let galerkin = |r: usize| -> Result<_> {
                let v = match &arn {
                    Some(a) => {
                        if a.ncols() < r {
                            return Err(Error::RankExceeded { requested: r, available: a.ncols() });
                        }
                        a.columns(0, r).into_owned()
                    }
                    None => irka_galerkin(&siso, r, &IrkaOptions::default())?.v,
                };
                galerkin_reduce(&sg, &v)
            };
            let last = galerkin(r_max)?;
            let path = cfg.common.out_dir.join(format!("{}_r{r_max}.json", cfg.stem("rom")));
            std::fs::write(&path, last.system.clone().into_general().to_json_string())?;
            println!("wrote {}", path.display());
            rs.par_iter()
                .map(|&r| {
                    let red = if r == r_max { last.clone() } else { galerkin(r)? };
                    let ph = red.validate(phsg::ph::DEFAULT_TOL)?.passed();
                    let rom = red.to_lti().select_io(&ins, &outs);
                    let stable = SchurRealization::new(&rom)?.is_stable(0.0);
                    Ok(vec![r as f64, mor_rel_error(&fom, &rom)?, flag(stable), flag(ph)])
                })
                .collect::<Result<_>>()?
        }
    };
    let columns = ["r", "relative_h2_error", "stable", "port_hamiltonian"].map(String::from).to_vec();
    write_table(&cfg.csv_path("mor"), &header, columns, &rows)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn nominal_lti(cfg: &RunConfig) -> Result<LTISystem> {
    let sys = cfg.model.nominal()?;
    Ok(match cfg.common.transform {
        Transform::None => phsg::ph::to_lti(&sys),
        Transform::BasisSqrt => phsg::ph::basis_transform(&sys, Decomposition::Sqrt)?.0.to_lti(),
        Transform::BasisCholesky => phsg::ph::basis_transform(&sys, Decomposition::Cholesky)?.0.to_lti(),
        Transform::Image => phsg::ph::image_transform(&sys)?.to_lti(),
    })
}

fn cmd_bode(cfg: &RunConfig, omega_min: f64, omega_max: f64, points: usize, nominal: bool) -> Result<()> {
    if !(omega_min > 0.0 && omega_max > omega_min) || points < 2 {
        return Err(config_error("need 0 < --omega-min < --omega-max and --points >= 2"));
    }
    let mode = IoMode::from(cfg.common.io_mode);
    let sys = match cfg.common.transform.apply(&cfg.system) {
        _ if nominal => nominal_lti(cfg)?,
        Some(t) => io_restrict(&cfg.sg(&t)?, mode),
        None => {
            let full = assemble_sg_general(&cfg.system, &cfg.basis, cfg.general_quadrature())?;
            let (ins, outs) = io_indices(mode, cfg.system.port_dim(), full.inputs());
            full.select_io(&ins, &outs)
        }
    };
    let fr = bode(&sys, omega_min, omega_max, points)?;
    let mut columns = vec!["omega".to_string()];
    let mut series = Vec::new();
    for i in 0..fr.outputs {
        for j in 0..fr.inputs {
            columns.push(format!("mag_db_y{i}_u{j}"));
            columns.push(format!("phase_deg_y{i}_u{j}"));
            series.push(fr.magnitude_db(i, j));
            series.push(fr.phase_deg(i, j));
        }
    }
    let rows: Vec<Vec<f64>> = (0..fr.omega.len())
        .map(|k| std::iter::once(fr.omega[k]).chain(series.iter().map(|s| s[k])).collect())
        .collect();
    let mut echo = cfg.echo();
    echo["omega_min"] = json!(omega_min);
    echo["omega_max"] = json!(omega_max);
    echo["points"] = json!(points);
    echo["nominal"] = json!(nominal);
    let header = export::provenance("bode", echo);
    write_table(&cfg.csv_path("bode"), &header, columns, &rows)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SgBuild(c) => cmd_sg_build(&RunConfig::new(&c)?),
        Command::Convergence(c) => cmd_convergence(&RunConfig::new(&c)?),
        Command::Simulate { common, t_end, samples, input, oracle_nodes } => {
            cmd_simulate(&RunConfig::new(&common)?, t_end, samples, input, oracle_nodes)
        }
        Command::Mor { common, method, r_min, r_max, sigma0 } => {
            cmd_mor(&RunConfig::new(&common)?, method, r_min, r_max, sigma0)
        }
        Command::Bode { common, omega_min, omega_max, points, nominal } => {
            cmd_bode(&RunConfig::new(&common)?, omega_min, omega_max, points, nominal)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
