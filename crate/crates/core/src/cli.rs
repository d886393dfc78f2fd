//! Command-line driver: single computations and parameter sweeps, reported as
//! CSV run records.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::metrics::relative_rms_error;
use crate::oracle::{kspace_direct, OracleConfig};
use crate::params::{select_cutoff, ParamRequest, SeParams};
use crate::potential::{total_potential, Potential};
use crate::realspace::{real_space_sum, self_term};
use crate::system::{generate_random_system, ParticleSystem, Periodicity};
use crate::windows::WindowKind;

#[derive(Debug, Parser)]
#[command(name = "sewald", version, about = "Spectral Ewald potentials of point charges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the potential of one system.
    Compute(ComputeArgs),
    /// Repeat a computation over a range of one parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Number of periodic directions.
    #[arg(long = "D", default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub d: u8,
    /// Particles of the generated system.
    #[arg(long = "N", default_value_t = 100)]
    pub n: usize,
    /// Box length of the generated system.
    #[arg(long = "L", default_value_t = 1.0)]
    pub l: f64,
    #[arg(long, default_value_t = 6.3)]
    pub xi: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    /// Grid points per periodic axis.
    #[arg(long = "M")]
    pub grid: Option<usize>,
    /// Window support points.
    #[arg(long = "P")]
    pub support: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowArg::Bm)]
    pub window: WindowArg,
    /// Shape of the Kaiser-Bessel and Barnett-Magland windows.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Shape of the Gaussian window.
    #[arg(long = "m")]
    pub gauss_m: Option<f64>,
    /// Real-space cutoff.
    #[arg(long)]
    pub rc: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    /// Largest upsampled periodic mode index.
    #[arg(long = "ni")]
    pub n_i: Option<usize>,
    /// Truncation radius of the free-space kernel.
    #[arg(long = "R")]
    pub r: Option<f64>,
    /// Points added to the estimated window support.
    #[arg(long, default_value_t = 2)]
    pub p_margin: usize,
    /// Upsample the free-space zero mode instead of using the precomputed kernel.
    #[arg(long)]
    pub no_precompute: bool,
    /// Choose every parameter from `xi` and `eps`; other grid flags are refused.
    #[arg(long)]
    pub auto: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Particle file (`x y z q` lines, optional `L <value>` header).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Compare against the reference sums.
    #[arg(long)]
    pub check_oracle: bool,
    /// Add the precomputation time to the total.
    #[arg(long)]
    pub include_precompute: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Per-particle potentials.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run record CSV (default: standard output).
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub sweep: SweepAxis,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub step: f64,
    /// CSV output (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Gaussian,
    Kb,
    Bm,
}

impl From<WindowArg> for WindowKind {
    fn from(w: WindowArg) -> Self {
        match w {
            WindowArg::Gaussian => WindowKind::Gaussian,
            WindowArg::Kb => WindowKind::KaiserBessel,
            WindowArg::Bm => WindowKind::BarnettMagland,
        }
    }
}

/// Swept parameter. `eps` steps through the base-10 exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    #[value(name = "P")]
    P,
    #[value(name = "beta")]
    Beta,
    #[value(name = "eps")]
    Eps,
    #[value(name = "N")]
    N,
}

pub const COLUMNS: [&str; 28] = [
    "D",
    "N",
    "L",
    "seed",
    "xi",
    "rc",
    "M",
    "P",
    "window",
    "shape",
    "s0",
    "s",
    "s0_eff",
    "s_eff",
    "n_i",
    "R",
    "eps",
    "rms_error",
    "t_spread",
    "t_aft",
    "t_scale",
    "t_aift",
    "t_gather",
    "t_realspace",
    "t_precompute",
    "t_total",
    "transformed_points",
    "precompute",
];

/// One CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub periodicity: Periodicity,
    pub n: usize,
    pub box_len: f64,
    pub seed: u64,
    pub params: SeParams,
    pub rms_error: Option<f64>,
    pub t_realspace: f64,
    pub timings: crate::sekspace::Timings,
    pub transformed_points: usize,
    pub include_precompute: bool,
}

impl RunRecord {
    pub fn total_time(&self) -> f64 {
        let t = &self.timings;
        let pre = if self.include_precompute { t.precompute } else { 0.0 };
        t.spread + t.aft + t.scale + t.aift + t.gather + self.t_realspace + pre
    }

    pub fn fields(&self) -> Vec<String> {
        let p = &self.params;
        let t = &self.timings;
        let per = self.periodicity;
        let e = |v: f64| format!("{v:e}");
        vec![
            per.periodic_dims().to_string(),
            self.n.to_string(),
            e(self.box_len),
            self.seed.to_string(),
            e(p.xi),
            e(p.rc),
            p.m.to_string(),
            p.p.to_string(),
            p.window.name().to_string(),
            e(p.shape),
            e(p.s0),
            e(p.s),
            e(p.effective(p.s0)),
            e(p.effective(p.s)),
            p.n_i.to_string(),
            e(p.r),
            e(p.eps),
            self.rms_error.map_or_else(|| "nan".to_string(), e),
            e(t.spread),
            e(t.aft),
            e(t.scale),
            e(t.aift),
            e(t.gather),
            e(self.t_realspace),
            e(t.precompute),
            e(self.total_time()),
            self.transformed_points.to_string(),
            (per == Periodicity::FREE && p.precompute).to_string(),
        ]
    }
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Preamble, header and rows.
pub fn write_records<W: Write>(out: W, records: &[RunRecord], command: &str) -> Result<()> {
    let mut out = out;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    writeln!(out, "# sewald {} {command}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# git {}", git_hash())?;
    writeln!(out, "# threads {}", rayon::current_num_threads())?;
    writeln!(out, "# unix_time {stamp}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record(r.fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}

impl RunArgs {
    fn periodicity(&self) -> Periodicity {
        Periodicity::new(self.d).expect("range checked by the parser")
    }

    fn check(&self) -> Result<()> {
        if self.auto
            && (self.grid.is_some()
                || self.support.is_some()
                || self.beta.is_some()
                || self.gauss_m.is_some()
                || self.rc.is_some()
                || self.s0.is_some()
                || self.s.is_some()
                || self.n_i.is_some()
                || self.r.is_some())
        {
            return Err(Error::InvalidArgument("--auto takes only --xi and --eps".into()));
        }
        if self.beta.is_some() && self.gauss_m.is_some() {
            return Err(Error::InvalidArgument("give --beta or --m, not both".into()));
        }
        Ok(())
    }

    fn request(&self) -> ParamRequest {
        let mut req = ParamRequest::new(self.xi, self.eps).window(self.window.into());
        req.m = self.grid;
        req.p = self.support;
        req.shape = match self.window {
            WindowArg::Gaussian => self.gauss_m.or(self.beta),
            _ => self.beta.or(self.gauss_m),
        };
        req.rc = self.rc;
        req.s0 = self.s0;
        req.s = self.s;
        req.n_i = self.n_i;
        req.r = self.r;
        req.p_margin = self.p_margin;
        req.precompute = !self.no_precompute;
        req
    }

    fn system(&self, n: usize) -> Result<ParticleSystem> {
        match &self.input {
            Some(path) => ParticleSystem::read_file(path),
            None => generate_random_system(n, self.l, self.seed),
        }
    }
}

/// Reference potential: real space converged to double precision plus the
/// closed-form Fourier sums.
pub fn reference_potential(system: &ParticleSystem, xi: f64, per: Periodicity) -> Result<Vec<f64>> {
    let rc = select_cutoff(xi, 1e-17)?;
    let real = real_space_sum(system, xi, rc, per)?;
    let cfg = OracleConfig::reference(xi, system.box_len());
    let k = kspace_direct(system, xi, per, cfg.kmax)?;
    Ok(real
        .iter()
        .zip(&k)
        .zip(system.charges())
        .map(|((r, f), &q)| r + f + self_term(q, xi))
        .collect())
}

fn run_one(
    args: &RunArgs,
    system: &ParticleSystem,
    req: &ParamRequest,
    check: bool,
) -> Result<(RunRecord, Potential)> {
    let per = args.periodicity();
    let params = req.resolve(system, per)?;
    let pot = total_potential(system, &params, per)?;
    let rms_error = if check {
        let want = reference_potential(system, params.xi, per)?;
        Some(relative_rms_error(&pot.phi, &want)?)
    } else {
        None
    };
    let record = RunRecord {
        periodicity: per,
        n: system.len(),
        box_len: system.box_len(),
        seed: args.seed,
        params,
        rms_error,
        t_realspace: pot.t_realspace,
        timings: pot.timings,
        transformed_points: pot.transformed_points,
        include_precompute: args.include_precompute,
    };
    Ok((record, pot))
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

pub fn cmd_compute(args: &ComputeArgs) -> Result<()> {
    args.run.check()?;
    let system = args.run.system(args.run.n)?;
    let (record, pot) = run_one(&args.run, &system, &args.run.request(), args.run.check_oracle)?;
    if let Some(path) = &args.out {
        let mut out = io::BufWriter::new(File::create(path)?);
        writeln!(out, "index,x,y,z,q,phi")?;
        for (i, (x, q)) in system.positions().iter().zip(system.charges()).enumerate() {
            writeln!(out, "{i},{:e},{:e},{:e},{:e},{:e}", x[0], x[1], x[2], q, pot.phi[i])?;
        }
        out.flush()?;
    }
    write_records(open_out(&args.record)?, &[record], "compute")
}

/// Sweep values from `from` to `to` inclusive.
pub fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(Error::InvalidArgument(format!("bad sweep range {from}..{to} step {step}")));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let run = &args.run;
    run.check()?;
    let values = sweep_values(args.from, args.to, args.step)?;
    let fixed = match args.sweep {
        SweepAxis::N => None,
        _ => Some(run.system(run.n)?),
    };
    let mut records = Vec::with_capacity(values.len());
    for v in values {
        let mut req = run.request();
        let owned;
        let system = match &fixed {
            Some(s) => s,
            None => {
                owned = run.system(v.round() as usize)?;
                &owned
            }
        };
        match args.sweep {
            SweepAxis::P => {
                req.p = Some(v.round() as usize);
                req.shape = None;
                if let (Some(b), WindowArg::Kb | WindowArg::Bm) = (run.beta, run.window) {
                    req.shape = Some(b);
                }
            }
            SweepAxis::Beta => req.shape = Some(v),
            SweepAxis::Eps => req.eps = 10f64.powf(v),
            SweepAxis::N => {}
        }
        let (record, _) = run_one(run, system, &req, true)?;
        log::info!("{:?}={v}: rms error {:e}", args.sweep, record.rms_error.unwrap_or(f64::NAN));
        records.push(record);
    }
    write_records(open_out(&args.out)?, &records, "sweep")
}

/// Exit status of a failed command: 2 for bad arguments, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match &cli.command {
        Command::Compute(a) => a.run.threads,
        Command::Sweep(a) => a.run.threads,
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return 1;
        }
    }
    let result = match &cli.command {
        Command::Compute(a) => cmd_compute(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_match_fields() {
        let s = generate_random_system(4, 1.0, 1).unwrap();
        let params = ParamRequest::new(6.3, 1e-6).resolve(&s, Periodicity::TRIPLY).unwrap();
        let r = RunRecord {
            periodicity: Periodicity::TRIPLY,
            n: 4,
            box_len: 1.0,
            seed: 1,
            params,
            rms_error: None,
            t_realspace: 0.0,
            timings: Default::default(),
            transformed_points: 0,
            include_precompute: false,
        };
        assert_eq!(r.fields().len(), COLUMNS.len());
        assert_eq!(r.fields()[17], "nan");
    }

    #[test]
    fn sweep_ranges() {
        assert_eq!(sweep_values(4.0, 16.0, 2.0).unwrap().len(), 7);
        assert_eq!(sweep_values(-4.0, -12.0, 2.0).is_err(), true);
        let v = sweep_values(0.5, 1.0, 0.1).unwrap();
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn parser_limits() {
        assert!(Cli::try_parse_from(["sewald", "compute", "--D", "4"]).is_err());
        assert!(Cli::try_parse_from(["sewald", "compute", "--D", "2", "--M", "20", "--m", "3.1"]).is_ok());
        assert!(Cli::try_parse_from(["sewald", "sweep", "--sweep", "P", "--from", "4", "--to", "8", "--step", "1"]).is_ok());
        assert_eq!(run(["sewald", "compute", "--D", "7"]), 2);
    }

    #[test]
    fn auto_refuses_grid_flags() {
        let cli = Cli::try_parse_from(["sewald", "compute", "--auto", "--M", "20"]).unwrap();
        let Command::Compute(a) = cli.command else { panic!() };
        assert!(matches!(a.run.check(), Err(Error::InvalidArgument(_))));
    }
}
