//! Batch command-line front end: parameter-space classification grids,
//! potential tabulation, windowed resonance scans, damping-drift tables,
//! symbol-spectrum audits, conformal initial-data solves, and the one-shot
//! verification suite.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use knds::initdata::{solve_conformal, ConformalSeed, RadialDataSet};
use knds::perturbation::{Branch, MasterEquation, ModeSector, ScalarSector, SectorKind, Sign};
use knds::resonance::{constraint_damping_resonance, count_resonances, Window};
use knds::spacetime::{classify_nondegenerate, horizons, BlackHoleParams};
use knds::subprincipal::{radial_audit_csv, trapped_audit_csv};
use knds::verify;
use knds::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Fully resolved run configuration; every output embeds its hash.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    mass: f64,
    charge_e: f64,
    charge_m: f64,
    lambda: f64,
    spin: [f64; 3],
    l: u32,
    l_max: u32,
    sector: SectorArg,
    branch: BranchArg,
    /// [re_lo, re_hi, im_lo, im_hi]; None picks a default window from the
    /// cosmological surface gravity.
    window: Option<[f64; 4]>,
    /// Classification rectangle: lambda range x charge range.
    lambda_range: [f64; 2],
    charge_range: [f64; 2],
    grid: usize,
    tol: f64,
    /// Damping parameters tabulated by the damping command.
    gamma3: Vec<f64>,
    /// Seed amplitude for the initial-data command.
    amplitude: f64,
    /// Worker bound and output path are execution plumbing, not inputs to
    /// the science: they are excluded from the embedded config and its hash
    /// so identical runs produce byte-identical files wherever they land.
    #[serde(skip_serializing)]
    jobs: Option<usize>,
    #[serde(skip_serializing)]
    out: Option<PathBuf>,
    format: Format,
    rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mass: 1.0,
            charge_e: 0.5,
            charge_m: 0.0,
            lambda: 0.06,
            spin: [0.0; 3],
            l: 2,
            l_max: 3,
            sector: SectorArg::Scalar,
            branch: BranchArg::Plus,
            window: None,
            lambda_range: [0.02, 0.21],
            charge_range: [0.0, 1.0],
            grid: 0, // 0 means the per-command default
            tol: 1e-8,
            gamma3: vec![0.005, 0.01, 0.02],
            amplitude: 1e-3,
            jobs: None,
            out: None,
            format: Format::Csv,
            rng_seed: 7,
        }
    }
}

impl RunConfig {
    fn params(&self) -> Result<BlackHoleParams> {
        BlackHoleParams::new(self.lambda, self.mass, self.spin, self.charge_e, self.charge_m)
    }

    fn grid_or(&self, default: usize) -> usize {
        if self.grid == 0 {
            default
        } else {
            self.grid
        }
    }

    fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization");
        let digest = Sha256::digest(json.as_bytes());
        let mut s = String::new();
        for b in &digest[..8] {
            write!(s, "{b:02x}").unwrap();
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, ValueEnum, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum SectorArg {
    Scalar,
    Vector,
    Spherical,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, ValueEnum, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum BranchArg {
    Plus,
    Minus,
    Maxwell,
    WaveControl,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, ValueEnum, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Csv,
    Json,
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "knds",
    version,
    about = "Charged de Sitter black-hole numerics: classification grids, \
             perturbation potentials, resonance scans, symbol spectra, and \
             conformal initial data"
)]
struct Cli {
    #[command(flatten)]
    opts: CommonOpts,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand; explicit flags override the config file.
#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// JSON config file with the same fields as the resolved config
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Black-hole mass
    #[arg(long, global = true)]
    mass: Option<f64>,
    /// Electric charge
    #[arg(long = "charge-e", global = true)]
    charge_e: Option<f64>,
    /// Magnetic charge
    #[arg(long = "charge-m", global = true)]
    charge_m: Option<f64>,
    /// Cosmological constant
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Spin vector "x,y,z" (or a single z component)
    #[arg(long, global = true, value_parser = parse_spin)]
    spin: Option<Spin>,
    /// Angular momentum number
    #[arg(long, global = true)]
    l: Option<u32>,
    /// Largest angular momentum number for scans
    #[arg(long = "l-max", global = true)]
    l_max: Option<u32>,
    /// Perturbation sector
    #[arg(long, global = true, value_enum)]
    sector: Option<SectorArg>,
    /// Master-equation branch
    #[arg(long, global = true, value_enum)]
    branch: Option<BranchArg>,
    /// Frequency window "reLo,reHi,imLo,imHi"
    #[arg(long, global = true, value_parser = parse_window)]
    window: Option<WindowArg>,
    /// Grid resolution / draw count (command specific)
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Solver tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker thread bound (default: KNDS_SPECTRAL_JOBS)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output path (default: stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for all randomized draws
    #[arg(long = "rng-seed", global = true)]
    rng_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug)]
struct Spin([f64; 3]);

fn parse_spin(s: &str) -> std::result::Result<Spin, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [z] => Ok(Spin([0.0, 0.0, *z])),
        [x, y, z] => Ok(Spin([*x, *y, *z])),
        _ => Err("expected 1 or 3 comma-separated components".into()),
    }
}

#[derive(Clone, Copy, Debug)]
struct WindowArg([f64; 4]);

fn parse_window(s: &str) -> std::result::Result<WindowArg, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [a, b, c, d] => Ok(WindowArg([*a, *b, *c, *d])),
        _ => Err("expected reLo,reHi,imLo,imHi".into()),
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Classify a (lambda, charge) parameter grid and tabulate horizon data
    Classify,
    /// Tabulate the master-equation potentials over the exterior region
    Potentials,
    /// Count resonances of every dynamical channel in a frequency window
    QnmScan,
    /// Track the damped spherical mode over a list of damping parameters
    Damping,
    /// Random-draw eigenvalue audit of the model endomorphisms
    Subpr {
        /// Which matrix family the CSV reports (both are always certified)
        #[arg(long, value_enum, default_value = "trapped")]
        family: Family,
    },
    /// Solve the conformal constraint system for a seeded deformation
    Initdata,
    /// Run the full identity suite; exit 0 iff every check passes
    Verify,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Family {
    Trapped,
    Radial,
}

// ---------------------------------------------------------------------------
// Config resolution and output plumbing
// ---------------------------------------------------------------------------

fn resolve_config(opts: &CommonOpts) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &opts.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Usage(format!("bad config {}: {e}", path.display())))?
        }
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = &opts.$field { cfg.$field = v.clone(); })*
        };
    }
    take!(mass, charge_e, charge_m, lambda, l, l_max, sector, branch, grid, tol, format, rng_seed);
    if let Some(Spin(s)) = opts.spin {
        cfg.spin = s;
    }
    if let Some(WindowArg(w)) = opts.window {
        cfg.window = Some(w);
    }
    if let Some(j) = opts.jobs {
        cfg.jobs = Some(j);
    } else if cfg.jobs.is_none() {
        if let Ok(v) = std::env::var("KNDS_SPECTRAL_JOBS") {
            cfg.jobs = v.parse().ok();
        }
    }
    if let Some(p) = &opts.out {
        cfg.out = Some(p.clone());
    }
    Ok(cfg)
}

/// Comment header embedded at the top of every output: version + config.
fn header(cfg: &RunConfig, comment: &str) -> String {
    format!(
        "{comment} knds {} config-hash {}\n{comment} config {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        serde_json::to_string(cfg).expect("config serialization"),
    )
}

fn emit(cfg: &RunConfig, body: &str) -> Result<()> {
    match &cfg.out {
        None => {
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| Error::Io(format!("stdout: {e}")))?;
        }
        Some(path) => {
            fs::write(path, body)
                .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

/// 17 significant digits, RFC-4180-safe (no commas, '.' decimal).
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn complex_json(z: C) -> serde_json::Value {
    serde_json::json!({ "re": z.re, "im": z.im })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_classify(cfg: &RunConfig) -> Result<()> {
    let n = cfg.grid_or(200);
    let [la_lo, la_hi] = cfg.lambda_range;
    let [q_lo, q_hi] = cfg.charge_range;
    if la_lo <= 0.0 || la_hi <= la_lo || q_lo < 0.0 || q_hi < q_lo {
        return Err(Error::Usage(format!(
            "classification grid bounds must satisfy 0 < lambda_lo < lambda_hi and \
             0 <= charge_lo <= charge_hi, got [{la_lo}, {la_hi}] x [{q_lo}, {q_hi}]"
        )));
    }
    let mut out = header(cfg, "#");
    out.push_str("lambda,charge,verdict,r_minus,r_plus,r_photon,kappa_minus,kappa_plus\n");
    let coord = |lo: f64, hi: f64, i: usize| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    for i in 0..n {
        let la = coord(la_lo, la_hi, i);
        for j in 0..n {
            let q = coord(q_lo, q_hi, j);
            let verdict = classify_nondegenerate(la, cfg.mass, q)?;
            if verdict.is_nondegenerate() {
                let p = BlackHoleParams::static_params(la, cfg.mass, q, 0.0)?;
                let hz = horizons(&p)?;
                writeln!(
                    out,
                    "{},{},nondegenerate,{},{},{},{},{}",
                    real(la),
                    real(q),
                    real(hz.r_minus),
                    real(hz.r_plus),
                    real(hz.r_photon()),
                    real(hz.kappa_minus),
                    real(hz.kappa_plus),
                )
                .unwrap();
            } else {
                writeln!(out, "{},{},degenerate,,,,,", real(la), real(q)).unwrap();
            }
        }
    }
    emit(cfg, &out)
}

fn branch_of(cfg: &RunConfig) -> Result<(SectorKind, Branch)> {
    let kind = match (cfg.sector, cfg.l) {
        (SectorArg::Scalar, 0) => {
            return Err(Error::Usage(
                "the scalar sector starts at l = 1; l = 0 is the spherical sector".into(),
            ))
        }
        (SectorArg::Scalar, 1) => SectorKind::ScalarDipole,
        (SectorArg::Scalar, _) => SectorKind::ScalarHigh,
        (SectorArg::Vector, 0) => {
            return Err(Error::Usage(
                "the vector sector starts at l = 1; l = 0 is the spherical sector".into(),
            ))
        }
        (SectorArg::Vector, 1) => SectorKind::VectorDipole,
        (SectorArg::Vector, _) => SectorKind::VectorHigh,
        (SectorArg::Spherical, 0) => SectorKind::Spherical,
        (SectorArg::Spherical, l) => {
            return Err(Error::Usage(format!("the spherical sector requires l = 0, got {l}")))
        }
    };
    let branch = match cfg.branch {
        BranchArg::Plus => Branch::Plus,
        BranchArg::Minus => Branch::Minus,
        BranchArg::Maxwell => Branch::MaxwellAux,
        BranchArg::WaveControl => Branch::ScalarWaveControl,
    };
    Ok((kind, branch))
}

fn cmd_potentials(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params()?;
    let (kind, _) = branch_of(cfg)?;
    let hz = horizons(&p)?;
    let n = cfg.grid_or(512);
    let span = hz.r_plus - hz.r_minus;
    let mut out = header(cfg, "#");
    let mut rows: Vec<String> = Vec::with_capacity(n);
    match kind {
        SectorKind::ScalarHigh | SectorKind::ScalarDipole => {
            out.push_str("r,v_plus,v_minus,vtilde_plus,vtilde_minus\n");
            let sec = ScalarSector::new(&p, cfg.l)?;
            for i in 1..=n {
                let r = hz.r_minus + span * i as f64 / (n + 1) as f64;
                rows.push(format!(
                    "{},{},{},{},{}",
                    real(r),
                    real(sec.v_pm(Sign::Plus, r)),
                    real(sec.v_pm(Sign::Minus, r)),
                    real(sec.vtilde_pm(Sign::Plus, r)),
                    real(sec.vtilde_pm(Sign::Minus, r)),
                ));
            }
        }
        _ => {
            out.push_str("r,v\n");
            let (_, branch) = branch_of(cfg)?;
            let eq = MasterEquation::new(&p, ModeSector::new(kind, cfg.l)?, branch)?;
            for i in 1..=n {
                let r = hz.r_minus + span * i as f64 / (n + 1) as f64;
                rows.push(format!("{},{}", real(r), real(eq.potential(r)?)));
            }
        }
    }
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    emit(cfg, &out)
}

fn cmd_qnm_scan(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params()?;
    let kappa = horizons(&p)?.kappa_plus;
    let w = cfg
        .window
        .unwrap_or([-3.0 * kappa, 3.0 * kappa, 1e-3 * kappa, 3.0 * kappa]);
    let window = Window::new(w[0], w[1], w[2], w[3])?;
    let mut reports = Vec::new();
    match cfg.sector {
        SectorArg::Scalar | SectorArg::Vector => {
            let ls: Vec<u32> = (1..=cfg.l_max.max(1)).collect();
            for l in ls {
                let kind = match (cfg.sector, l) {
                    (SectorArg::Scalar, 1) => SectorKind::ScalarDipole,
                    (SectorArg::Scalar, _) => SectorKind::ScalarHigh,
                    (SectorArg::Vector, 1) => SectorKind::VectorDipole,
                    (SectorArg::Vector, _) => SectorKind::VectorHigh,
                    _ => unreachable!(),
                };
                for branch in [Branch::Plus, Branch::Minus] {
                    let eq = MasterEquation::new(&p, ModeSector::new(kind, l)?, branch)?;
                    reports.push(count_resonances(&eq, window, 256)?);
                }
            }
        }
        SectorArg::Spherical => {
            let eq = MasterEquation::new(
                &p,
                ModeSector::new(SectorKind::Spherical, 0)?,
                Branch::ScalarWaveControl,
            )?;
            reports.push(count_resonances(&eq, window, 256)?);
        }
    }
    let stable = reports.iter().all(|r| r.winding == 0);
    let doc = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": cfg,
        "stable": stable,
        "reports": reports,
    });
    emit(cfg, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))
}

fn cmd_damping(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params()?;
    let mut rows = Vec::new();
    for &g in &cfg.gamma3 {
        let s = constraint_damping_resonance(&p, g)?;
        let slope = if g == 0.0 { 0.0 } else { s.im / g };
        rows.push(serde_json::json!({
            "gamma3": g,
            "sigma": complex_json(s),
            "slope": slope,
        }));
    }
    let doc = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": cfg,
        "rows": rows,
    });
    emit(cfg, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))
}

fn cmd_subpr(cfg: &RunConfig, family: Family) -> Result<()> {
    let draws = cfg.grid_or(1000);
    // Both families are always certified; the CSV reports the requested one.
    let trapped = trapped_audit_csv(cfg.rng_seed, draws)?;
    let radial = radial_audit_csv(cfg.rng_seed, draws)?;
    let body = match family {
        Family::Trapped => trapped,
        Family::Radial => radial,
    };
    emit(cfg, &format!("{}{}", header(cfg, "#"), body))
}

fn cmd_initdata(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params()?;
    let data = RadialDataSet::static_slice(&p, cfg.grid_or(256))?;
    let (a, b) = (data.grid[0], data.grid[data.grid.len() - 1]);
    let (center, width) = (0.5 * (a + b), 0.18 * (b - a));
    let amp = cfg.amplitude;
    let bump = move |r: f64| {
        let x = (r - center) / width;
        if x.abs() < 1.0 {
            amp * (1.0 - x * x).powi(8)
        } else {
            0.0
        }
    };
    let seed = ConformalSeed::new(&data, &|_| 0.0, &bump, 0.5 * amp, &|_| 0.0, &|_| 0.0)?;
    let sol = solve_conformal(&data, &seed, p.lambda, cfg.tol)?;
    match cfg.format {
        Format::Json => {
            let doc = serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "config_hash": cfg.hash(),
                "config": cfg,
                "solution": serde_json::from_str::<serde_json::Value>(&sol.to_json())
                    .expect("solution serialization"),
            });
            emit(cfg, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))
        }
        Format::Csv => emit(cfg, &format!("{}{}", header(cfg, "#"), sol.profile_csv())),
    }
}

fn cmd_verify(cfg: &RunConfig) -> Result<bool> {
    let mut out = header(cfg, "#");
    out.push_str("check,status,detail\n");
    let mut all_ok = true;
    for check in verify::checks() {
        let t = std::time::Instant::now();
        let o = verify::run_check(check.name, cfg.rng_seed)?;
        // Timing goes to stderr only: the ledger must be byte-deterministic.
        eprintln!("{:<26} {:.1}s", o.name, t.elapsed().as_secs_f64());
        all_ok &= o.passed;
        writeln!(
            out,
            "{},{},{}",
            o.name,
            if o.passed { "pass" } else { "fail" },
            csv_quote(&o.detail)
        )
        .unwrap();
    }
    emit(cfg, &out)?;
    Ok(all_ok)
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve_config(&cli.opts)?;
    if let Some(jobs) = cfg.jobs {
        // Best effort: the pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.cmd {
        Cmd::Classify => cmd_classify(&cfg).map(|_| true),
        Cmd::Potentials => cmd_potentials(&cfg).map(|_| true),
        Cmd::QnmScan => cmd_qnm_scan(&cfg).map(|_| true),
        Cmd::Damping => cmd_damping(&cfg).map(|_| true),
        Cmd::Subpr { family } => cmd_subpr(&cfg, family).map(|_| true),
        Cmd::Initdata => cmd_initdata(&cfg).map(|_| true),
        Cmd::Verify => cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(4)
        }
        Err(e) => {
            let doc = serde_json::json!({ "error": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{doc}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
