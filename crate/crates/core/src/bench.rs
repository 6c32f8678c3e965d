//! Experiment drivers behind the command-line tool: phase-transition and
//! noise sweeps over seeded Gaussian instances, Fourier image reconstruction
//! and certificate audits. Tables are emitted as CSV with a fixed column
//! order; summaries as JSON.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificate::check_certificate_with;
use crate::dense::{solve_lifted, DenseConfig};
use crate::eigen::EigenConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::increpr::{repeated_restart, restart_solve, ParamScale, Rank1Method, RestartConfig};
use crate::linalg::{CMat, C64};
use crate::measurement::{
    load_dense_ensemble, load_factor, make_fourier_ensemble, make_gaussian_ensemble, random_factor, random_signal,
    ComplexFactor, MeasurementEnsemble, ScalarField,
};
use crate::metrics::{add_gaussian_noise, align_fourier, recovery_rate, relerr_phase, TrialOutcome};
use crate::objective::{gradient, value, Fidelity, ObjectiveSpec};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    PhaseTransition,
    NoiseSweep,
    Fourier,
    CertAudit,
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "solve" => Experiment::Solve,
            "phase-transition" => Experiment::PhaseTransition,
            "noise-sweep" => Experiment::NoiseSweep,
            "fourier" => Experiment::Fourier,
            "cert-audit" => Experiment::CertAudit,
            other => return Err(Error::arg(format!("unknown experiment `{other}`"))),
        })
    }
}

/// Settings shared by all experiments. Solver parameters left as `None`
/// fall back to the defaults of [`RestartConfig`] for the instance type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub n: usize,
    /// Ratios `m / n` for phase-transition sweeps.
    pub m_grid: Vec<f64>,
    /// Ratio `m / n` for single-ratio experiments.
    pub m_over_n: f64,
    pub field: ScalarField,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub fidelity: Option<Fidelity>,
    pub lambda0: Option<f64>,
    pub eps_stage: Option<[f64; 3]>,
    pub param_scale: Option<ParamScale>,
    pub repeats: Option<usize>,
    pub rank1: Option<Rank1Method>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub stage_one_only: bool,
    pub snr_db: Vec<f64>,
    pub image: Option<PathBuf>,
    pub image_size: usize,
    pub starts: usize,
    pub ensemble: Option<PathBuf>,
    pub factor: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub lambda: f64,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    /// Fill the runtime column; off by default so outputs are reproducible.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            n: 64,
            m_grid: (0..=10).map(|k| 1.0 + 0.2 * k as f64).map(|r| (r * 10.0).round() / 10.0).collect(),
            m_over_n: 3.0,
            field: ScalarField::Real,
            trials: 20,
            seed: 1,
            threads: 0,
            fidelity: None,
            lambda0: None,
            eps_stage: None,
            param_scale: None,
            repeats: None,
            rank1: None,
            max_iters: None,
            grad_tol: None,
            stage_one_only: false,
            snr_db: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            image: None,
            image_size: 32,
            starts: 10,
            ensemble: None,
            factor: None,
            truth: None,
            lambda: 0.0,
            epsilon: None,
            out: None,
            timing: false,
        }
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::arg(format!("`{s}` is not a number"))))
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::arg(format!("bad value `{v}` for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::arg(format!("bad boolean `{v}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Sets one documented key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = Some(v.parse()?),
            "n" => self.n = parse_num(key, v)?,
            "m_grid" => self.m_grid = parse_list(v)?,
            "m_over_n" => self.m_over_n = parse_num(key, v)?,
            "field" => self.field = v.parse()?,
            "trials" => self.trials = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            "fidelity" => self.fidelity = Some(v.parse()?),
            "lambda0" => self.lambda0 = Some(parse_num(key, v)?),
            "eps_stage" => {
                let e = parse_list(v)?;
                let arr: [f64; 3] = e.try_into().map_err(|_| Error::arg("eps_stage needs exactly three values"))?;
                self.eps_stage = Some(arr);
            }
            "param_scale" => self.param_scale = Some(v.parse()?),
            "repeats" => self.repeats = Some(parse_num(key, v)?),
            "rank1" => self.rank1 = Some(v.parse()?),
            "max_iters" => self.max_iters = Some(parse_num(key, v)?),
            "grad_tol" => self.grad_tol = Some(parse_num(key, v)?),
            "stage_one_only" => self.stage_one_only = parse_bool(key, v)?,
            "snr_db" => self.snr_db = parse_list(v)?,
            "image" => self.image = Some(PathBuf::from(v)),
            "image_size" => self.image_size = parse_num(key, v)?,
            "starts" => self.starts = parse_num(key, v)?,
            "ensemble" => self.ensemble = Some(PathBuf::from(v)),
            "factor" => self.factor = Some(PathBuf::from(v)),
            "truth" => self.truth = Some(PathBuf::from(v)),
            "lambda" => self.lambda = parse_num(key, v)?,
            "epsilon" => self.epsilon = Some(parse_num(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "timing" => self.timing = parse_bool(key, v)?,
            other => return Err(Error::arg(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: PathBuf::new(),
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse { path: PathBuf::new(), line: i + 1, msg: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse { path: path.to_path_buf(), line, msg },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::arg("n and trials must be >= 1"));
        }
        if self.m_grid.is_empty() || self.m_grid.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::arg("m_grid entries must be positive"));
        }
        if !(self.m_over_n > 0.0) {
            return Err(Error::arg("m_over_n must be positive"));
        }
        if self.starts == 0 || self.image_size < 2 {
            return Err(Error::arg("starts must be >= 1 and image_size >= 2"));
        }
        Ok(())
    }

    /// Restart configuration for Gaussian instances of this experiment.
    pub fn gaussian_restart(&self) -> RestartConfig {
        self.apply_overrides(RestartConfig::gaussian(self.field))
    }

    pub fn fourier_restart(&self) -> RestartConfig {
        self.apply_overrides(RestartConfig::fourier())
    }

    fn apply_overrides(&self, mut rc: RestartConfig) -> RestartConfig {
        if let Some(f) = self.fidelity {
            rc.fidelity = f;
        }
        if let Some(l) = self.lambda0 {
            rc.lambda0 = l;
        }
        if let Some(e) = self.eps_stage {
            rc.eps_stage = e;
        }
        if let Some(s) = self.param_scale {
            rc.param_scale = s;
        }
        if let Some(k) = self.repeats {
            rc.repeats = k;
        }
        if let Some(r) = self.rank1 {
            rc.rank1 = r;
        }
        for inner in rc.inner.iter_mut() {
            if let Some(it) = self.max_iters {
                inner.max_iters = it;
            }
            if let Some(t) = self.grad_tol {
                inner.grad_tol = t;
            }
        }
        rc.stage_one_only = self.stage_one_only;
        rc
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::arg(format!("thread pool: {e}")))
    }
}

/// Planted Gaussian instance: signal, noiseless ensemble and a one-column
/// random start, all derived from `seed`.
pub fn planted_instance(n: usize, m: usize, field: ScalarField, seed: u64) -> Result<(MeasurementEnsemble, Vec<C64>, ComplexFactor)> {
    let x = random_signal(n, field, derive_seed(seed, &[0]));
    let ens = make_gaussian_ensemble(n, m, field, derive_seed(seed, &[1]))?.with_planted(&x)?;
    let y0 = random_factor(n, 1, field, derive_seed(seed, &[2]))?;
    Ok((ens, x, y0))
}

fn ratio_to_m(n: usize, r: f64) -> usize {
    ((r * n as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub outcome: TrialOutcome,
    pub stage_one: TrialOutcome,
    pub termination_p: usize,
    pub runtime_ms: f64,
    pub failed: bool,
}

fn run_trial(
    n: usize,
    m: usize,
    field: ScalarField,
    seed: u64,
    rc: &RestartConfig,
    noise: Option<(f64, u64)>,
) -> TrialResult {
    let start = Instant::now();
    let ratio = m as f64 / n as f64;
    let attempt = || -> Result<(f64, f64, usize)> {
        let (mut ens, x, y0) = planted_instance(n, m, field, seed)?;
        if let Some((snr, noise_seed)) = noise {
            let noisy = add_gaussian_noise(ens.b(), snr, noise_seed, rc.fidelity == Fidelity::Poisson)?;
            ens = ens.with_noisy_intensities(noisy.b)?;
        }
        let out = restart_solve(&ens, rc, &y0)?;
        let p1 = out.record.stage_termination_p.first().copied().unwrap_or(1);
        Ok((relerr_phase(&out.signal, &x)?, relerr_phase(&out.stage_one_signal, &x)?, p1))
    };
    let (e, e1, p, failed) = match attempt() {
        Ok((e, e1, p)) => (e, e1, p, false),
        Err(_) => (f64::INFINITY, f64::INFINITY, 0, true),
    };
    TrialResult {
        outcome: TrialOutcome::new(e, seed, ratio),
        stage_one: TrialOutcome::new(e1, seed, ratio),
        termination_p: p,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        failed,
    }
}

fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseRow {
    pub m_over_n: f64,
    pub m: usize,
    pub trials: usize,
    pub recovery_rate: f64,
    pub recovery_rate_stage_one: f64,
    pub mean_relerr: f64,
    pub mean_relerr_stage_one: f64,
    pub mean_termination_p: f64,
    pub max_termination_p: usize,
    pub failures: usize,
    pub mean_runtime_ms: Option<f64>,
}

pub const PHASE_COLUMNS: &str = "m_over_n,m,trials,recovery_rate,recovery_rate_stage_one,mean_relerr,mean_relerr_stage_one,mean_termination_p,max_termination_p,failures,mean_runtime_ms";

impl PhaseRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e},{},{},{},{}",
            self.m_over_n,
            self.m,
            self.trials,
            self.recovery_rate,
            self.recovery_rate_stage_one,
            self.mean_relerr,
            self.mean_relerr_stage_one,
            self.mean_termination_p,
            self.max_termination_p,
            self.failures,
            opt_ms(self.mean_runtime_ms)
        )
    }
}

fn opt_ms(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.1}"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseTable {
    pub rows: Vec<PhaseRow>,
    pub trials: Vec<Vec<TrialResult>>,
}

fn emit(sink: &mut dyn Write, line: &str) -> Result<()> {
    if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
        let _ = writeln!(sink, "# partial=true");
        return Err(e.into());
    }
    Ok(())
}

/// Recovery statistics per `m / n` in `cfg.m_grid`; rows are written to
/// `sink` as each grid point completes.
pub fn run_phase_transition(cfg: &ExperimentConfig, sink: &mut dyn Write) -> Result<PhaseTable> {
    cfg.validate()?;
    let rc = cfg.gaussian_restart();
    rc.validate()?;
    let pool = cfg.pool()?;
    emit(sink, PHASE_COLUMNS)?;
    let mut table = PhaseTable { rows: Vec::new(), trials: Vec::new() };
    for (mi, &ratio) in cfg.m_grid.iter().enumerate() {
        let m = ratio_to_m(cfg.n, ratio);
        let results: Vec<TrialResult> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(cfg.n, m, cfg.field, derive_seed(cfg.seed, &[mi as u64, t as u64]), &rc, None))
                .collect()
        });
        let full: Vec<TrialOutcome> = results.iter().map(|r| r.outcome).collect();
        let first: Vec<TrialOutcome> = results.iter().map(|r| r.stage_one).collect();
        let row = PhaseRow {
            m_over_n: ratio,
            m,
            trials: cfg.trials,
            recovery_rate: recovery_rate(&full)?,
            recovery_rate_stage_one: recovery_rate(&first)?,
            mean_relerr: finite_mean(full.iter().map(|o| o.relerr)),
            mean_relerr_stage_one: finite_mean(first.iter().map(|o| o.relerr)),
            mean_termination_p: finite_mean(results.iter().filter(|r| !r.failed).map(|r| r.termination_p as f64)),
            max_termination_p: results.iter().map(|r| r.termination_p).max().unwrap_or(0),
            failures: results.iter().filter(|r| r.failed).count(),
            mean_runtime_ms: cfg.timing.then(|| finite_mean(results.iter().map(|r| r.runtime_ms))),
        };
        emit(sink, &row.csv())?;
        table.rows.push(row);
        table.trials.push(results);
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub snr_db: f64,
    pub m_over_n: f64,
    pub trials: usize,
    pub mean_relerr: f64,
    pub recovery_rate: f64,
    pub failures: usize,
    pub mean_runtime_ms: Option<f64>,
}

pub const NOISE_COLUMNS: &str = "snr_db,m_over_n,trials,mean_relerr,recovery_rate,failures,mean_runtime_ms";

/// Mean error per SNR level at `cfg.m_over_n`. The same planted instances
/// are reused across levels; only the noise draw changes.
pub fn run_noise_sweep(cfg: &ExperimentConfig, sink: &mut dyn Write) -> Result<Vec<NoiseRow>> {
    cfg.validate()?;
    if cfg.snr_db.is_empty() {
        return Err(Error::arg("snr_db list is empty"));
    }
    let rc = cfg.gaussian_restart();
    rc.validate()?;
    let pool = cfg.pool()?;
    let m = ratio_to_m(cfg.n, cfg.m_over_n);
    emit(sink, NOISE_COLUMNS)?;
    let mut rows = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let results: Vec<TrialResult> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let inst = derive_seed(cfg.seed, &[0, t as u64]);
                    let noise = derive_seed(cfg.seed, &[1 + si as u64, t as u64]);
                    run_trial(cfg.n, m, cfg.field, inst, &rc, Some((snr, noise)))
                })
                .collect()
        });
        let outcomes: Vec<TrialOutcome> = results.iter().map(|r| r.outcome).collect();
        let row = NoiseRow {
            snr_db: snr,
            m_over_n: cfg.m_over_n,
            trials: cfg.trials,
            mean_relerr: finite_mean(outcomes.iter().map(|o| o.relerr)),
            recovery_rate: recovery_rate(&outcomes)?,
            failures: results.iter().filter(|r| r.failed).count(),
            mean_runtime_ms: cfg.timing.then(|| finite_mean(results.iter().map(|r| r.runtime_ms))),
        };
        emit(
            sink,
            &format!(
                "{},{},{},{:e},{},{},{}",
                row.snr_db,
                row.m_over_n,
                row.trials,
                row.mean_relerr,
                row.recovery_rate,
                row.failures,
                opt_ms(row.mean_runtime_ms)
            ),
        )?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierStart {
    pub seed: u64,
    pub errors: Vec<f64>,
    pub final_error: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierReport {
    pub rows: usize,
    pub cols: usize,
    pub source: String,
    pub repeats: usize,
    pub rank1: Rank1Method,
    pub starts: Vec<FourierStart>,
    pub mean_per_repeat: Vec<f64>,
    pub mean_final_error: f64,
    /// Index into `starts` of the reconstruction that was written out.
    pub best_start: usize,
    pub mean_runtime_ms: Option<f64>,
}

pub fn fourier_image(cfg: &ExperimentConfig) -> Result<(Image, String)> {
    match &cfg.image {
        Some(p) => Ok((Image::read_pgm(p)?, p.display().to_string())),
        None => Ok((Image::synthetic_scene(cfg.image_size, cfg.image_size), format!("synthetic {0}x{0}", cfg.image_size))),
    }
}

/// Repeated-restart reconstructions from `cfg.starts` random integer
/// starts. Returns the report and the aligned best reconstruction.
pub fn run_fourier(cfg: &ExperimentConfig) -> Result<(FourierReport, Image)> {
    cfg.validate()?;
    let (img, source) = fourier_image(cfg)?;
    let ens = make_fourier_ensemble(&img)?;
    let rc = cfg.fourier_restart();
    rc.validate()?;
    let pool = cfg.pool()?;
    let runs: Vec<Result<(FourierStart, Vec<C64>, f64)>> = pool.install(|| {
        (0..cfg.starts)
            .into_par_iter()
            .map(|s| {
                let t0 = Instant::now();
                let seed = derive_seed(cfg.seed, &[s as u64]);
                let out = repeated_restart(&ens, &rc, seed, Some(&img))?;
                let final_error = out.errors.last().copied().unwrap_or(f64::NAN);
                let inner_iterations = out.records.iter().map(|r| r.total_inner_iterations).sum();
                let start = FourierStart { seed, errors: out.errors, final_error, inner_iterations };
                Ok((start, out.signal, t0.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    });
    let mut starts = Vec::with_capacity(runs.len());
    let mut signals = Vec::with_capacity(runs.len());
    let mut times = Vec::with_capacity(runs.len());
    for r in runs {
        let (s, sig, ms) = r?;
        starts.push(s);
        signals.push(sig);
        times.push(ms);
    }
    let k = starts.iter().map(|s| s.errors.len()).max().unwrap_or(0);
    // A start that ended early keeps its last error for the remaining repeats.
    let mean_per_repeat = (0..k)
        .map(|j| finite_mean(starts.iter().map(|s| s.errors.get(j).or(s.errors.last()).copied().unwrap_or(f64::NAN))))
        .collect();
    let best_start = (0..starts.len())
        .min_by(|&a, &b| starts[a].final_error.total_cmp(&starts[b].final_error))
        .unwrap_or(0);
    let rec = Image::new(img.rows, img.cols, signals[best_start].iter().map(|z| z.re).collect())?;
    let aligned = align_fourier(&rec, &img)?.aligned;
    let report = FourierReport {
        rows: img.rows,
        cols: img.cols,
        source,
        repeats: rc.repeats,
        rank1: rc.rank1,
        mean_final_error: finite_mean(starts.iter().map(|s| s.final_error)),
        starts,
        mean_per_repeat,
        best_start,
        mean_runtime_ms: cfg.timing.then(|| finite_mean(times.into_iter())),
    };
    Ok((report, aligned))
}

/// Largest dimension for which the audit runs the dense reference solver.
pub const AUDIT_DENSE_LIMIT: usize = 16;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub fidelity: Fidelity,
    pub lambda: f64,
    pub epsilon: f64,
    pub nu_min: f64,
    pub eig_residual: f64,
    pub eig_converged: bool,
    pub certified: bool,
    pub value: f64,
    pub grad_norm: f64,
    pub grad_tol: f64,
    pub stationary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

/// Certificate, stationarity and (for `n <= 16`) the gap to the dense
/// reference optimum for a saved factor.
pub fn audit(spec: &ObjectiveSpec, ens: &MeasurementEnsemble, y: &CMat, epsilon: f64, grad_tol: f64) -> Result<AuditReport> {
    let cert = check_certificate_with(spec, ens, y, epsilon, &EigenConfig::default())?;
    let f = value(spec, ens, y)?;
    let g = gradient(spec, ens, y)?.norm();
    let (dense_value, gap) = if ens.n() <= AUDIT_DENSE_LIMIT {
        let sol = solve_lifted(spec, ens, &DenseConfig::default())?;
        (Some(sol.value), Some((f - sol.value).abs() / sol.value.abs().max(1.0)))
    } else {
        (None, None)
    };
    Ok(AuditReport {
        n: ens.n(),
        m: ens.m(),
        p: y.ncols(),
        fidelity: spec.fidelity,
        lambda: spec.lambda,
        epsilon,
        nu_min: cert.nu_min,
        eig_residual: cert.residual,
        eig_converged: cert.converged,
        certified: cert.is_certified,
        value: f,
        grad_norm: g,
        grad_tol,
        stationary: g <= grad_tol * f.abs().max(1.0),
        dense_value,
        gap,
    })
}

pub fn run_cert_audit(cfg: &ExperimentConfig) -> Result<AuditReport> {
    let ens_path = cfg.ensemble.as_ref().ok_or_else(|| Error::arg("cert-audit needs an ensemble file"))?;
    let fac_path = cfg.factor.as_ref().ok_or_else(|| Error::arg("cert-audit needs a factor file"))?;
    let ens = load_dense_ensemble(ens_path)?;
    let (_, y) = load_factor(fac_path)?;
    let spec = match cfg.fidelity.unwrap_or(Fidelity::LeastSquares) {
        Fidelity::LeastSquares => ObjectiveSpec::least_squares(cfg.lambda),
        Fidelity::Poisson => ObjectiveSpec::poisson(cfg.lambda, &ens),
    };
    let grad_tol = cfg.grad_tol.unwrap_or(crate::solver::SolverConfig::default().grad_tol);
    audit(&spec, &ens, y.matrix(), cfg.epsilon.unwrap_or(1e-8 * ens.m() as f64), grad_tol)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub n: usize,
    pub m: usize,
    pub field: ScalarField,
    pub record: crate::increpr::RunRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relerr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relerr_stage_one: Option<f64>,
}

/// Restart solve of a saved ensemble from a saved or random start.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<(SolveSummary, Vec<C64>)> {
    let ens_path = cfg.ensemble.as_ref().ok_or_else(|| Error::arg("solve needs an ensemble file"))?;
    let ens = load_dense_ensemble(ens_path)?;
    let y0 = match &cfg.factor {
        Some(p) => load_factor(p)?.1,
        None => random_factor(ens.n(), 1, ens.field(), derive_seed(cfg.seed, &[2]))?,
    };
    let rc = ExperimentConfig { field: ens.field(), ..cfg.clone() }.gaussian_restart();
    let mut out = restart_solve(&ens, &rc, &y0)?;
    out.record.seed = cfg.seed;
    let (relerr, relerr_stage_one) = match &cfg.truth {
        Some(p) => {
            let (_, t) = load_factor(p)?;
            let x: Vec<C64> = t.column(0);
            (Some(relerr_phase(&out.signal, &x)?), Some(relerr_phase(&out.stage_one_signal, &x)?))
        }
        None => (None, None),
    };
    let summary = SolveSummary { n: ens.n(), m: ens.m(), field: ens.field(), record: out.record, relerr, relerr_stage_one };
    Ok((summary, out.signal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trip() {
        let text = "# sweep\nexperiment = phase-transition\nn = 16\nm_grid = 2.0, 3.0\nfield = complex # comment\neps_stage = 1,2,3\nrank1 = maxcol\ntiming = yes\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment, Some(Experiment::PhaseTransition));
        assert_eq!(cfg.n, 16);
        assert_eq!(cfg.m_grid, vec![2.0, 3.0]);
        assert_eq!(cfg.field, ScalarField::Complex);
        assert_eq!(cfg.eps_stage, Some([1.0, 2.0, 3.0]));
        assert_eq!(cfg.gaussian_restart().rank1, Rank1Method::MaxNormColumn);
        assert!(cfg.timing);
    }

    #[test]
    fn config_errors_name_the_line() {
        match ExperimentConfig::parse("n = 4\nbogus = 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("eps_stage = 1,2\n").is_err());
        assert!(ExperimentConfig::parse("just text\n").is_err());
        let cfg = ExperimentConfig { m_grid: vec![0.0], ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_grid_is_one_to_three() {
        let g = ExperimentConfig::default().m_grid;
        assert_eq!(g.first(), Some(&1.0));
        assert_eq!(g.last(), Some(&3.0));
        assert_eq!(g.len(), 11);
    }

    #[test]
    fn tiny_phase_transition_is_deterministic() {
        let cfg = ExperimentConfig { n: 8, m_grid: vec![4.0], trials: 2, threads: 1, ..ExperimentConfig::default() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_phase_transition(&cfg, &mut a).unwrap();
        run_phase_transition(&cfg, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(PHASE_COLUMNS));
        assert_eq!(text.lines().count(), 2);
    }
}
