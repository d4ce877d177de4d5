//! Subcommand implementations.

use std::fmt;
use std::path::Path;

use parity_sme::analysis::{
    build_filter, ensemble_run, gate_fidelity, solve_error_rate, EnsembleOptions, FilterKind, Normalization,
};
use parity_sme::cavity::{integrate_amplitudes, output_amplitude, steady_state_output, AmplitudeOptions, AmplitudeTable};
use parity_sme::density::DensityMatrix;
use parity_sme::grid::TimeGrid;
use parity_sme::markov::witness_scan;
use parity_sme::model::{parity_config, validate, ConfigFile};
use parity_sme::sme::{simulate_trajectory, QualityThresholds, TrajectoryOptions};
use parity_sme::{Error, PulseSpec, SystemConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{OutputSet, RunInputs, RunManifest, VERSION};
use crate::{Cli, Command, EXIT_QUALITY, EXIT_USAGE, EXIT_VALIDATION};

pub const DEFAULT_STEPS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Quality(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Validation(_) | Self::Io(_) => EXIT_VALIDATION,
            Self::Quality(_) => EXIT_QUALITY,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Validation(m) | Self::Quality(m) => f.write_str(m),
            Self::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::IntegrationQuality { .. }
            | Error::Positivity(_)
            | Error::Truncation { .. }
            | Error::StepUnderflow { .. }
            | Error::Singular(_) => Self::Quality(e.to_string()),
            Error::Io(io) => Self::Io(io),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Validation(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Configuration, step count and seed after applying the config file,
/// an optional manifest and the command-line flags.
struct Resolved {
    config: ConfigFile,
    steps: usize,
    seed: u64,
}

impl Resolved {
    fn system(&self) -> &SystemConfig {
        &self.config.system
    }

    fn pulse(&self) -> PulseSpec {
        self.config.pulse.unwrap_or_default()
    }

    fn grid(&self, intervals: usize) -> CliResult<TimeGrid> {
        Ok(TimeGrid::new(self.pulse().tau, intervals)?)
    }

    fn table(&self, intervals: usize) -> CliResult<AmplitudeTable> {
        let pulse = self.pulse();
        Ok(integrate_amplitudes(self.system(), &pulse, self.grid(intervals)?, &AmplitudeOptions::default())?)
    }

    fn outputs(&self, cli: &Cli, subcommand: &str, parameters: Value) -> CliResult<OutputSet> {
        let inputs = RunInputs {
            config: self.config.clone(),
            steps: self.steps,
            subcommand: subcommand.into(),
            seed: self.seed,
            version: VERSION.into(),
            parameters,
        };
        Ok(OutputSet::new(&cli.common.out, inputs)?)
    }
}

fn read_config(path: &Path) -> CliResult<(ConfigFile, Option<RunManifest>)> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    if value.get("manifest_hash").is_some() {
        let manifest: RunManifest = serde_json::from_value(value)?;
        Ok((manifest.inputs.config.clone(), Some(manifest)))
    } else {
        Ok((serde_json::from_value(value)?, None))
    }
}

fn resolve(cli: &Cli, check: bool) -> CliResult<Resolved> {
    let (mut config, manifest) = match &cli.common.config {
        Some(path) => read_config(path)?,
        None => (ConfigFile::default(), None),
    };
    if let Some(path) = &cli.common.pulse {
        config.pulse = Some(serde_json::from_str(&std::fs::read_to_string(path)?)?);
    }
    config.pulse = Some(config.pulse.unwrap_or_default());
    if check {
        config.system = config.system.validated()?;
        config.pulse = Some(config.pulse.unwrap_or_default().validated()?);
    }
    let steps = cli
        .common
        .steps
        .or(manifest.as_ref().map(|m| m.inputs.steps))
        .unwrap_or(DEFAULT_STEPS);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    let seed = cli
        .common
        .seed
        .or(manifest.as_ref().map(|m| m.inputs.seed))
        .unwrap_or(DEFAULT_SEED);
    Ok(Resolved { config, steps, seed })
}

pub fn run(cli: &Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match &cli.command {
        Command::Validate => validate_cmd(cli),
        Command::Design { kappa0, kappa1, chi } => design(cli, *kappa0, *kappa1, *chi),
        Command::PulsePreview => pulse_preview(cli),
        Command::Respond => respond(cli),
        Command::Trajectory { stream, snapshots, coarse } => trajectory(cli, *stream, snapshots, *coarse),
        Command::Ensemble { trajectories, filter, mean_one, coarse } => {
            ensemble(cli, *trajectories, filter, *mean_one, *coarse)
        }
        Command::Witness => witness(cli),
        Command::GateModel { fidelity } => gate_model(cli, fidelity),
    }
}

fn done(out: OutputSet) -> CliResult<()> {
    let hash = out.hash().to_string();
    let path = out.finish()?;
    println!("manifest: {} (sha256 {hash})", path.display());
    Ok(())
}

fn validate_cmd(cli: &Cli) -> CliResult<()> {
    let r = resolve(cli, false)?;
    let mut problems: Vec<String> = validate(r.system()).iter().map(ToString::to_string).collect();
    if let Err(e) = r.pulse().validated() {
        problems.push(format!("pulse: {e}"));
    }
    if problems.is_empty() {
        println!("configuration ok");
        Ok(())
    } else {
        for p in &problems {
            println!("violation: {p}");
        }
        Err(CliError::Validation(format!("{} violation(s)", problems.len())))
    }
}

fn design(cli: &Cli, kappa0: Option<f64>, kappa1: Option<f64>, chi: Option<f64>) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let sys = r.system();
    let k0 = kappa0.unwrap_or(sys.kappa[0]);
    let k1 = kappa1.or(sys.kappa.get(1).copied()).unwrap_or(k0);
    let chi = match chi.or(sys.uniform_chi()) {
        Some(c) => c,
        None => return Err(CliError::Usage("--chi is required for non-uniform couplings".into())),
    };
    let (d0, d1) = parity_config(k0, k1, chi)?;
    println!("Δ₀ = {d0}");
    println!("Δ₁ = {d1}");

    let designed = SystemConfig::uniform(3, vec![k0, k1], vec![d0, d1], chi, 0.0, 1.0)?;
    let eps = r.pulse().eps_ss;
    let mut outputs = Vec::new();
    for j in designed.bitstrings() {
        let a = steady_state_output(&designed, j, eps)?;
        println!("α_out({j}) = {} {:+}i", a.re, a.im);
        outputs.push(json!({ "bitstring": j.to_string(), "re": a.re, "im": a.im }));
    }
    let params = json!({ "kappa0": k0, "kappa1": k1, "chi": chi });
    let mut out = r.outputs(cli, "design", params.clone())?;
    out.json(
        "design.json",
        &json!({ "parameters": params, "delta0": d0, "delta1": d1, "eps_ss": eps, "steady_outputs": outputs }),
    )?;
    done(out)
}

fn pulse_preview(cli: &Cli) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let pulse = r.pulse();
    let grid = r.grid(r.steps)?;
    let mut out = r.outputs(cli, "pulse-preview", Value::Null)?;
    out.csv(
        "pulse.csv",
        &["t".into(), "epsilon".into()],
        grid.times().into_iter().map(|t| vec![t, pulse.amplitude(t)]),
    )?;
    done(out)
}

fn respond(cli: &Cli) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let sys = r.system();
    let table = r.table(r.steps)?;
    let bits: Vec<_> = sys.bitstrings().collect();
    let mut header = vec!["t".to_string()];
    for k in 0..sys.n_modes {
        for j in &bits {
            header.push(format!("re_alpha_{k}_{j}"));
            header.push(format!("im_alpha_{k}_{j}"));
        }
    }
    for j in &bits {
        header.push(format!("re_out_{j}"));
        header.push(format!("im_out_{j}"));
    }
    let mut rows = Vec::with_capacity(table.grid().len());
    for (i, t) in table.grid().times().into_iter().enumerate() {
        let mut row = vec![t];
        for k in 0..sys.n_modes {
            for j in &bits {
                let a = table.alpha(k, j.value(), i);
                row.extend([a.re, a.im]);
            }
        }
        for j in &bits {
            let a = output_amplitude(&table, sys, *j, i)?;
            row.extend([a.re, a.im]);
        }
        rows.push(row);
    }
    let mut out = r.outputs(cli, "respond", Value::Null)?;
    out.csv("respond.csv", &header, rows)?;
    done(out)
}

#[derive(Serialize)]
struct Snapshot {
    t: f64,
    /// Row-major [re, im] pairs.
    rho: Vec<Vec<[f64; 2]>>,
}

fn snapshot(t: f64, rho: &DensityMatrix) -> Snapshot {
    let m = rho.matrix();
    Snapshot {
        t,
        rho: (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect(),
    }
}

fn thresholds(coarse: bool, tau: f64, steps: usize) -> QualityThresholds {
    if coarse {
        QualityThresholds::for_step(tau / steps as f64)
    } else {
        QualityThresholds::default()
    }
}

fn trajectory(cli: &Cli, stream: u64, snapshots: &[f64], coarse: bool) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let sys = r.system();
    let table = r.table(r.steps)?;
    let mut opts = TrajectoryOptions::from_plus_state(sys.n_qubits);
    opts.snapshot_times = snapshots.to_vec();
    opts.thresholds = Some(thresholds(coarse, r.pulse().tau, r.steps));
    let rec = simulate_trajectory(sys, &table, r.steps, r.seed, stream, &opts)?;
    let (even, odd) = rec.final_state.parity_populations();
    let params = json!({ "stream": stream, "snapshots": snapshots, "coarse": coarse });
    let mut out = r.outputs(cli, "trajectory", params)?;
    out.csv(
        "photocurrent.csv",
        &["t".into(), "j".into()],
        rec.times.iter().zip(&rec.photocurrent).map(|(t, j)| vec![*t, *j]),
    )?;
    out.json(
        "trajectory.json",
        &json!({
            "seed": rec.seed,
            "stream": rec.stream,
            "steps": r.steps,
            "dt": rec.dt(),
            "parity_populations": { "even": even, "odd": odd },
            "final_state": snapshot(r.pulse().tau, &rec.final_state),
            "snapshots": rec.snapshots.iter().map(|(t, rho)| snapshot(*t, rho)).collect::<Vec<_>>(),
            "diagnostics": rec.diagnostics,
        }),
    )?;
    println!("final parity populations: even {even}, odd {odd}");
    done(out)
}

fn ensemble(cli: &Cli, n: usize, filters: &[String], mean_one: bool, coarse: bool) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let sys = r.system();
    if n == 0 {
        return Err(CliError::Usage("--trajectories must be positive".into()));
    }
    let kinds = filters
        .iter()
        .map(|f| f.parse::<FilterKind>().map_err(|_| CliError::Usage(format!("unknown filter '{f}'"))))
        .collect::<CliResult<Vec<_>>>()?;
    let table = r.table(r.steps)?;
    let normalization = if mean_one { Normalization::MeanOne } else { Normalization::UnitIntegral };
    let functions = kinds
        .iter()
        .map(|&k| Ok(build_filter(k, sys, &table, r.steps)?.with_normalization(normalization)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut opts = EnsembleOptions::new(sys, n, r.steps, r.seed);
    opts.thresholds = Some(thresholds(coarse, r.pulse().tau, r.steps));
    let summary = ensemble_run(sys, &table, &functions, &opts)?;

    let params = json!({ "trajectories": n, "filters": filters, "mean_one": mean_one, "coarse": coarse });
    let mut out = r.outputs(cli, "ensemble", params)?;
    out.json("ensemble.json", &summary)?;
    for (f, s) in functions.iter().zip(&summary.filters) {
        let name = filter_name(f.kind);
        let h = &s.histogram;
        out.csv(
            &format!("histogram_{name}.csv"),
            &["bin_start".into(), "bin_end".into(), "count".into()],
            h.counts.iter().enumerate().map(|(b, c)| vec![h.edges[b], h.edges[b + 1], *c as f64]),
        )?;
        out.csv(
            &format!("filter_{name}.csv"),
            &["t".into(), "f".into()],
            f.samples.iter().enumerate().map(|(i, v)| vec![i as f64 * f.dt, *v]),
        )?;
        println!(
            "{name}: odd {}/{}, RMS fidelity even {}, odd {}, separation {}",
            s.n_odd,
            n,
            fmt_opt(s.rms_fidelity_even),
            fmt_opt(s.rms_fidelity_odd),
            fmt_opt(s.separation)
        );
    }
    done(out)
}

fn filter_name(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Matched => "matched",
        FilterKind::Uniform => "uniform",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn witness(cli: &Cli) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let w = witness_scan(r.system(), &r.pulse(), r.steps)?;
    let mut out = r.outputs(cli, "witness", Value::Null)?;
    out.csv(
        "witness.csv",
        &["t".into(), "D".into()],
        w.times.iter().zip(&w.distance).map(|(t, d)| vec![*t, *d]),
    )?;
    out.json("violations.json", &json!({ "violations": w.violations, "max_rise": w.max_rise() }))?;
    println!("{} increasing interval(s), max rise {:e}", w.violations.len(), w.max_rise());
    done(out)
}

fn gate_model(cli: &Cli, targets: &[f64]) -> CliResult<()> {
    let r = resolve(cli, true)?;
    let ps: Vec<f64> = (0..=20).map(|i| 0.005 * i as f64).collect();
    let mut rows = Vec::with_capacity(ps.len());
    println!("p F(p)");
    for &p in &ps {
        let f = gate_fidelity(p)?;
        println!("{p:.3} {f:.6}");
        rows.push(vec![p, f]);
    }
    let mut solved = Vec::new();
    for &target in targets {
        let p = solve_error_rate(target)?;
        println!("F = {target}: p = {p}");
        solved.push(json!({ "fidelity": target, "p": p }));
    }
    let mut out = r.outputs(cli, "gate-model", json!({ "fidelity": targets }))?;
    out.csv("gate_model.csv", &["p".into(), "fidelity".into()], rows)?;
    out.json("gate_model.json", &json!({ "solved": solved }))?;
    done(out)
}
