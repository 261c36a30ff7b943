//! Monte Carlo experiment definitions and runners behind the CLI.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{self, Regime, SolverOptions};
use crate::error::{Error, Result};
use crate::fronthaul::{self, BitAccount, FronthaulInstance, Scheme};
use crate::model::{self, ActivityPattern, CovarianceSet, NetworkInstance, SignatureSet, SystemConfig};
use crate::phase::{self, PhaseMap, PhaseRegime, SweepSettings};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    PhaseSingle,
    PhaseMulti,
    #[serde(rename = "error_vs_M")]
    ErrorVsM,
    MulticellBenchmarks,
    FronthaulBits,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::PhaseSingle,
        ExperimentId::PhaseMulti,
        ExperimentId::ErrorVsM,
        ExperimentId::MulticellBenchmarks,
        ExperimentId::FronthaulBits,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::PhaseSingle => "phase_single",
            ExperimentId::PhaseMulti => "phase_multi",
            ExperimentId::ErrorVsM => "error_vs_M",
            ExperimentId::MulticellBenchmarks => "multicell_benchmarks",
            ExperimentId::FronthaulBits => "fronthaul_bits",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }

    fn is_phase(self) -> bool {
        matches!(self, ExperimentId::PhaseSingle | ExperimentId::PhaseMulti)
    }
}

/// Scale of the built-in defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Full-size settings (N up to 1000, M up to 1024).
    Full,
    /// Reduced settings that finish in minutes on one core.
    Desk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub system: SystemConfig,
    /// M axis.
    pub antennas: Vec<usize>,
    /// L axis.
    pub seq_lens: Vec<usize>,
    /// K axis (active devices per cell).
    pub actives: Vec<usize>,
    /// R axis (bits per scalar).
    pub bits: Vec<u8>,
    pub trials: usize,
    /// Regimes compared by `error_vs_M`; the first one is swept by `phase_single`.
    pub regimes: Vec<Regime>,
    /// Use model covariances in place of sample covariances.
    pub ideal_cov: bool,
    pub fix_positions: bool,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Radius of the preliminary per-BS detection in `fronthaul_bits`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighbor_radius_m: Option<f64>,
    pub solver: SolverOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn range(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    (lo..=hi).step_by(step).collect()
}

impl ExperimentSpec {
    pub fn defaults(id: ExperimentId, scale: Scale) -> Self {
        let full = scale == Scale::Full;
        let base = Self {
            experiment: id,
            system: SystemConfig::default(),
            antennas: vec![64],
            seq_lens: vec![15],
            actives: vec![10],
            bits: vec![],
            trials: 100,
            regimes: vec![Regime::KnownLsf, Regime::UnknownLsf],
            ideal_cov: false,
            fix_positions: false,
            workers: 0,
            neighbor_radius_m: None,
            solver: SolverOptions::default(),
            out: None,
        };
        let sys = |cells, devices, active, seq_len, antennas| SystemConfig {
            cells,
            devices,
            active,
            seq_len,
            antennas,
            ..SystemConfig::default()
        };
        match (id, full) {
            (ExperimentId::PhaseSingle, true) => Self {
                system: sys(1, 1000, 0, 0, 1),
                seq_lens: range(10, 30, 5),
                actives: range(50, 950, 100),
                regimes: vec![Regime::KnownLsf],
                ..base
            },
            (ExperimentId::PhaseSingle, false) => Self {
                system: sys(1, 100, 0, 0, 1),
                seq_lens: range(4, 9, 1),
                actives: vec![10, 20, 30, 40, 60, 70, 80, 90],
                trials: 50,
                regimes: vec![Regime::KnownLsf],
                ..base
            },
            (ExperimentId::PhaseMulti, true) => Self {
                system: sys(7, 200, 0, 0, 1),
                seq_lens: range(6, 14, 2),
                actives: range(10, 100, 10),
                regimes: vec![Regime::KnownLsf],
                ..base
            },
            (ExperimentId::PhaseMulti, false) => Self {
                system: sys(7, 50, 0, 0, 1),
                seq_lens: vec![4, 5, 6],
                actives: range(1, 25, 1),
                trials: 20,
                regimes: vec![Regime::KnownLsf],
                ..base
            },
            (ExperimentId::ErrorVsM, true) => Self {
                system: sys(1, 1000, 30, 25, 64),
                antennas: vec![16, 32, 64, 128, 256, 512, 1024],
                seq_lens: vec![25],
                actives: vec![30, 40],
                ..base
            },
            (ExperimentId::ErrorVsM, false) => Self {
                system: sys(1, 100, 10, 15, 64),
                antennas: vec![16, 64, 256, 1024],
                trials: 200,
                ..base
            },
            (ExperimentId::MulticellBenchmarks, true) => Self {
                system: sys(7, 200, 20, 20, 64),
                antennas: vec![16, 32, 64, 128, 256],
                seq_lens: vec![20],
                actives: vec![20],
                ..base
            },
            (ExperimentId::MulticellBenchmarks, false) => Self {
                system: sys(7, 50, 5, 12, 16),
                antennas: vec![8, 16, 32, 64],
                seq_lens: vec![12],
                actives: vec![5],
                ..base
            },
            (ExperimentId::FronthaulBits, true) => Self {
                system: sys(7, 200, 20, 20, 128),
                antennas: vec![128],
                seq_lens: vec![20],
                actives: vec![20],
                bits: (1..=16).collect(),
                regimes: vec![Regime::KnownLsf],
                ..base
            },
            (ExperimentId::FronthaulBits, false) => Self {
                system: sys(7, 50, 5, 12, 16),
                antennas: vec![16],
                seq_lens: vec![12],
                actives: vec![5],
                bits: vec![1, 2, 4, 8, 14],
                regimes: vec![Regime::KnownLsf],
                ..base
            },
        }
    }

    /// Defaults for `id`, with a TOML document merged over them. Tables merge
    /// key by key, so a partial `[system]` keeps the remaining defaults.
    /// Not validated, so that later overrides can still fix the plan.
    pub fn from_toml_over(id: ExperimentId, scale: Scale, doc: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(doc)?;
        let id = match user.get("experiment").and_then(|v| v.as_str()) {
            Some(s) => ExperimentId::parse(s)?,
            None => id,
        };
        let base = toml::Table::try_from(Self::defaults(id, scale))
            .map_err(|e| Error::Config(format!("cannot serialize defaults: {e}")))?;
        let merged = merge(base, user);
        Ok(merged.try_into()?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.solver.validate()?;
        let nonempty = |name: &str, empty: bool| {
            if empty {
                Err(Error::Config(format!("{name} axis is empty for {}", self.experiment.as_str())))
            } else {
                Ok(())
            }
        };
        nonempty("L", self.seq_lens.is_empty())?;
        nonempty("K", self.actives.is_empty())?;
        if !self.experiment.is_phase() {
            nonempty("M", self.antennas.is_empty())?;
            nonempty("regime", self.regimes.is_empty())?;
        }
        if self.experiment == ExperimentId::FronthaulBits {
            nonempty("R", self.bits.is_empty())?;
            if let Some(&r) = self.bits.iter().find(|&&r| !(1..=32).contains(&r)) {
                return Err(Error::Config(format!("bits per scalar {r} outside 1..=32")));
            }
        }
        if matches!(self.experiment, ExperimentId::PhaseMulti | ExperimentId::MulticellBenchmarks | ExperimentId::FronthaulBits)
            && self.system.cells != 7
        {
            return Err(Error::UnsupportedLayout(self.system.cells));
        }
        if self.experiment == ExperimentId::PhaseSingle && self.system.cells != 1 {
            return Err(Error::Config("phase_single needs a single cell".into()));
        }
        if self.experiment == ExperimentId::PhaseSingle && !self.regimes.is_empty() && self.phase_regime() == PhaseRegime::MulticellKnownLsf {
            return Err(Error::Config("invalid regime".into()));
        }
        for &k in &self.actives {
            if k > self.system.devices && !self.experiment.is_phase() {
                return Err(Error::Config(format!("K = {k} exceeds N = {}", self.system.devices)));
            }
        }
        if let Some(r) = self.neighbor_radius_m {
            if !(r > 0.0) {
                return Err(Error::Config("neighbor radius must be positive".into()));
            }
        }
        if self.seq_lens.contains(&0) || self.antennas.contains(&0) {
            return Err(Error::Config("L and M must be positive".into()));
        }
        SystemConfig { active: 0, seq_len: 1, antennas: 1, ..self.system.clone() }.validate()
    }

    fn phase_regime(&self) -> PhaseRegime {
        match (self.experiment, self.regimes.first()) {
            (ExperimentId::PhaseMulti, _) => PhaseRegime::MulticellKnownLsf,
            (_, Some(Regime::UnknownLsf)) => PhaseRegime::UnknownLsf,
            _ => PhaseRegime::KnownLsf,
        }
    }

    fn sweep_settings(&self) -> SweepSettings {
        SweepSettings {
            system: self.system.clone(),
            seq_lens: self.seq_lens.clone(),
            actives: self.actives.clone(),
            trials: self.trials,
            regime: self.phase_regime(),
            fix_positions: self.fix_positions,
        }
    }

    /// Axis combinations times trials.
    pub fn total_trials(&self) -> usize {
        let ks = self.actives.iter().filter(|&&k| k <= self.system.devices).count();
        let grid = self.seq_lens.len() * ks;
        match self.experiment {
            ExperimentId::PhaseSingle | ExperimentId::PhaseMulti => grid * self.trials,
            _ => grid * self.antennas.len() * self.trials,
        }
    }

    /// Rough count of the dominant operations: LPs for phase maps and
    /// solver runs otherwise.
    pub fn work_units(&self) -> usize {
        let t = self.total_trials();
        match self.experiment {
            ExperimentId::PhaseSingle | ExperimentId::PhaseMulti => t,
            ExperimentId::ErrorVsM => t * self.regimes.len(),
            ExperimentId::MulticellBenchmarks => t * 4,
            ExperimentId::FronthaulBits => t * (2 + self.system.cells + 2 * self.bits.len()),
        }
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

/// Resolved plan without running anything. At the built-in defaults the
/// full-scale and desk-scale settings are listed side by side.
pub fn describe(spec: &ExperimentSpec) -> String {
    let mut s = String::new();
    let sys = &spec.system;
    let _ = writeln!(s, "experiment: {}", spec.experiment.as_str());
    let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let common = format!(
        "radius={}m tx={}dBm noise={}dBm/Hz bw={}Hz seed={}",
        sys.cell_radius_m, sys.tx_power_dbm, sys.noise_psd_dbm_hz, sys.bandwidth_hz, sys.seed
    );
    let _ = writeln!(s, "system: B={} N={} {common}", sys.cells, sys.devices);
    if spec.experiment.is_phase() {
        let _ = writeln!(s, "axes: L=[{}] K=[{}]", list(&spec.seq_lens), list(&spec.actives));
    } else {
        let bits: Vec<usize> = spec.bits.iter().map(|&b| b as usize).collect();
        let _ = writeln!(
            s,
            "axes: M=[{}] L=[{}] K=[{}] R=[{}]",
            list(&spec.antennas),
            list(&spec.seq_lens),
            list(&spec.actives),
            list(&bits)
        );
    }
    let regimes: Vec<&str> = spec.regimes.iter().map(|r| r.as_str()).collect();
    let _ = writeln!(s, "regimes: {}", regimes.join(","));
    let _ = writeln!(s, "trials: {}", spec.trials);
    let _ = writeln!(s, "ideal_cov: {} fix_positions: {} workers: {}", spec.ideal_cov, spec.fix_positions, spec.workers);
    let _ = writeln!(s, "total_trials: {}", spec.total_trials());
    let _ = writeln!(s, "work_units: {}", spec.work_units());
    let full = ExperimentSpec::defaults(spec.experiment, Scale::Full);
    let desk = ExperimentSpec::defaults(spec.experiment, Scale::Desk);
    let row = |name: &str, p: String, d: String| format!("  {name:<8} {p:<40} {d}\n");
    s.push_str("defaults:\n");
    s.push_str(&row("", "full".into(), "desk".into()));
    s.push_str(&row("B", full.system.cells.to_string(), desk.system.cells.to_string()));
    s.push_str(&row("N", full.system.devices.to_string(), desk.system.devices.to_string()));
    s.push_str(&row("L", list(&full.seq_lens), list(&desk.seq_lens)));
    s.push_str(&row("K", list(&full.actives), list(&desk.actives)));
    if !full.experiment.is_phase() {
        s.push_str(&row("M", list(&full.antennas), list(&desk.antennas)));
    }
    s.push_str(&row("trials", full.trials.to_string(), desk.trials.to_string()));
    s
}

pub const RESULT_CSV_HEADER: &str = "scenario,M,L,K,R,metric,value,trials,stderr";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub antennas: Option<usize>,
    pub seq_len: usize,
    pub active: usize,
    pub bits: Option<u8>,
    pub metric: String,
    pub value: f64,
    pub trials: usize,
    pub stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RESULT_CSV_HEADER}")?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.scenario,
                opt(r.antennas.map(|m| m.to_string())),
                r.seq_len,
                r.active,
                opt(r.bits.map(|b| b.to_string())),
                r.metric,
                r.value,
                r.trials,
                r.stderr
            )?;
        }
        Ok(())
    }

    pub fn find(&self, scenario: &str, metric: &str, antennas: Option<usize>, bits: Option<u8>) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario
                && r.metric == metric
                && (antennas.is_none() || r.antennas == antennas)
                && (bits.is_none() || r.bits == bits)
        })
    }
}

#[derive(Clone, Debug)]
pub enum ExperimentOutput {
    Phase(PhaseMap),
    Table(ResultTable),
}

impl ExperimentOutput {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        match self {
            ExperimentOutput::Phase(m) => m.write_csv(w),
            ExperimentOutput::Table(t) => t.write_csv(w),
        }
    }

    /// One line per sweep point.
    pub fn summary_lines(&self) -> Vec<String> {
        match self {
            ExperimentOutput::Phase(m) => {
                let mut lines: Vec<String> = m
                    .points
                    .iter()
                    .map(|p| format!("L={} K={} L2/N={:.3} K/N={:.3} freq={:.3} ({} trials)", p.seq_len, p.active, p.l2_over_n, p.k_over_n, p.freq(), p.n_trials()))
                    .collect();
                for b in m.boundaries() {
                    lines.push(format!(
                        "boundary L={} L2/N={:.3} K50={} range=[{}, {}]",
                        b.seq_len,
                        b.l2_over_n,
                        b.k50.map_or("none".into(), |k| format!("{k:.2}")),
                        b.k_all_hold.map_or("-".into(), |k| k.to_string()),
                        b.k_none_hold.map_or("-".into(), |k| k.to_string())
                    ));
                }
                lines
            }
            ExperimentOutput::Table(t) => t
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{} M={} L={} K={} R={} {}={:.6} ± {:.6} ({} trials)",
                        r.scenario,
                        r.antennas.map_or("-".into(), |m| m.to_string()),
                        r.seq_len,
                        r.active,
                        r.bits.map_or("-".into(), |b| b.to_string()),
                        r.metric,
                        r.value,
                        r.stderr,
                        r.trials
                    )
                })
                .collect(),
        }
    }
}

/// Run on a dedicated pool of `spec.workers` threads. Results do not depend
/// on the worker count.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match spec.experiment {
        ExperimentId::PhaseSingle | ExperimentId::PhaseMulti => Ok(ExperimentOutput::Phase(phase::phase_sweep(&spec.sweep_settings())?)),
        ExperimentId::ErrorVsM => error_vs_m(spec).map(ExperimentOutput::Table),
        ExperimentId::MulticellBenchmarks => benchmarks(spec).map(ExperimentOutput::Table),
        ExperimentId::FronthaulBits => fronthaul_bits(spec).map(ExperimentOutput::Table),
    })
}

/// One drawn network realization.
#[derive(Clone, Debug)]
pub struct Instance {
    pub cfg: SystemConfig,
    pub net: NetworkInstance,
    pub sigs: SignatureSet,
    pub act: ActivityPattern,
}

impl Instance {
    /// Network, signatures and activity from the stream keyed by `key`.
    pub fn draw(cfg: &SystemConfig, fix_positions: bool, key: &[u64]) -> Result<Self> {
        let mut r = rng::stream(cfg.seed, key);
        let net = if fix_positions { model::build_network(cfg)? } else { model::build_network_with(cfg, &mut r)? };
        let sigs = model::generate_signatures(cfg, &mut r);
        let act = model::sample_activity(cfg, &mut r);
        Ok(Self { cfg: cfg.clone(), net, sigs, act })
    }

    /// Sample covariances at `antennas` (from the stream keyed by `key`), or
    /// model covariances when `ideal`.
    pub fn covariances(&self, antennas: usize, ideal: bool, key: &[u64]) -> Result<CovarianceSet> {
        if ideal {
            return CovarianceSet::model(&self.net, &self.sigs, &self.act);
        }
        let cfg = SystemConfig { antennas, ..self.cfg.clone() };
        let mut r = rng::stream(cfg.seed, key);
        let y = model::simulate_received(&self.net, &self.sigs, &self.act, &cfg, &mut r)?;
        Ok(CovarianceSet::sample(&y, self.net.noise_var))
    }
}

/// Detection output of every device, `j·N + n`, before thresholding.
/// Unknown-fading estimates are divided by the device's own-cell gain so
/// that one threshold applies to all devices.
pub fn detection_scores(inst: &Instance, cov: &CovarianceSet, regime: Regime, opts: &SolverOptions) -> Result<Vec<f64>> {
    let (cells, n) = (inst.cfg.cells, inst.cfg.devices);
    let own: Vec<f64> = (0..cells * n).map(|d| inst.net.gain(d / n, d / n, d % n)).collect();
    match (cells, regime) {
        (1, Regime::KnownLsf) => Ok(detect::solve_single_cell(&cov.mats[0], &inst.sigs.mats[0], Some(&own), cov.noise_var, regime, opts)?.values),
        (1, Regime::UnknownLsf) => {
            let sol = detect::solve_single_cell(&cov.mats[0], &inst.sigs.mats[0], None, cov.noise_var, regime, opts)?;
            Ok(sol.values.iter().zip(&own).map(|(g, o)| g / o).collect())
        }
        (_, Regime::KnownLsf) => Ok(detect::solve_multicell_coop(cov, &inst.sigs, &inst.net, opts)?.values),
        (_, Regime::UnknownLsf) => {
            let sol = detect::solve_multicell_unknown_lsf(cov, &inst.sigs, opts)?;
            Ok(detect::own_cell_gammas(&sol, cells, n).iter().zip(&own).map(|(g, o)| g / o).collect())
        }
    }
}

/// Error rates with one equal-error threshold pooled over all trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PooledError {
    pub pe: f64,
    pub missed_detection: f64,
    pub false_alarm: f64,
    /// Standard error of the per-trial `(P_md + P_fa)/2` at the pooled threshold.
    pub stderr: f64,
    pub trials: usize,
}

pub fn pooled_error(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<PooledError> {
    if scores.len() != truth.len() || scores.is_empty() {
        return Err(Error::Shape("scores and truth must pair up and be nonempty".into()));
    }
    let all_s: Vec<f64> = scores.iter().flatten().copied().collect();
    let all_t: Vec<bool> = truth.iter().flatten().copied().collect();
    let report = detect::equal_error_threshold(&all_s, &all_t)?;
    let per_trial: Vec<f64> = scores
        .iter()
        .zip(truth)
        .map(|(s, t)| {
            let (mut md, mut fa, mut na, mut ni) = (0, 0, 0, 0);
            for (&x, &a) in s.iter().zip(t) {
                let hit = x > report.threshold;
                if a {
                    na += 1;
                    md += usize::from(!hit);
                } else {
                    ni += 1;
                    fa += usize::from(hit);
                }
            }
            let r = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
            0.5 * (r(md, na) + r(fa, ni))
        })
        .collect();
    Ok(PooledError {
        pe: report.pe,
        missed_detection: report.missed_detection_rate,
        false_alarm: report.false_alarm_rate,
        stderr: mean_stderr(&per_trial).1,
        trials: scores.len(),
    })
}

/// Mean and its standard error (zero for a single sample).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn trial_opts(spec: &ExperimentSpec, trial: usize) -> SolverOptions {
    let mut r = rng::stream(spec.system.seed, &[0x6f70_7473, trial as u64]);
    spec.solver.with_seed(rand::RngCore::next_u64(&mut r))
}

const TAG_INSTANCE: u64 = 0x696e_7374;
const TAG_CHANNEL: u64 = 0x6368_616e;

fn cfg_at(spec: &ExperimentSpec, l: usize, k: usize) -> SystemConfig {
    SystemConfig { seq_len: l, active: k, ..spec.system.clone() }
}

fn error_rows(out: &mut ResultTable, scenario: &str, m: usize, l: usize, k: usize, bits: Option<u8>, e: &PooledError) {
    for (metric, value, stderr) in [
        ("pe", e.pe, e.stderr),
        ("missed_detection", e.missed_detection, f64::NAN),
        ("false_alarm", e.false_alarm, f64::NAN),
    ] {
        out.rows.push(ResultRow {
            scenario: scenario.into(),
            antennas: Some(m),
            seq_len: l,
            active: k,
            bits,
            metric: metric.into(),
            value,
            trials: e.trials,
            stderr: if stderr.is_nan() { 0.0 } else { stderr },
        });
    }
}

fn scenario_name(spec: &ExperimentSpec, base: &str) -> String {
    let prefix = if spec.system.cells == 1 { "single" } else { "multi" };
    let suffix = if spec.ideal_cov { "_ideal" } else { "" };
    format!("{prefix}_{base}{suffix}")
}

fn error_vs_m(spec: &ExperimentSpec) -> Result<ResultTable> {
    let mut out = ResultTable::default();
    for &l in &spec.seq_lens {
        for &k in &spec.actives {
            let cfg = cfg_at(spec, l, k);
            // per trial: scores[m][regime]
            let trials: Vec<(Vec<Vec<Vec<f64>>>, Vec<bool>)> = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let inst = Instance::draw(&cfg, spec.fix_positions, &[TAG_INSTANCE, l as u64, k as u64, t as u64])?;
                    let opts = trial_opts(spec, t);
                    let per_m = spec
                        .antennas
                        .iter()
                        .map(|&m| {
                            let cov = inst.covariances(m, spec.ideal_cov, &[TAG_CHANNEL, l as u64, k as u64, m as u64, t as u64])?;
                            spec.regimes.iter().map(|&r| detection_scores(&inst, &cov, r, &opts)).collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((per_m, inst.act.flat()))
                })
                .collect::<Result<_>>()?;
            let truth: Vec<Vec<bool>> = trials.iter().map(|t| t.1.clone()).collect();
            for &regime in &spec.regimes {
                let ri = spec.regimes.iter().position(|&r| r == regime).expect("listed");
                for (mi, &m) in spec.antennas.iter().enumerate() {
                    let scores: Vec<Vec<f64>> = trials.iter().map(|t| t.0[mi][ri].clone()).collect();
                    let e = pooled_error(&scores, &truth)?;
                    error_rows(&mut out, &scenario_name(spec, regime.as_str()), m, l, k, None, &e);
                }
            }
        }
    }
    Ok(out)
}

/// Detectors compared in the multi-cell benchmark, in output order.
pub const BENCHMARK_METHODS: [&str; 4] = ["cooperative", "best_bs", "tin", "cooperative_unknown_lsf"];

fn benchmark_scores(inst: &Instance, cov: &CovarianceSet, opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
    let frac = inst.cfg.active as f64 / inst.cfg.devices as f64;
    Ok(vec![
        detection_scores(inst, cov, Regime::KnownLsf, opts)?,
        detect::baseline_best_bs(cov, &inst.sigs, &inst.net, opts)?.values,
        detect::concat_values(&detect::baseline_tin(cov, &inst.sigs, &inst.net, frac, opts)?),
        detection_scores(inst, cov, Regime::UnknownLsf, opts)?,
    ])
}

fn benchmarks(spec: &ExperimentSpec) -> Result<ResultTable> {
    let mut out = ResultTable::default();
    for &l in &spec.seq_lens {
        for &k in &spec.actives {
            let cfg = cfg_at(spec, l, k);
            for &m in &spec.antennas {
                let trials: Vec<(Vec<Vec<f64>>, Vec<bool>)> = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| {
                        let inst = Instance::draw(&cfg, spec.fix_positions, &[TAG_INSTANCE, l as u64, k as u64, t as u64])?;
                        let cov = inst.covariances(m, spec.ideal_cov, &[TAG_CHANNEL, l as u64, k as u64, m as u64, t as u64])?;
                        Ok((benchmark_scores(&inst, &cov, &trial_opts(spec, t))?, inst.act.flat()))
                    })
                    .collect::<Result<_>>()?;
                let truth: Vec<Vec<bool>> = trials.iter().map(|t| t.1.clone()).collect();
                for (i, name) in BENCHMARK_METHODS.iter().enumerate() {
                    let scores: Vec<Vec<f64>> = trials.iter().map(|t| t.0[i].clone()).collect();
                    let e = pooled_error(&scores, &truth)?;
                    error_rows(&mut out, name, m, l, k, None, &e);
                }
            }
        }
    }
    Ok(out)
}

struct FronthaulTrial {
    unquantized: Vec<f64>,
    /// Indicator scheme with the local estimates sent exactly.
    indicators_exact: Vec<f64>,
    /// `[bits index][scheme index]`.
    quantized: Vec<[(Vec<f64>, BitAccount); 2]>,
    truth: Vec<bool>,
}

const SCHEMES: [Scheme; 2] = [Scheme::Covariance, Scheme::Indicators];

fn fronthaul_trial(spec: &ExperimentSpec, cfg: &SystemConfig, m: usize, t: usize) -> Result<FronthaulTrial> {
    let (l, k) = (cfg.seq_len as u64, cfg.active as u64);
    let inst = Instance::draw(cfg, spec.fix_positions, &[TAG_INSTANCE, l, k, t as u64])?;
    let cov = inst.covariances(m, spec.ideal_cov, &[TAG_CHANNEL, l, k, m as u64, t as u64])?;
    let opts = trial_opts(spec, t);
    let fi = FronthaulInstance { cov: &cov, sigs: &inst.sigs, net: &inst.net, truth: &inst.act, neighbor_radius_m: spec.neighbor_radius_m };
    let unquantized = detect::solve_multicell_coop(&cov, &inst.sigs, &inst.net, &opts)?.values;
    let local = fronthaul::local_estimates(&fi, &opts)?;
    let (exact, _) = fronthaul::fronthaul_covariances(Scheme::Indicators, None, &fi, Some(&local))?;
    let indicators_exact = detect::solve_multicell_coop(&exact, &inst.sigs, &inst.net, &opts)?.values;
    let quantized = spec
        .bits
        .iter()
        .map(|&r| {
            let run = |scheme| -> Result<(Vec<f64>, BitAccount)> {
                let (set, bits) = fronthaul::fronthaul_covariances(scheme, Some(r), &fi, Some(&local))?;
                Ok((detect::solve_multicell_coop(&set, &inst.sigs, &inst.net, &opts)?.values, bits))
            };
            Ok([run(SCHEMES[0])?, run(SCHEMES[1])?])
        })
        .collect::<Result<_>>()?;
    Ok(FronthaulTrial { unquantized, indicators_exact, quantized, truth: inst.act.flat() })
}

fn fronthaul_bits(spec: &ExperimentSpec) -> Result<ResultTable> {
    let mut out = ResultTable::default();
    for &l in &spec.seq_lens {
        for &k in &spec.actives {
            let cfg = cfg_at(spec, l, k);
            for &m in &spec.antennas {
                let trials: Vec<FronthaulTrial> =
                    (0..spec.trials).into_par_iter().map(|t| fronthaul_trial(spec, &cfg, m, t)).collect::<Result<_>>()?;
                let truth: Vec<Vec<bool>> = trials.iter().map(|t| t.truth.clone()).collect();
                let un: Vec<Vec<f64>> = trials.iter().map(|t| t.unquantized.clone()).collect();
                error_rows(&mut out, "unquantized", m, l, k, None, &pooled_error(&un, &truth)?);
                let ie: Vec<Vec<f64>> = trials.iter().map(|t| t.indicators_exact.clone()).collect();
                error_rows(&mut out, "indicators_exact", m, l, k, None, &pooled_error(&ie, &truth)?);
                for (bi, &r) in spec.bits.iter().enumerate() {
                    for (si, scheme) in SCHEMES.iter().enumerate() {
                        let scores: Vec<Vec<f64>> = trials.iter().map(|t| t.quantized[bi][si].0.clone()).collect();
                        error_rows(&mut out, scheme.as_str(), m, l, k, Some(r), &pooled_error(&scores, &truth)?);
                        let accounts: Vec<BitAccount> = trials.iter().map(|t| t.quantized[bi][si].1).collect();
                        type Field = fn(&BitAccount) -> u64;
                        let fields: [(&str, Field); 4] = [
                            ("raw_bits", |a| a.raw_bits),
                            ("coded_bits", |a| a.coded_bits),
                            ("table_bits", |a| a.table_bits),
                            ("side_info_bits", |a| a.side_info_bits),
                        ];
                        for (metric, f) in fields {
                            let v: Vec<f64> = accounts.iter().map(|a| f(a) as f64).collect();
                            let (mean, se) = mean_stderr(&v);
                            out.rows.push(ResultRow {
                                scenario: scheme.as_str().into(),
                                antennas: Some(m),
                                seq_len: l,
                                active: k,
                                bits: Some(r),
                                metric: metric.into(),
                                value: mean,
                                trials: spec.trials,
                                stderr: se,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact support recovery by coordinate descent on ideal covariances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryStats {
    pub recovered: usize,
    pub trials: usize,
}

impl RecoveryStats {
    pub fn rate(&self) -> f64 {
        self.recovered as f64 / self.trials as f64
    }
}

/// Fraction of trials where thresholding the estimates at one half (after
/// gain normalization for unknown fading) returns exactly the true support.
pub fn ideal_recovery(cfg: &SystemConfig, regime: Regime, trials: usize, opts: &SolverOptions) -> Result<RecoveryStats> {
    let hits: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = Instance::draw(cfg, false, &[0x7265_636f, cfg.seq_len as u64, cfg.active as u64, t as u64])?;
            let cov = CovarianceSet::model(&inst.net, &inst.sigs, &inst.act)?;
            let scores = detection_scores(&inst, &cov, regime, &opts.with_seed(opts.seed.wrapping_add(t as u64)))?;
            Ok(scores.iter().zip(inst.act.flat()).all(|(&s, a)| (s > 0.5) == a))
        })
        .collect::<Result<_>>()?;
    Ok(RecoveryStats { recovered: hits.iter().filter(|&&h| h).count(), trials })
}
