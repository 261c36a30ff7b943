use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use covdet::detect::Regime;
use covdet::experiments::{self, ExperimentId, ExperimentOutput, ExperimentSpec, Instance, Scale};
use covdet::{model, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "covdet", version, about = "Covariance-based activity detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one network realization and run the detector on it.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = RegimeArg::KnownLsf)]
        regime: RegimeArg,
        /// Write the network (BS, device, gain rows) as CSV.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Write the signature matrices as CSV.
        #[arg(long)]
        signatures: Option<PathBuf>,
        /// Write the objective trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Detection error sweeps.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = DetectExp::ErrorVsM)]
        experiment: DetectExp,
    },
    /// Phase transition maps from the identifiability conditions.
    PhaseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PhaseExp::PhaseSingle)]
        experiment: PhaseExp,
        /// Single-cell regime; the multi-cell map is always known fading.
        #[arg(long, value_enum)]
        regime: Option<RegimeArg>,
        /// Write the 50% boundary estimates as CSV.
        #[arg(long)]
        boundary: Option<PathBuf>,
    },
    /// Quantized fronthaul comparison.
    Fronthaul {
        #[command(flatten)]
        common: Common,
    },
    /// Print the resolved plan without running it.
    Describe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "phase_single")]
        experiment: String,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML file merged over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace sample covariances by model covariances.
    #[arg(long)]
    ideal_cov: bool,
    /// Keep one network drop for all trials.
    #[arg(long)]
    fix_positions: bool,
    /// Start from the reduced desk-scale defaults.
    #[arg(long)]
    desk: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RegimeArg {
    KnownLsf,
    UnknownLsf,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::KnownLsf => Regime::KnownLsf,
            RegimeArg::UnknownLsf => Regime::UnknownLsf,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DetectExp {
    #[value(name = "error_vs_M")]
    ErrorVsM,
    #[value(name = "multicell_benchmarks")]
    MulticellBenchmarks,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PhaseExp {
    #[value(name = "phase_single")]
    PhaseSingle,
    #[value(name = "phase_multi")]
    PhaseMulti,
}

fn resolve(id: ExperimentId, c: &Common) -> Result<ExperimentSpec> {
    resolve_with(id, c, |_| {})
}

fn resolve_with(id: ExperimentId, c: &Common, adjust: impl FnOnce(&mut ExperimentSpec)) -> Result<ExperimentSpec> {
    let scale = if c.desk { Scale::Desk } else { Scale::Full };
    let mut spec = match &c.config {
        Some(path) => ExperimentSpec::from_toml_over(id, scale, &std::fs::read_to_string(path)?)?,
        None => ExperimentSpec::defaults(id, scale),
    };
    if spec.experiment != id {
        return Err(Error::Config(format!(
            "config names experiment {} but the subcommand runs {}",
            spec.experiment.as_str(),
            id.as_str()
        )));
    }
    if let Some(s) = c.seed {
        spec.system.seed = s;
    }
    if let Some(t) = c.trials {
        spec.trials = t;
    }
    if let Some(w) = c.workers {
        spec.workers = w;
    }
    if c.out.is_some() {
        spec.out.clone_from(&c.out);
    }
    spec.ideal_cov |= c.ideal_cov;
    spec.fix_positions |= c.fix_positions;
    adjust(&mut spec);
    spec.validate()?;
    Ok(spec)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn emit(spec: &ExperimentSpec, out: &ExperimentOutput) -> Result<()> {
    match &spec.out {
        Some(path) => {
            let mut w = create(path)?;
            out.write_csv(&mut w)?;
            w.flush()?;
            for line in out.summary_lines() {
                println!("{line}");
            }
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            out.write_csv(&mut w)?;
            for line in out.summary_lines() {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, regime, network, signatures, trace } => {
            // one realization at the system point; the sweep axes do not apply
            let spec = resolve_with(ExperimentId::ErrorVsM, &common, |s| {
                s.antennas = vec![s.system.antennas];
                s.seq_lens = vec![s.system.seq_len];
                s.actives = vec![s.system.active];
            })?;
            let cfg = spec.system.clone();
            cfg.validate()?;
            let inst = Instance::draw(&cfg, spec.fix_positions, &[0x7369_6d75])?;
            let cov = inst.covariances(cfg.antennas, spec.ideal_cov, &[0x7369_6d76])?;
            let opts = spec.solver.clone();
            let regime = Regime::from(regime);
            let scores = experiments::detection_scores(&inst, &cov, regime, &opts)?;
            let truth = inst.act.flat();
            let rep = covdet::detect::equal_error_threshold(&scores, &truth)?;
            println!(
                "B={} N={} K={} L={} M={} regime={} pe={:.6} md={:.6} fa={:.6} threshold={:.6}",
                cfg.cells, cfg.devices, cfg.active, cfg.seq_len, cfg.antennas, regime.as_str(),
                rep.pe, rep.missed_detection_rate, rep.false_alarm_rate, rep.threshold
            );
            if let Some(p) = &spec.out {
                let mut w = create(p)?;
                model::write_covariances_csv(&cov, &mut w)?;
                w.flush()?;
            }
            if let Some(p) = network {
                model::write_network_csv(&inst.net, create(&p)?)?;
            }
            if let Some(p) = signatures {
                model::write_signatures_csv(&inst.sigs, create(&p)?)?;
            }
            if let Some(p) = trace {
                let sol = match (cfg.cells, regime) {
                    (1, _) => {
                        let own: Vec<f64> = (0..cfg.devices).map(|n| inst.net.gain(0, 0, n)).collect();
                        let gains = (regime == Regime::KnownLsf).then_some(own.as_slice());
                        covdet::detect::solve_single_cell(&cov.mats[0], &inst.sigs.mats[0], gains, cov.noise_var, regime, &opts)?
                    }
                    (_, Regime::KnownLsf) => covdet::detect::solve_multicell_coop(&cov, &inst.sigs, &inst.net, &opts)?,
                    (_, Regime::UnknownLsf) => covdet::detect::solve_multicell_unknown_lsf(&cov, &inst.sigs, &opts)?,
                };
                let mut w = create(&p)?;
                sol.write_trace_csv(&mut w)?;
                w.flush()?;
            }
            Ok(())
        }
        Command::Detect { common, experiment } => {
            let id = match experiment {
                DetectExp::ErrorVsM => ExperimentId::ErrorVsM,
                DetectExp::MulticellBenchmarks => ExperimentId::MulticellBenchmarks,
            };
            let spec = resolve(id, &common)?;
            emit(&spec, &experiments::run(&spec)?)
        }
        Command::PhaseSweep { common, experiment, regime, boundary } => {
            let id = match experiment {
                PhaseExp::PhaseSingle => ExperimentId::PhaseSingle,
                PhaseExp::PhaseMulti => ExperimentId::PhaseMulti,
            };
            let mut spec = resolve(id, &common)?;
            if let Some(r) = regime {
                spec.regimes = vec![r.into()];
            }
            let out = experiments::run(&spec)?;
            emit(&spec, &out)?;
            if let (Some(p), ExperimentOutput::Phase(map)) = (boundary, &out) {
                let mut w = create(&p)?;
                map.write_boundary_csv(&mut w)?;
                w.flush()?;
            }
            Ok(())
        }
        Command::Fronthaul { common } => {
            let spec = resolve(ExperimentId::FronthaulBits, &common)?;
            emit(&spec, &experiments::run(&spec)?)
        }
        Command::Describe { common, experiment } => {
            let spec = resolve(ExperimentId::parse(&experiment)?, &common)?;
            print!("{}", experiments::describe(&spec));
            Ok(())
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
            ExitCode::from(2)
        }
    }
}
