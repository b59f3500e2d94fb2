//! The `qi` command line: sweeps, single points, calibration fits, raw
//! record demodulation and the self test.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{fit_gain_noise_weighted, read_points_csv, Weighting};
use crate::constants::{db_to_linear, omega_from_ghz, BandParams};
use crate::dsp::{demodulate_records, estimate_moments, ChannelScale, RawRecordStream};
use crate::error::{Error, Result};
use crate::experiments::{run_point, run_sweep, summarize, write_plot_csv, SweepConfig, SweepResult};
use crate::selftest::{run_selftest, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QI_OUT_DIR";

const CONFIG_KEYS: &str = "\
CONFIG FILE (TOML)

  name                       run name, used for output file names [default: file stem]

  [source]
  kinds                      sources to run: \"tmsv\", \"classical\", \"coherent\"
  n_s                        signal photon number per mode when not swept [photons] [default: 0.5]
  purity.kind                \"constant\", \"table\", \"rational\" or \"heating\" [default: constant 1]
  purity.purity              constant correlation purity [fraction in 0..1]
  purity.points              table of [n_s, purity] pairs, linear interpolation [photons, fraction]
  purity.beta                rational model 1/(1 + beta*n_s) [1/photons]
  purity.residual            heating model: residual thermal occupation [photons]
  purity.slope               heating model: thermal photons per squeezed photon [dimensionless]
  purity.crossing            photon number where the Duan parameter reaches 1, instead of beta or slope [photons]

  [chain]                    defaults to the calibrated setup
  g_s_amp                    pre-target signal gain [\"77.16 dB\", \"5.2e7 lin\" or linear number]
  g_s_det                    receiver signal gain [same forms]
  g_i_total                  total idler gain [same forms]
  n_amp_s                    pre-target amplifier noise [quanta]
  n_det_s                    receiver amplifier noise [quanta]
  n_add_i                    idler added noise referred to the source [quanta]
  n_env                      environment thermal occupation [quanta]
  uncertainty.g_s_db         one-sigma signal gain uncertainty for analytic bands [dB]
  uncertainty.g_i_db         one-sigma idler gain uncertainty [dB]
  uncertainty.n_add_i        one-sigma idler added-noise uncertainty [quanta]

  [band]                     defaults to the 10.09 / 6.8 GHz setup; all keys required if given
  omega_s, omega_i           carrier angular frequencies [rad/s]
  bandwidth                  measurement bandwidth, sample_rate / record_len [Hz]
  impedance                  reference impedance [ohm]
  sample_rate                digitizer sample rate [Hz]
  if_freq                    intermediate frequency [Hz]
  record_len                 samples per record [count]

  [sweep]
  variable                   \"n_s\" [photons], \"eta\" [fraction], \"distance\" [m] or \"temperature\" [K]
  grid                       strictly increasing values of the variable
  eta                        round-trip transmissivity when not swept [fraction] [default: 1]
  receivers                  subset of pc_raw, pc_calibrated, homodyne, heterodyne, passive [default: all]
  records                    records per hypothesis, correlated sources [count >= 1000] [default: 380000]
  coherent_records           records per hypothesis, coherent source [count >= 1000] [default: 192000]
  repetitions                independent repetitions per point [count >= 1] [default: 3]
  seed                       master seed [u64] [default: 0]
  decision_modes             modes M in the error probability 1/2 erfc(sqrt(snr M)) [count] [default: 100]
  workers                    worker threads; output does not depend on it [count] [default: all cores]
  monte_carlo                sample records, else closed forms only [bool] [default: true]
  via_if                     route records through IF synthesis and FFT demodulation [bool] [default: false]

  [distance_model]           used when variable = \"distance\"
  kind                       \"power_law\" or \"table\" [default: power_law, eta_ref 1, d_ref 1, exponent 2]
  eta_ref, d_ref, exponent   eta = eta_ref (d_ref/d)^exponent capped at 1 [fraction, m, dimensionless]
  points                     table of {d, eta_db} entries, linear in dB, no extrapolation [m, dB]

Command-line flags override the matching config keys.";

#[derive(Debug, Parser)]
#[command(name = "qi", version, about = "Microwave quantum illumination simulator")]
pub struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a parameter sweep and write the table, plot data and summary.
    #[command(after_long_help = CONFIG_KEYS)]
    Sweep(SweepArgs),
    /// Evaluate one value of the sweep variable and print its rows as CSV.
    #[command(after_long_help = CONFIG_KEYS)]
    Point(PointArgs),
    /// Fit gain and added noise to radiometric calibration points.
    Calibrate(CalibrateArgs),
    /// Demodulate a raw IF record file into amplitudes and moments.
    Demod(DemodArgs),
    /// Run the fast invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Master seed [config: sweep.seed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [config: sweep.workers].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Records per hypothesis for every source [config: sweep.records, sweep.coherent_records].
    #[arg(long)]
    pub records: Option<usize>,
    /// Repetitions per point [config: sweep.repetitions].
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Closed forms only [config: sweep.monte_carlo = false].
    #[arg(long)]
    pub analytic_only: bool,
    /// Route records through the IF path [config: sweep.via_if = true].
    #[arg(long)]
    pub via_if: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut SweepConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.sweep.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.sweep.workers = Some(w);
        }
        if let Some(m) = self.records {
            cfg.sweep.records = m;
            cfg.sweep.coherent_records = m;
        }
        if let Some(r) = self.repetitions {
            cfg.sweep.repetitions = r;
        }
        if self.analytic_only {
            cfg.sweep.monte_carlo = false;
        }
        if self.via_if {
            cfg.sweep.via_if = true;
        }
        cfg.validate()
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: $QI_OUT_DIR, else ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Value of the sweep variable, in its units.
    #[arg(long, allow_negative_numbers = true)]
    pub value: f64,
    /// Also write `<name>_point.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Band {
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    InverseVariance,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV with columns T_K [K], noise_density_V2Hz [V²/Hz], stderr [V²/Hz].
    #[arg(long)]
    pub points: PathBuf,
    /// Which carrier the points were measured at.
    #[arg(long, value_enum)]
    pub band: Band,
    /// Take the band parameters from this experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uniform")]
    pub weighting: WeightingArg,
    /// Output directory for `calibration_<band>.json` [default: $QI_OUT_DIR, else ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemodArgs {
    /// Raw record file (QIRAWF32 format).
    #[arg(long)]
    pub raw: PathBuf,
    /// Signal channel power gain [dB].
    #[arg(long, allow_negative_numbers = true)]
    pub gain_db: f64,
    /// Signal channel carrier frequency [GHz].
    #[arg(long)]
    pub omega_ghz: f64,
    /// Idler channel power gain [dB] [default: --gain-db].
    #[arg(long, allow_negative_numbers = true)]
    pub idler_gain_db: Option<f64>,
    /// Idler channel carrier frequency [GHz] [default: from the file header].
    #[arg(long)]
    pub idler_omega_ghz: Option<f64>,
    /// Output directory [default: $QI_OUT_DIR, else ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Corrupt one formula: pc-analytic, duan, demod, calibration or erfc.
    #[arg(long)]
    pub inject_fault: Option<String>,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<SweepConfig> {
    if !path.exists() {
        return Err(Error::Usage(format!("config file {} does not exist", path.display())));
    }
    let mut cfg = SweepConfig::from_path(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

/// Files written by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutputs {
    pub table: PathBuf,
    pub plot: PathBuf,
    pub summary: PathBuf,
}

/// Writes `<name>.csv`, `<name>_plot.csv` and `<name>_summary.json`.
pub fn write_sweep_outputs(name: &str, result: &SweepResult, dir: &Path) -> Result<SweepOutputs> {
    let out = SweepOutputs {
        table: dir.join(format!("{name}.csv")),
        plot: dir.join(format!("{name}_plot.csv")),
        summary: dir.join(format!("{name}_summary.json")),
    };
    result.write_csv(create(&out.table)?)?;
    write_plot_csv(result, create(&out.plot)?)?;
    let mut w = create(&out.summary)?;
    w.write_all(summarize(name, result).to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let dir = out_dir(&args.out);
    log::info!("sweep `{}` over {} points", cfg.name(), cfg.sweep.grid.len());
    let result = run_sweep(&cfg)?;
    let files = write_sweep_outputs(cfg.name(), &result, &dir)?;
    println!("{}", files.table.display());
    println!("{}", files.plot.display());
    println!("{}", files.summary.display());
    Ok(match &result.failure {
        None => EXIT_OK,
        Some(f) => {
            eprintln!("error: {}", f.message);
            if f.config_error {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            }
        }
    })
}

fn cmd_point(args: &PointArgs) -> Result<i32> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = cfg.sweep.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Error::config(e.to_string()))?
    };
    let rows = pool.install(|| run_point(&cfg, args.value))?;
    let result = SweepResult {
        variable: cfg.sweep.variable,
        rows,
        failure: None,
    };
    if args.out.is_some() {
        let path = out_dir(&args.out).join(format!("{}_point.csv", cfg.name()));
        result.write_csv(create(&path)?)?;
        log::info!("wrote {}", path.display());
    }
    let stdout = std::io::stdout();
    result.write_csv(stdout.lock())?;
    Ok(EXIT_OK)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<i32> {
    let band = match &args.config {
        Some(path) => SweepConfig::from_path(path)?.band,
        None => BandParams::reference(),
    };
    let (omega, label) = match args.band {
        Band::Signal => (band.omega_s, "signal"),
        Band::Idler => (band.omega_i, "idler"),
    };
    let file = File::open(&args.points)
        .map_err(|e| Error::Usage(format!("cannot open {}: {e}", args.points.display())))?;
    let points = read_points_csv(BufReader::new(file))?;
    let weighting = match args.weighting {
        WeightingArg::Uniform => Weighting::Uniform,
        WeightingArg::InverseVariance => Weighting::InverseVariance,
    };
    let fit = fit_gain_noise_weighted(&points, &band, omega, weighting)?;
    let json = fit.to_json()?;
    let path = out_dir(&args.out).join(format!("calibration_{label}.json"));
    let mut w = create(&path)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("{json}");
    if fit.n_add_negative {
        log::warn!("fitted added noise is negative");
    }
    Ok(EXIT_OK)
}

fn cmd_demod(args: &DemodArgs) -> Result<i32> {
    let file = File::open(&args.raw).map_err(|e| Error::Usage(format!("cannot open {}: {e}", args.raw.display())))?;
    let raw = RawRecordStream::read_from(BufReader::new(file))?;
    let scales = [
        ChannelScale {
            omega: omega_from_ghz(args.omega_ghz),
            gain: db_to_linear(args.gain_db),
        },
        ChannelScale {
            omega: args.idler_omega_ghz.map(omega_from_ghz).unwrap_or(raw.band.omega_i),
            gain: db_to_linear(args.idler_gain_db.unwrap_or(args.gain_db)),
        },
    ];
    let batch = demodulate_records(&raw, scales)?;
    let est = estimate_moments(&batch)?;
    let stem = args
        .raw
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "raw".into());
    let dir = out_dir(&args.out);
    let records = dir.join(format!("{stem}_records.csv"));
    batch.write_csv(create(&records)?)?;
    let report = serde_json::json!({
        "records": batch.len(),
        "units": batch.units,
        "hypothesis": batch.hypothesis,
        "estimate": est,
    });
    let moments = dir.join(format!("{stem}_moments.json"));
    let mut w = create(&moments)?;
    w.write_all(serde_json::to_string_pretty(&report)?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("{}", records.display());
    println!("{}", moments.display());
    Ok(EXIT_OK)
}

fn cmd_selftest(args: &SelftestArgs) -> Result<i32> {
    let fault = args.inject_fault.as_deref().map(str::parse::<Fault>).transpose()?;
    let report = run_selftest(args.seed, fault);
    println!("{report}");
    Ok(if report.all_passed() { EXIT_OK } else { 1 })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("QI_LOG")
        .format_timestamp_millis()
        .try_init();
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let outcome = match &cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Point(a) => cmd_point(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Demod(a) => cmd_demod(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_config_section() {
        for key in ["[source]", "[chain]", "[band]", "[sweep]", "[distance_model]", "g_i_total", "coherent_records"] {
            assert!(CONFIG_KEYS.contains(key), "{key}");
        }
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["qi", "frobnicate"]), EXIT_CONFIG);
    }
}
