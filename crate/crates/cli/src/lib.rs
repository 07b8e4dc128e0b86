//! `mcfqkd`: file-driven front end for the mcf-qkd planner and simulator.
//!
//! Every run is described by one TOML config; the subcommand picks what to
//! do with it. Relative paths inside the config resolve against the config's
//! directory. Outputs land in `--out` (or the config's `out_dir`, or the
//! working directory) and end with a `#` footer naming the tool version, the
//! config hash and the decoy variant.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use mcf_qkd::fibergrid::{reference_plan, validate_plan};
use mcf_qkd::io::{self, GridDoc};
use mcf_qkd::planner::{plan_channels, PlannerOptions};
use mcf_qkd::qkdrate::{secure_key_rate, DECOY_VARIANT};
use mcf_qkd::scenario::{
    calibrate_baseline, find_series_crossover, run_sweep, series_max_reach, BaselineFit, SweepVariable, Variant,
};
use mcf_qkd::xtmodel::{calibrate, DEFAULT_DARK_FLOOR_CPS};
use mcf_qkd::{
    ChannelPlan, Curve, DecoyParams, DetectorSpec, Direction, Error, FilterSpec, LinkScenario, Result, SweepSpec,
    XtalkModel,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "mcfqkd", version, about = "QKD over seven-core fiber: channel planning and key-rate simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign channels for a traffic demand and validate the result.
    Plan(Common),
    /// Fit crosstalk coefficients from a measurement table.
    Calibrate(Common),
    /// Evaluate the configured link once.
    Predict(Common),
    /// Run the configured sweep and summarize it.
    Sweep(Common),
    /// Summarize an existing sweep table.
    Report(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub exhaustive_planner: bool,
}

// ---- config ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plan_file: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub calibration_csv: Option<PathBuf>,
    pub demand_file: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub decoy: DecoySection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub link: LinkSection,
    pub filter: Option<FilterSection>,
    pub baseline: Option<BaselineSection>,
    pub sweep: Option<SweepSection>,
    pub topology: Option<TopologySection>,
    pub grid: Option<GridDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub dark_floor_cps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoySection {
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub state_ratio: Option<[u32; 3]>,
    pub f_ec: Option<f64>,
    pub e_detector: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub gate_rate_hz: Option<f64>,
    pub efficiency: Option<f64>,
    pub dark_rate_cps: Option<f64>,
    pub gate_width_ns: Option<f64>,
    pub calibration_gate_rate_hz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub fixed_losses_db: f64,
    pub direction: Direction,
    pub system_clock_hz: f64,
    /// Fan-in port power, split equally over the channels sharing a core.
    pub port_power_dbm: Option<f64>,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            length_km: 1.0,
            attenuation_db_per_km: 0.23,
            fixed_losses_db: 2.9,
            direction: Direction::Counter,
            system_clock_hz: 50e6,
            port_power_dbm: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub insertion_loss_db: f64,
    #[serde(default = "default_passband_nm")]
    pub passband_width_nm: f64,
    #[serde(default)]
    pub out_of_band_isolation_db: f64,
}

fn default_passband_nm() -> f64 {
    0.6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub target_skr_bps: f64,
    pub target_qber: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `length_km` or `power_dbm`; `start`/`stop`/`step` carry its unit.
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    #[serde(default)]
    pub variant: Vec<VariantSection>,
    #[serde(default)]
    pub crossover: Vec<CrossoverSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub label: String,
    pub direction: Direction,
    #[serde(default)]
    pub extra_filter: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverSection {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default = "default_core_count")]
    pub core_count: u32,
    #[serde(default = "default_center")]
    pub center: u32,
    pub adjacency: Option<Vec<[u32; 2]>>,
}

fn default_core_count() -> u32 {
    7
}

fn default_center() -> u32 {
    1
}

/// A parsed config plus where it came from.
#[derive(Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub origin: String,
    pub hash: String,
}

pub fn load_config(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let origin = path.display().to_string();
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse {
        path: origin.clone(),
        message: "config is not UTF-8".into(),
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: origin.clone(),
        message: e.to_string(),
    })?;
    let hash = Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    });
    Ok(Loaded {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        origin,
        hash,
    })
}

impl Loaded {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn required(&self, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        p.as_deref().map(|p| self.resolve(p)).ok_or_else(|| Error::Parse {
            path: self.origin.clone(),
            message: format!("missing key `{key}`"),
        })
    }

    pub fn footer(&self) -> String {
        format!(
            "# mcfqkd {VERSION} config_sha256={} decoy_variant={DECOY_VARIANT}\n",
            self.hash
        )
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.config.out_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.resolve(p),
            (None, None) => PathBuf::from("."),
        }
    }

    fn dark_floor(&self) -> f64 {
        self.config.calibration.dark_floor_cps.unwrap_or(DEFAULT_DARK_FLOOR_CPS)
    }

    /// The model named by `model_file` or fitted from `calibration_csv`, if any.
    pub fn explicit_model(&self) -> Result<Option<XtalkModel>> {
        let c = &self.config;
        match (&c.model_file, &c.calibration_csv) {
            (Some(_), Some(_)) => Err(Error::Parse {
                path: self.origin.clone(),
                message: "give either `model_file` or `calibration_csv`, not both".into(),
            }),
            (Some(p), None) => io::read_model(&self.resolve(p)).map(Some),
            (None, Some(p)) => {
                let records = io::read_measurements(&self.resolve(p))?;
                Ok(Some(calibrate(&records, self.dark_floor())?.model))
            }
            (None, None) => Ok(None),
        }
    }

    /// Falls back to the synthetic default coefficients.
    pub fn model(&self) -> Result<XtalkModel> {
        Ok(self.explicit_model()?.unwrap_or_else(XtalkModel::synthetic_default))
    }

    pub fn params(&self) -> Result<DecoyParams> {
        let d = &self.config.decoy;
        let base = DecoyParams::default();
        let p = DecoyParams {
            mu: d.mu.unwrap_or(base.mu),
            nu: d.nu.unwrap_or(base.nu),
            state_ratio: d.state_ratio.unwrap_or(base.state_ratio),
            f_ec: d.f_ec.unwrap_or(base.f_ec),
            e_detector: d.e_detector.unwrap_or(base.e_detector),
            q: d.q.unwrap_or(base.q),
        };
        p.check()?;
        Ok(p)
    }

    pub fn detector(&self) -> Result<DetectorSpec> {
        let d = &self.config.detector;
        let base = DetectorSpec::default();
        let spec = DetectorSpec {
            gate_rate_hz: d.gate_rate_hz.unwrap_or(base.gate_rate_hz),
            efficiency: d.efficiency.unwrap_or(base.efficiency),
            dark_rate_cps: d.dark_rate_cps.unwrap_or(base.dark_rate_cps),
            gate_width_ns: d.gate_width_ns.unwrap_or(base.gate_width_ns),
            calibration_gate_rate_hz: d.calibration_gate_rate_hz.unwrap_or(base.calibration_gate_rate_hz),
        };
        spec.check()?;
        Ok(spec)
    }

    /// `plan_file`, or the reference field plan when none is given.
    pub fn plan(&self) -> Result<ChannelPlan> {
        let link = &self.config.link;
        let plan = match &self.config.plan_file {
            Some(p) => io::read_plan(&self.resolve(p))?,
            None => reference_plan(link.port_power_dbm.unwrap_or(0.0), link.direction),
        };
        Ok(match link.port_power_dbm {
            Some(p) => plan.with_port_power(p),
            None => plan,
        })
    }

    pub fn filter(&self) -> Result<Option<FilterSpec>> {
        self.config
            .filter
            .as_ref()
            .map(|f| FilterSpec::new(f.insertion_loss_db, f.passband_width_nm, f.out_of_band_isolation_db))
            .transpose()
    }

    pub fn scenario(&self) -> Result<LinkScenario> {
        let link = &self.config.link;
        let s = LinkScenario {
            length_km: link.length_km,
            attenuation_db_per_km: link.attenuation_db_per_km,
            fixed_losses_db: link.fixed_losses_db,
            plan: self.plan()?,
            direction: link.direction,
            extra_filter: self.filter()?,
            detector: self.detector()?,
            system_clock_hz: link.system_clock_hz,
        };
        s.check()?;
        Ok(s)
    }

    /// Scenario and decoy parameters, with `e_detector` and the fixed loss
    /// refitted when a `[baseline]` section is present. The fit runs on the
    /// configured link with classical traffic and the extra filter removed.
    pub fn calibrated(&self) -> Result<(LinkScenario, DecoyParams, Option<BaselineFit<f64>>)> {
        let mut scenario = self.scenario()?;
        let mut params = self.params()?;
        let Some(b) = &self.config.baseline else {
            return Ok((scenario, params, None));
        };
        let bare = LinkScenario {
            plan: scenario.plan.without_classical(),
            extra_filter: None,
            ..scenario.clone()
        };
        let fit = calibrate_baseline(b.target_skr_bps, b.target_qber, &bare, &params)?;
        scenario.fixed_losses_db = fit.fixed_losses_db;
        params.e_detector = fit.e_detector;
        Ok((scenario, params, Some(fit)))
    }

    pub fn sweep_spec(&self, template: LinkScenario) -> Result<(SweepSpec, Vec<CrossoverSection>)> {
        let s = self.config.sweep.as_ref().ok_or_else(|| Error::Parse {
            path: self.origin.clone(),
            message: "missing `[sweep]` section".into(),
        })?;
        let spec = SweepSpec {
            variable: s.variable,
            start: s.start,
            stop: s.stop,
            step: s.step,
            template,
            variants: s
                .variant
                .iter()
                .map(|v| Variant::new(v.label.clone(), v.direction, v.extra_filter))
                .collect(),
        };
        spec.check()?;
        Ok((spec, s.crossover.clone()))
    }
}

// ---- outcomes and exit codes ----

/// What a command produced: the process exit code, the text for stdout and
/// the files written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

/// 1 validation failure, 2 I/O or parse error, 3 calibration failure.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 2,
        Error::CalibrationFailure(_) | Error::DegenerateCalibration(_) | Error::MissingDirection(_) => 3,
        Error::AtPoint { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn write_output(dir: &Path, name: &str, body: &str, loaded: &Loaded, out: &mut Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    io::write_string(&path, &format!("{body}{}", loaded.footer()))?;
    out.files.push(path);
    Ok(())
}

// ---- commands ----

/// Plans `demand_file` on the configured topology and grid (hexagonal and
/// the 100 GHz field grid by default), or re-validates `plan_file` when no
/// demand is given. Exit 1 when the plan breaks a rule.
pub fn cmd_plan(loaded: &Loaded, out_flag: Option<&Path>, exhaustive: bool) -> Result<Outcome> {
    let c = &loaded.config;
    let plan = if c.demand_file.is_some() {
        let demand = io::read_demand(&loaded.required(&c.demand_file, "demand_file")?)?;
        let topology = match &c.topology {
            Some(t) => io::build_topology(t.core_count, t.center, t.adjacency.as_deref())?,
            None => mcf_qkd::CoreTopology::hexagonal(),
        };
        let grid = match c.grid {
            Some(g) => g.to_grid()?,
            None => reference_plan::<f64>(0.0, Direction::Co).grid,
        };
        let options = PlannerOptions {
            model: loaded.explicit_model()?,
            exhaustive,
        };
        plan_channels(&demand, &topology, &grid, &options)?
    } else {
        io::read_plan(&loaded.required(&c.plan_file, "demand_file` or `plan_file")?)?
    };
    let violations = validate_plan(&plan);
    let mut out = Outcome::default();
    let mut report = String::new();
    let _ = writeln!(
        report,
        "quantum core {}, {} channels",
        plan.quantum_core,
        plan.assignments.len()
    );
    if violations.is_empty() {
        report.push_str("validation: ok\n");
    } else {
        let _ = writeln!(report, "validation: {} violation(s)", violations.len());
        for v in &violations {
            let _ = writeln!(report, "  {v}");
        }
        out.code = 1;
    }
    let dir = loaded.out_dir(out_flag);
    write_output(&dir, "plan.toml", &io::plan_to_string(&plan)?, loaded, &mut out)?;
    write_output(&dir, "plan_report.txt", &report, loaded, &mut out)?;
    out.stdout = report;
    Ok(out)
}

/// Fits the model from `calibration_csv` and writes `model.toml`.
pub fn cmd_calibrate(loaded: &Loaded, out_flag: Option<&Path>) -> Result<Outcome> {
    let path = loaded.required(&loaded.config.calibration_csv, "calibration_csv")?;
    let records = io::read_measurements(&path)?;
    let cal = calibrate(&records, loaded.dark_floor())?;
    let mut report = String::new();
    for d in Direction::ALL {
        let _ = writeln!(report, "{d}: chi {:.6e} cps/(mW km)", cal.model.chi(d));
        for g in cal.groups.iter().filter(|g| g.direction == d) {
            let cores: Vec<String> = g.cores.iter().map(|c| c.0.to_string()).collect();
            let r2 = g
                .fit
                .as_ref()
                .map_or_else(|| "n/a".to_string(), |f| format!("{:.6}", f.r_squared));
            let _ = writeln!(
                report,
                "  cores {} filter {} dB: {} records, chi {:.6e}, r2 {r2}",
                cores.join("+"),
                g.filter_chain_loss_db,
                g.records,
                g.chi
            );
        }
        if let Some(rej) = cal.filter_rejection_db(d) {
            let _ = writeln!(report, "  extra filter rejection {rej:.3} dB beyond insertion loss");
        }
    }
    let _ = writeln!(report, "counter/co ratio {:.3} dB", cal.model.direction_ratio_db());
    if cal.clamped_records > 0 {
        let _ = writeln!(report, "{} record(s) at or below the dark floor", cal.clamped_records);
    }
    let mut out = Outcome::default();
    write_output(
        &loaded.out_dir(out_flag),
        "model.toml",
        &io::model_to_string(&cal.model)?,
        loaded,
        &mut out,
    )?;
    out.stdout = report;
    Ok(out)
}

fn variant_label(s: &LinkScenario) -> String {
    match s.extra_filter {
        Some(_) => format!("{}+filter", s.direction),
        None => s.direction.to_string(),
    }
}

/// Evaluates the configured link once; one row in `predict.csv`.
pub fn cmd_predict(loaded: &Loaded, out_flag: Option<&Path>) -> Result<Outcome> {
    let model = loaded.model()?;
    let (scenario, params, fit) = loaded.calibrated()?;
    let r = secure_key_rate(&scenario, &model, &params)?;
    let curve = Curve {
        label: variant_label(&scenario),
        points: vec![(scenario.length_km, r)],
    };
    let mut report = String::new();
    if let Some(f) = &fit {
        let _ = writeln!(
            report,
            "baseline fit: e_detector {:.6e}, fixed loss {:.4} dB",
            f.e_detector, f.fixed_losses_db
        );
    }
    let _ = writeln!(
        report,
        "{} at {} km: skr {:.1} b/s, qber {:.4}%, xt {:.3} cps",
        curve.label,
        scenario.length_km,
        r.skr,
        100.0 * r.e_mu,
        r.xt_pcr
    );
    if r.saturation_warning {
        report.push_str("warning: crosstalk count rate beyond the detector's linear range\n");
    }
    let mut out = Outcome::default();
    write_output(&loaded.out_dir(out_flag), "predict.csv", &io::sweep_csv(&[curve]), loaded, &mut out)?;
    out.stdout = report;
    Ok(out)
}

/// Max reach and SKR spread per series, then the requested crossovers.
pub fn summarize(series: &[(String, Vec<(f64, f64)>)], crossovers: &[CrossoverSection]) -> Result<String> {
    let mut s = String::new();
    for (label, pts) in series {
        let (lo, hi) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
        let spread = if hi > 0.0 { 100.0 * (hi - lo) / hi } else { 0.0 };
        let _ = writeln!(
            s,
            "{label}: max_reach {} skr_min {lo:.1} skr_max {hi:.1} spread {spread:.2}%",
            series_max_reach(pts)
        );
    }
    for c in crossovers {
        let find = |l: &str| {
            series
                .iter()
                .find(|(label, _)| label == l)
                .map(|(_, p)| p)
                .ok_or_else(|| Error::domain(format!("crossover names unknown variant `{l}`")))
        };
        match find_series_crossover(find(&c.a)?, find(&c.b)?)? {
            Some(x) => {
                let _ = writeln!(s, "crossover {} / {}: {x:.4}", c.a, c.b);
            }
            None => {
                let _ = writeln!(s, "crossover {} / {}: none", c.a, c.b);
            }
        }
    }
    Ok(s)
}

/// Runs `[sweep]` on the calibrated link; writes `sweep.csv` and `summary.txt`.
pub fn cmd_sweep(loaded: &Loaded, out_flag: Option<&Path>) -> Result<Outcome> {
    let model = loaded.model()?;
    let (scenario, params, _) = loaded.calibrated()?;
    let (spec, crossovers) = loaded.sweep_spec(scenario)?;
    let curves = run_sweep(&spec, &model, &params)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = curves.iter().map(|c| (c.label.clone(), c.skr_series())).collect();
    let summary = summarize(&series, &crossovers)?;
    let dir = loaded.out_dir(out_flag);
    let mut out = Outcome::default();
    write_output(&dir, "sweep.csv", &io::sweep_csv(&curves), loaded, &mut out)?;
    write_output(&dir, "summary.txt", &summary, loaded, &mut out)?;
    out.stdout = summary;
    Ok(out)
}

/// Summarizes `sweep_csv` (default: `sweep.csv` in the output directory).
pub fn cmd_report(loaded: &Loaded, out_flag: Option<&Path>) -> Result<Outcome> {
    let dir = loaded.out_dir(out_flag);
    let path = match &loaded.config.sweep_csv {
        Some(p) => loaded.resolve(p),
        None => dir.join("sweep.csv"),
    };
    let rows = io::parse_sweep_csv(&io::read_to_string(&path)?, &path.display().to_string())?;
    let crossovers = loaded
        .config
        .sweep
        .as_ref()
        .map(|s| s.crossover.clone())
        .unwrap_or_default();
    let summary = summarize(&io::series_by_variant(&rows), &crossovers)?;
    let mut out = Outcome::default();
    write_output(&dir, "report.txt", &summary, loaded, &mut out)?;
    out.stdout = summary;
    Ok(out)
}

pub fn execute(command: &Command) -> Result<Outcome> {
    let (Command::Plan(c) | Command::Calibrate(c) | Command::Predict(c) | Command::Sweep(c) | Command::Report(c)) =
        command;
    let loaded = load_config(&c.config)?;
    let out = c.out.as_deref();
    match command {
        Command::Plan(_) => cmd_plan(&loaded, out, c.exhaustive_planner),
        Command::Calibrate(_) => cmd_calibrate(&loaded, out),
        Command::Predict(_) => cmd_predict(&loaded, out),
        Command::Sweep(_) => cmd_sweep(&loaded, out),
        Command::Report(_) => cmd_report(&loaded, out),
    }
}

/// Full error chain on one line.
pub fn describe(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(inner) = src {
        let text = inner.to_string();
        if !s.contains(&text) {
            let _ = write!(s, ": {text}");
        }
        src = inner.source();
    }
    s
}

/// Parses `args`, runs the command, prints its output, and returns the exit
/// code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.code
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            exit_code(&e)
        }
    }
}
