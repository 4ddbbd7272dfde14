//! `oxnoise` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 failure while running a stage (one line on
//! stderr), 2 usage error.

mod report;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    compute_pcf, concentration_weights, find_first_peak, total_pcf, CoordinationReport, ImageMode, PairHistogram,
    PcfOptions, PeakOptions, SpeciesPair, DEFAULT_BIN_WIDTH,
};
use crate::decoherence::{self, FluctMode};
use crate::error::Error;
use crate::grid::{self, Axis, GridFormat};
use crate::junction::{self, JunctionParams, TrapParams};
use crate::rabi::{self, RabiParams};
use crate::rts::{self, EnsembleSpec, TelegraphProcess};
use crate::seed;
use crate::structure::{self, AtomicFrame, StructureFormat, Trajectory, TrajectoryFormat};
use crate::vacancy::{self, VacancyMode, VacancySpec, DEFAULT_CLASSIFY_CUTOFF};

pub use report::{CoordStage, DecoStage, PcfStage, RabiStage, ReportConfig, VacancyStage, REPORT_OUTPUTS};

/// Directory used for outputs when `--out` is not given.
pub const OUT_DIR_ENV: &str = "OXNOISE_OUT_DIR";

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Failed(Error),
    Stage(&'static str, Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "oxnoise",
    version,
    about = "Amorphous-oxide structure analysis and junction noise estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pair correlation function g(r) of a trajectory
    Pcf(PcfArgs),
    /// Coordination-number histogram by neighbor counting
    Coord(CoordArgs),
    /// Remove atoms to build an (unrelaxed) vacancy structure
    Vacancy(VacancyArgs),
    /// 2D plane from a volumetric grid
    Slice(SliceArgs),
    /// Junction noise and dephasing model
    Noise(NoiseArgs),
    /// Decoherence table from conductivity fluctuations
    Decohere(DecohereArgs),
    /// Telegraph-noise spectra, single trap or ensemble
    Rts(RtsArgs),
    /// Rabi oscillation curves and decay envelopes
    Rabi(RabiArgs),
    /// Run pcf, coord, vacancy, decohere and rabi from one config
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Poscar,
    Extxyz,
    Xdatcar,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Output file (default: $OXNOISE_OUT_DIR/<name>, else stdout)
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PcfArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Species pair such as Al-O, or "total"
    #[arg(long, default_value = "total")]
    pair: String,
    /// Bin width, Å
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    dr: f64,
    /// Histogram range, Å (default: half the narrowest cell width)
    #[arg(long)]
    r_max: Option<f64>,
    /// Use only the last K frames
    #[arg(long)]
    last: Option<usize>,
    /// Sum over explicit periodic images (for r_max beyond half the cell)
    #[arg(long)]
    enumerate_images: bool,
    /// Also write first-peak position, HWHM and first minimum as JSON
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct CoordArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Central-partner pair such as Al-O
    #[arg(long)]
    pair: String,
    /// Neighbor cutoff, Å
    #[arg(long)]
    cutoff: f64,
    #[arg(long)]
    last: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("how").required(true).args(["count", "coordination"]))]
struct VacancyArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long, default_value = "O")]
    species: String,
    /// Remove this many atoms chosen uniformly at random
    #[arg(long)]
    count: Option<usize>,
    /// Remove one atom with exactly this many partner neighbors
    #[arg(long)]
    coordination: Option<usize>,
    #[arg(long, default_value = "Al")]
    partner: String,
    #[arg(long, default_value_t = DEFAULT_CLASSIFY_CUTOFF)]
    cutoff: f64,
    #[arg(long)]
    seed: u64,
    /// Structure format of the output
    #[arg(long, value_enum, default_value = "poscar")]
    out_format: InputFormat,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridKind {
    Chgcar,
    Cube,
}

#[derive(Args, Debug)]
struct SliceArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    grid_format: Option<GridKind>,
    /// Axis normal to the plane: a1, a2 or a3
    #[arg(long, default_value = "a3")]
    axis: String,
    /// Fractional position of the plane along the axis, in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    /// Junction parameters (JSON)
    #[arg(long)]
    junction: PathBuf,
    /// Trap parameters (JSON)
    #[arg(long)]
    traps: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct DecohereArgs {
    /// Records as CSV (label,sigma_over_tau,N) or JSON
    #[arg(long)]
    input: PathBuf,
    /// Label of the defect-free reference (default: first record)
    #[arg(long)]
    reference: Option<String>,
    /// Reference dephasing time, ms
    #[arg(long, default_value_t = 1.0)]
    tphi0: f64,
    /// Use a given relative fluctuation for one label
    #[arg(long = "fluct-override", value_name = "LABEL=VALUE")]
    fluct_override: Vec<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct RtsArgs {
    #[arg(long)]
    seed: u64,
    /// Simulate an ensemble of this many traps instead of one
    #[arg(long)]
    traps: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    tau_min: f64,
    #[arg(long, default_value_t = 100.0)]
    tau_max: f64,
    /// Single trap: mean dwell in the high state, s
    #[arg(long, default_value_t = 1.0)]
    tau_t: f64,
    /// Single trap: mean dwell in the low state, s
    #[arg(long, default_value_t = 1.0)]
    tau_u: f64,
    /// Step height, μA
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Sampling interval, s
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Samples per averaged segment
    #[arg(long)]
    segment: Option<usize>,
    /// Fit / slope report (JSON)
    #[arg(long)]
    fit_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct RabiArgs {
    /// T2 in ms; repeat for several envelopes
    #[arg(long)]
    t2: Vec<f64>,
    /// Labelled T2 in ms
    #[arg(long, value_name = "LABEL=T2")]
    model: Vec<String>,
    #[arg(long, default_value_t = rabi::DEFAULT_WINDOW_US)]
    tmax_us: f64,
    #[arg(long, default_value_t = rabi::DEFAULT_POINTS)]
    points: usize,
    /// Ω_R/2π, MHz
    #[arg(long, default_value_t = rabi::DEFAULT_RABI_MHZ)]
    rabi_mhz: f64,
    /// Write P_ex(t) instead of the envelope (single T2 only)
    #[arg(long)]
    curve: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["config", "manifest"]))]
struct ReportArgs {
    /// Pipeline configuration (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier report
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory (default: $OXNOISE_OUT_DIR)
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => return usage_failure(e, &argv),
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("oxnoise: usage error: {}", one_line(&msg));
            2
        }
        Err(CliError::Failed(e)) => {
            eprintln!("oxnoise: error: {}", one_line(&e.to_string()));
            1
        }
        Err(CliError::Stage(stage, e)) => {
            eprintln!("oxnoise: error: report stage {stage}: {}", one_line(&e.to_string()));
            1
        }
    }
}

fn usage_failure(e: clap::Error, argv: &[OsString]) -> i32 {
    let _ = e.print();
    if !e.use_stderr() {
        return 0;
    }
    if matches!(e.kind(), ErrorKind::UnknownArgument) {
        let mut cmd = Cli::command();
        cmd.build();
        let sub = argv.get(1).and_then(|s| s.to_str()).unwrap_or("");
        let help = match cmd.find_subcommand_mut(sub) {
            Some(sc) => sc.render_help(),
            None => cmd.render_help(),
        };
        eprintln!("\n{help}");
    }
    2
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Pcf(a) => cmd_pcf(a),
        Command::Coord(a) => cmd_coord(a),
        Command::Vacancy(a) => cmd_vacancy(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Decohere(a) => cmd_decohere(a),
        Command::Rts(a) => cmd_rts(a),
        Command::Rabi(a) => cmd_rabi(a),
        Command::Report(a) => report::cmd_report(a.config, a.manifest, a.out_dir),
    }
}

pub(crate) fn read_input(path: &Path) -> crate::Result<String> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Writes via a temporary file in the target directory, then renames.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> crate::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.to_path_buf()));
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn out_target(out: Option<PathBuf>, default_name: &str) -> Option<PathBuf> {
    out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)))
}

fn emit(text: &str, target: Option<&Path>) -> CliResult {
    match target {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub(crate) fn warn(msg: &str) {
    eprintln!("oxnoise: warning: {}", one_line(msg));
}

pub(crate) fn infer_format(path: &Path) -> Option<InputFormat> {
    let name = path.file_name()?.to_str()?.to_ascii_lowercase();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if name.contains("xdatcar") || ext.as_deref() == Some("xdatcar") {
        Some(InputFormat::Xdatcar)
    } else if matches!(ext.as_deref(), Some("xyz" | "extxyz")) {
        Some(InputFormat::Extxyz)
    } else if name.contains("poscar") || name.contains("contcar") || matches!(ext.as_deref(), Some("vasp" | "poscar")) {
        Some(InputFormat::Poscar)
    } else {
        None
    }
}

pub(crate) fn load_trajectory(path: &Path, format: Option<InputFormat>) -> CliResult<Trajectory> {
    let text = read_input(path)?;
    let format = format
        .or_else(|| infer_format(path))
        .ok_or_else(|| CliError::Usage(format!("cannot infer the format of {}; pass --format", path.display())))?;
    Ok(match format {
        InputFormat::Poscar => Trajectory::new(vec![structure::parse_structure(&text, StructureFormat::Poscar)?])?,
        InputFormat::Extxyz => structure::parse_trajectory(&text, TrajectoryFormat::ExtxyzMulti)?,
        InputFormat::Xdatcar => structure::parse_trajectory(&text, TrajectoryFormat::Xdatcar)?,
    })
}

pub(crate) fn select_frames(traj: &Trajectory, last: Option<usize>) -> CliResult<&[AtomicFrame]> {
    Ok(match last {
        Some(k) => traj.last(k)?,
        None => traj.frames(),
    })
}

fn parse_pair(s: &str) -> CliResult<SpeciesPair> {
    s.parse::<SpeciesPair>()
        .map_err(|e| CliError::Usage(format!("bad pair {s:?}: {e}")))
}

/// g(r) for one pair, or the concentration-weighted total over all ordered
/// species pairs when `pair` is "total".
pub(crate) fn pcf_for(frames: &[AtomicFrame], pair: &str, opts: PcfOptions) -> CliResult<PairHistogram> {
    if !pair.eq_ignore_ascii_case("total") {
        return Ok(compute_pcf(frames, &parse_pair(pair)?, opts)?);
    }
    let first = frames.first().ok_or_else(|| Error::arg("no frames supplied"))?;
    let species: Vec<String> = first.composition().into_iter().map(|(s, _)| s).collect();
    let pairs: Vec<SpeciesPair> = species
        .iter()
        .flat_map(|a| species.iter().map(move |b| SpeciesPair::new(a.as_str(), b.as_str())))
        .collect();
    let partials = pairs
        .iter()
        .map(|p| compute_pcf(frames, p, opts))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(total_pcf(&partials, &concentration_weights(first, &pairs))?)
}

/// Counting coordination pooled over all given frames.
pub(crate) fn coordination_for(frames: &[AtomicFrame], pair: &str, cutoff: f64) -> CliResult<CoordinationReport> {
    let pair = parse_pair(pair)?;
    let mut centers = Vec::new();
    let mut counts = Vec::new();
    for f in frames {
        let mode = vacancy::auto_mode(f.lattice(), cutoff);
        let r = crate::analysis::coordination_by_counting(f, &pair, cutoff, mode)?;
        centers.extend(r.centers);
        counts.extend(r.per_atom_counts);
    }
    if counts.is_empty() {
        return Err(Error::arg("no frames supplied").into());
    }
    Ok(CoordinationReport::from_counts(pair, cutoff, centers, counts))
}

fn cmd_pcf(a: PcfArgs) -> CliResult {
    let traj = load_trajectory(&a.input, a.format)?;
    let frames = select_frames(&traj, a.last)?;
    let opts = PcfOptions {
        bin_width: a.dr,
        r_max: a.r_max,
        mode: if a.enumerate_images {
            ImageMode::Enumerate
        } else {
            ImageMode::MinimumImage
        },
    };
    let h = pcf_for(frames, &a.pair, opts)?;
    emit(&h.to_csv(), out_target(a.out.out, "pcf.csv").as_deref())?;
    if let Some(path) = a.summary {
        let peak = find_first_peak(&h, PeakOptions::default())?;
        let doc = json!({ "pair": h.pair().to_string(), "frames_used": h.frames_used(), "peak": peak });
        write_atomic(&path, pretty(&doc).as_bytes())?;
    }
    Ok(())
}

fn cmd_coord(a: CoordArgs) -> CliResult {
    let traj = load_trajectory(&a.input, a.format)?;
    let frames = select_frames(&traj, a.last)?;
    let report = coordination_for(frames, &a.pair, a.cutoff)?;
    emit(
        &report.histogram_csv(),
        out_target(a.out.out, "coordination.csv").as_deref(),
    )
}

pub(crate) fn structure_text(frame: &AtomicFrame, format: InputFormat) -> CliResult<String> {
    match format {
        InputFormat::Poscar => Ok(structure::write_structure(frame, StructureFormat::Poscar)),
        InputFormat::Extxyz => Ok(structure::write_structure(frame, StructureFormat::Extxyz)),
        InputFormat::Xdatcar => Err(CliError::Usage(
            "a vacancy structure is a single frame; use poscar or extxyz".into(),
        )),
    }
}

fn cmd_vacancy(a: VacancyArgs) -> CliResult {
    let traj = load_trajectory(&a.input, a.format)?;
    let frame = traj.frames().last().ok_or_else(|| Error::arg("input has no frames"))?;
    let mode = match (a.count, a.coordination) {
        (Some(count), None) => VacancyMode::Random { count },
        (None, Some(coordination)) => VacancyMode::ByCoordination { coordination },
        _ => return Err(CliError::Usage("give exactly one of --count and --coordination".into())),
    };
    let spec = VacancySpec {
        target_species: a.species,
        partner: a.partner,
        cutoff: a.cutoff,
        mode,
        seed: seed::derive(a.seed, seed::stream::VACANCY, 0),
    };
    let ext = if a.out_format == InputFormat::Extxyz {
        "xyz"
    } else {
        "vasp"
    };
    let target = out_target(a.out.out, &format!("vacancy.{ext}"))
        .ok_or_else(|| CliError::Usage(format!("vacancy writes two files; pass --out or set {OUT_DIR_ENV}")))?;
    let record = vacancy::remove_vacancies(frame, &spec)?;
    let text = structure_text(&record.resulting_frame, a.out_format)?;
    let mut sidecar = serde_json::to_value(record.sidecar()).map_err(Error::from)?;
    sidecar["master_seed"] = json!(a.seed);
    write_atomic(&target, text.as_bytes())?;
    write_atomic(&sidecar_path(&target), pretty(&sidecar).as_bytes())?;
    Ok(())
}

pub(crate) fn sidecar_path(structure_path: &Path) -> PathBuf {
    let mut s = structure_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn cmd_slice(a: SliceArgs) -> CliResult {
    let text = read_input(&a.input)?;
    let kind = a
        .grid_format
        .unwrap_or_else(|| match a.input.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("cube") => GridKind::Cube,
            _ => GridKind::Chgcar,
        });
    let format = match kind {
        GridKind::Chgcar => GridFormat::ChgcarLike,
        GridKind::Cube => GridFormat::CubeLike,
    };
    let axis: Axis = a.axis.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let g = grid::parse_grid(&text, format)?;
    let slice = grid::slice_plane(&g, axis, a.offset)?;
    emit(
        &grid::emit_slice_csv(&slice),
        out_target(a.out.out, "slice.csv").as_deref(),
    )
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    Ok(serde_json::from_str(&read_input(path)?).map_err(Error::from)?)
}

fn cmd_noise(a: NoiseArgs) -> CliResult {
    let j: JunctionParams = read_json(&a.junction)?;
    let t: Option<TrapParams> = a.traps.as_deref().map(read_json).transpose()?;
    let report = junction::evaluate(&j, t.as_ref())?;
    for w in &report.warnings {
        warn(w);
    }
    emit(&pretty(&report), out_target(a.out.out, "noise.json").as_deref())
}

fn parse_label_value(s: &str, flag: &str) -> CliResult<(String, f64)> {
    let (label, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("{flag} expects LABEL=VALUE, got {s:?}")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{flag}: {value:?} is not a number")))?;
    Ok((label.trim().to_string(), v))
}

pub(crate) fn read_records(path: &Path) -> CliResult<Vec<decoherence::ConductivityRecord>> {
    let text = read_input(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if is_json {
        decoherence::read_records_json(&text)?
    } else {
        decoherence::read_records_csv(text.as_bytes())?
    })
}

pub(crate) fn decoherence_table(
    records: &[decoherence::ConductivityRecord],
    reference: Option<&str>,
    tphi0: f64,
    overrides: &BTreeMap<String, f64>,
) -> crate::Result<decoherence::DecoherenceTable> {
    let reference = match reference {
        Some(r) => r,
        None => &records.first().ok_or_else(|| Error::arg("no records in input"))?.label,
    };
    let mode = if overrides.is_empty() {
        FluctMode::FromSigma
    } else {
        FluctMode::FromGivenFluct(overrides.clone())
    };
    decoherence::build_table(records, reference, tphi0, &mode)
}

fn cmd_decohere(a: DecohereArgs) -> CliResult {
    let records = read_records(&a.input)?;
    let mut overrides = BTreeMap::new();
    for s in &a.fluct_override {
        let (k, v) = parse_label_value(s, "--fluct-override")?;
        overrides.insert(k, v);
    }
    let table = decoherence_table(&records, a.reference.as_deref(), a.tphi0, &overrides)?;
    for w in &table.warnings {
        warn(w);
    }
    emit(
        &decoherence::table_csv(&table),
        out_target(a.out.out, "decoherence.csv").as_deref(),
    )
}

fn cmd_rts(a: RtsArgs) -> CliResult {
    let fit_target = a.fit_out.clone().or_else(|| out_target(None, "rts_fit.json"));
    let (csv, report) = match a.traps {
        None => {
            let p = TelegraphProcess {
                tau_t: a.tau_t,
                tau_u: a.tau_u,
                amplitude: a.amplitude,
                seed: seed::derive(a.seed, seed::stream::RTS_TRAP_SERIES, 0),
            };
            let dt = a.dt.unwrap_or(0.01);
            let mut warnings: Vec<String> = rts::sampling_warning(&p, dt).into_iter().collect();
            let series = rts::simulate_rts(&p, dt, a.samples.unwrap_or(1_000_000))?;
            let spectrum = rts::estimate_psd(&series, dt, a.segment.unwrap_or(8192))?;
            let fit = rts::rts_lorentzian_check(&p, &spectrum)?;
            let fc = rts::corner_frequency(fit.tau_eff_expected);
            let nyquist = 0.5 / dt;
            let tail = (30.0 * fc < 0.5 * nyquist)
                .then(|| rts::log_log_slope(&spectrum, 10.0 * fc, 30.0 * fc))
                .transpose()?;
            if tail.is_none() {
                warnings.push("corner frequency too close to Nyquist for a tail slope".into());
            }
            let doc = json!({
                "mode": "single",
                "seed": a.seed,
                "process": p,
                "dt_s": dt,
                "fit": fit,
                "tail_slope": tail,
                "warnings": warnings,
            });
            (spectrum.to_csv(), doc)
        }
        Some(count) => {
            let spec = EnsembleSpec {
                count,
                tau_min: a.tau_min,
                tau_max: a.tau_max,
                amplitude: a.amplitude,
                seed: a.seed,
                dt: a.dt.unwrap_or(0.005),
                n_samples: a.samples.unwrap_or(5 * (1 << 20)),
                segment_len: a.segment.unwrap_or(1 << 17),
            };
            let result = rts::superpose_ensemble(&spec)?;
            let mut warnings = result.warnings.clone();
            let band = rts::interior_band(spec.tau_min, spec.tau_max);
            let (slope, analytic_slope, rms) = match band {
                Some((lo, hi)) => {
                    let s = &result.spectrum;
                    let analytic = rts::SpectrumEstimate {
                        freqs: s.freqs.clone(),
                        psd: result.analytic.clone(),
                        segments_averaged: 1,
                    };
                    (
                        Some(rts::log_log_slope(s, lo, hi)?),
                        Some(rts::log_log_slope(&analytic, lo, hi)?),
                        Some(rts::relative_rms_deviation(&s.freqs, &s.psd, &result.analytic, lo, hi)?),
                    )
                }
                None => {
                    warnings.push("lifetime range leaves no interior 1/f band".into());
                    (None, None, None)
                }
            };
            let doc = json!({
                "mode": "ensemble",
                "spec": spec,
                "band_hz": band.map(|(lo, hi)| [lo, hi]),
                "slope": slope,
                "analytic_slope": analytic_slope,
                "relative_rms_deviation": rms,
                "warnings": warnings,
            });
            (result.to_csv(), doc)
        }
    };
    if let Some(ws) = report["warnings"].as_array() {
        for w in ws.iter().filter_map(|w| w.as_str()) {
            warn(w);
        }
    }
    emit(&csv, out_target(a.out.out, "rts_spectrum.csv").as_deref())?;
    if let Some(p) = fit_target {
        write_atomic(&p, pretty(&report).as_bytes())?;
    }
    Ok(())
}

fn cmd_rabi(a: RabiArgs) -> CliResult {
    let mut models: Vec<(String, f64)> = a.t2.iter().map(|t| (format!("T2={t}"), *t)).collect();
    for s in &a.model {
        models.push(parse_label_value(s, "--model")?);
    }
    if models.is_empty() {
        return Err(CliError::Usage("give at least one --t2 or --model".into()));
    }
    let base = RabiParams {
        rabi_freq_mhz: a.rabi_mhz,
        t2_ms: models[0].1,
        t_max_us: a.tmax_us,
        n_points: a.points,
    };
    let csv = if a.curve {
        if models.len() != 1 {
            return Err(CliError::Usage("--curve takes exactly one T2".into()));
        }
        rabi::rabi_curve(&base)?.to_csv()
    } else if models.len() == 1 {
        rabi::rabi_envelope(&base)?.to_csv()
    } else {
        rabi::envelope_batch(&models, &base)?.to_csv()
    };
    emit(&csv, out_target(a.out.out, "rabi.csv").as_deref())
}
