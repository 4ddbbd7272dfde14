//! The `report` pipeline: pcf, coordination, vacancy, decoherence and Rabi
//! envelopes in one run, with a manifest that reproduces it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    coordination_for, decoherence_table, load_trajectory, pcf_for, pretty, read_input, read_records, select_frames,
    structure_text, write_atomic, CliError, CliResult, InputFormat, OUT_DIR_ENV,
};
use crate::analysis::{ImageMode, PcfOptions, DEFAULT_BIN_WIDTH};
use crate::decoherence;
use crate::error::Error;
use crate::rabi::{self, RabiParams};
use crate::seed;
use crate::vacancy::{self, VacancyMode, VacancySpec, DEFAULT_CLASSIFY_CUTOFF};

/// Files written by `report`, in stage order.
pub const REPORT_OUTPUTS: [&str; 8] = [
    "pcf.csv",
    "coordination.csv",
    "vacancy.vasp",
    "vacancy.vasp.json",
    "vacancies.csv",
    "decoherence.csv",
    "rabi_envelopes.csv",
    "manifest.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: Option<u64>,
    pub trajectory: PathBuf,
    #[serde(default)]
    pub trajectory_format: Option<InputFormat>,
    #[serde(default)]
    pub pcf: PcfStage,
    pub coordination: CoordStage,
    #[serde(default)]
    pub vacancy: VacancyStage,
    pub decoherence: DecoStage,
    #[serde(default)]
    pub rabi: RabiStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcfStage {
    #[serde(default = "total")]
    pub pair: String,
    #[serde(default = "default_dr")]
    pub dr: f64,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub last_frames: Option<usize>,
}

impl Default for PcfStage {
    fn default() -> Self {
        PcfStage {
            pair: total(),
            dr: DEFAULT_BIN_WIDTH,
            r_max: None,
            last_frames: None,
        }
    }
}

fn total() -> String {
    "total".into()
}

fn default_dr() -> f64 {
    DEFAULT_BIN_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordStage {
    pub pair: String,
    pub cutoff: f64,
    #[serde(default)]
    pub last_frames: Option<usize>,
}

/// Vacancies are cut from the last trajectory frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VacancyStage {
    #[serde(default = "oxygen")]
    pub species: String,
    #[serde(default = "aluminium")]
    pub partner: String,
    #[serde(default = "classify_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub coordination: Option<usize>,
}

impl Default for VacancyStage {
    fn default() -> Self {
        VacancyStage {
            species: oxygen(),
            partner: aluminium(),
            cutoff: DEFAULT_CLASSIFY_CUTOFF,
            count: Some(1),
            coordination: None,
        }
    }
}

fn oxygen() -> String {
    "O".into()
}

fn aluminium() -> String {
    "Al".into()
}

fn classify_cutoff() -> f64 {
    DEFAULT_CLASSIFY_CUTOFF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoStage {
    pub input: PathBuf,
    #[serde(default)]
    pub reference: Option<String>,
    #[serde(default = "one_ms")]
    pub tphi0_ms: f64,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

fn one_ms() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiStage {
    #[serde(default = "rabi_mhz")]
    pub rabi_freq_mhz: f64,
    #[serde(default = "window")]
    pub t_max_us: f64,
    #[serde(default = "points")]
    pub n_points: usize,
}

impl Default for RabiStage {
    fn default() -> Self {
        RabiStage {
            rabi_freq_mhz: rabi::DEFAULT_RABI_MHZ,
            t_max_us: rabi::DEFAULT_WINDOW_US,
            n_points: rabi::DEFAULT_POINTS,
        }
    }
}

fn rabi_mhz() -> f64 {
    rabi::DEFAULT_RABI_MHZ
}

fn window() -> f64 {
    rabi::DEFAULT_WINDOW_US
}

fn points() -> usize {
    rabi::DEFAULT_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    /// Fully resolved configuration with absolute input paths.
    config: ReportConfig,
    derived_seeds: BTreeMap<String, u64>,
    /// Input path → SHA-256 of its contents.
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn absolutize(path: &Path, base: &Path) -> crate::Result<PathBuf> {
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    };
    if !joined.exists() {
        return Err(Error::NotFound(joined));
    }
    Ok(joined.canonicalize()?)
}

/// Fills in anything the config leaves implicit so that the manifest alone
/// determines the run.
fn resolve(mut cfg: ReportConfig, base: &Path) -> CliResult<ReportConfig> {
    if cfg.seed.is_none() {
        return Err(CliError::Usage("config is missing the required field `seed`".into()));
    }
    if cfg.vacancy.count.is_some() == cfg.vacancy.coordination.is_some() {
        return Err(CliError::Usage(
            "vacancy stage needs exactly one of `count` and `coordination`".into(),
        ));
    }
    cfg.trajectory = absolutize(&cfg.trajectory, base)?;
    cfg.decoherence.input = absolutize(&cfg.decoherence.input, base)?;
    if cfg.trajectory_format.is_none() {
        cfg.trajectory_format = Some(super::infer_format(&cfg.trajectory).ok_or_else(|| {
            CliError::Usage(format!(
                "cannot infer the format of {}; set `trajectory_format`",
                cfg.trajectory.display()
            ))
        })?);
    }
    if cfg.decoherence.reference.is_none() {
        let records = read_records(&cfg.decoherence.input)?;
        let first = records.first().ok_or_else(|| Error::arg("no decoherence records"))?;
        cfg.decoherence.reference = Some(first.label.clone());
    }
    Ok(cfg)
}

fn parse_config_value(value: serde_json::Value) -> CliResult<ReportConfig> {
    if value.get("seed").is_none_or(|s| s.is_null()) {
        return Err(CliError::Usage("config is missing the required field `seed`".into()));
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
}

pub(super) fn cmd_report(config: Option<PathBuf>, manifest: Option<PathBuf>, out_dir: Option<PathBuf>) -> CliResult {
    let out_dir = out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("pass --out-dir or set {OUT_DIR_ENV}")))?;
    let (cfg, expected_hashes) = match (config, manifest) {
        (Some(path), None) => {
            let value: serde_json::Value = serde_json::from_str(&read_input(&path)?).map_err(Error::from)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let base = if base.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                base
            };
            (resolve(parse_config_value(value)?, &base)?, None)
        }
        (None, Some(path)) => {
            let value: serde_json::Value = serde_json::from_str(&read_input(&path)?).map_err(Error::from)?;
            let config = value
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::Usage("manifest has no `config` object".into()))?;
            let hashes: Option<BTreeMap<String, String>> = value
                .get("inputs")
                .map(|v| serde_json::from_value(v.clone()))
                .transpose()
                .map_err(Error::from)?;
            (resolve(parse_config_value(config)?, Path::new("."))?, hashes)
        }
        _ => return Err(CliError::Usage("give exactly one of --config and --manifest".into())),
    };
    run_pipeline(&cfg, expected_hashes.as_ref(), &out_dir)
}

fn stage<T>(name: &'static str, r: CliResult<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        CliError::Failed(err) => CliError::Stage(name, err),
        other => other,
    })
}

fn run_pipeline(cfg: &ReportConfig, expected: Option<&BTreeMap<String, String>>, out_dir: &Path) -> CliResult {
    let master = cfg.seed.expect("resolved config has a seed");

    let mut inputs = BTreeMap::new();
    for p in [&cfg.trajectory, &cfg.decoherence.input] {
        let bytes = std::fs::read(p)?;
        inputs.insert(p.display().to_string(), sha256_hex(&bytes));
    }
    if let Some(exp) = expected {
        for (path, hash) in &inputs {
            if exp.get(path) != Some(hash) {
                return Err(
                    Error::Domain(format!("input {path} differs from the one recorded in the manifest")).into(),
                );
            }
        }
    }

    let traj = stage("load", load_trajectory(&cfg.trajectory, cfg.trajectory_format))?;

    let pcf_csv = stage(
        "pcf",
        (|| {
            let frames = select_frames(&traj, cfg.pcf.last_frames)?;
            let opts = PcfOptions {
                bin_width: cfg.pcf.dr,
                r_max: cfg.pcf.r_max,
                mode: ImageMode::MinimumImage,
            };
            Ok(pcf_for(frames, &cfg.pcf.pair, opts)?.to_csv())
        })(),
    )?;

    let coord_csv = stage(
        "coord",
        (|| {
            let frames = select_frames(&traj, cfg.coordination.last_frames)?;
            Ok(coordination_for(frames, &cfg.coordination.pair, cfg.coordination.cutoff)?.histogram_csv())
        })(),
    )?;

    let vacancy_seed = seed::derive(master, seed::stream::VACANCY, 0);
    let (structure, sidecar, vac_csv) = stage(
        "vacancy",
        (|| {
            let frame = traj
                .frames()
                .last()
                .ok_or_else(|| Error::arg("trajectory has no frames"))?;
            let v = &cfg.vacancy;
            let mode = match (v.count, v.coordination) {
                (Some(count), _) => VacancyMode::Random { count },
                (None, Some(coordination)) => VacancyMode::ByCoordination { coordination },
                (None, None) => unreachable!("checked in resolve"),
            };
            let spec = VacancySpec {
                target_species: v.species.clone(),
                partner: v.partner.clone(),
                cutoff: v.cutoff,
                mode,
                seed: vacancy_seed,
            };
            let record = vacancy::remove_vacancies(frame, &spec)?;
            let mut csv = format!(
                "# species={}\n# partner={}\n# cutoff={:?}\n# concentration={:.8}\nindex,coordination\n",
                spec.target_species, spec.partner, spec.cutoff, record.concentration
            );
            for (i, c) in record.removed_indices.iter().zip(&record.removed_coordinations) {
                csv.push_str(&format!("{i},{c}\n"));
            }
            let mut sidecar = serde_json::to_value(record.sidecar()).map_err(Error::from)?;
            sidecar["master_seed"] = serde_json::json!(master);
            Ok((
                structure_text(&record.resulting_frame, InputFormat::Poscar)?,
                pretty(&sidecar),
                csv,
            ))
        })(),
    )?;

    let (deco_csv, models) = stage(
        "decohere",
        (|| {
            let records = read_records(&cfg.decoherence.input)?;
            let d = &cfg.decoherence;
            let table = decoherence_table(&records, d.reference.as_deref(), d.tphi0_ms, &d.overrides)?;
            for w in &table.warnings {
                super::warn(w);
            }
            let models: Vec<(String, f64)> = table.rows.iter().map(|r| (r.label.clone(), r.t_phi_ms)).collect();
            Ok((decoherence::table_csv(&table), models))
        })(),
    )?;

    let rabi_csv = stage(
        "rabi",
        (|| {
            let base = RabiParams {
                rabi_freq_mhz: cfg.rabi.rabi_freq_mhz,
                t2_ms: 1.0,
                t_max_us: cfg.rabi.t_max_us,
                n_points: cfg.rabi.n_points,
            };
            Ok(rabi::envelope_batch(&models, &base)?.to_csv())
        })(),
    )?;

    let manifest = Manifest {
        tool: "oxnoise".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        derived_seeds: BTreeMap::from([("vacancy".to_string(), vacancy_seed)]),
        inputs,
        outputs: REPORT_OUTPUTS.iter().map(|s| s.to_string()).collect(),
    };

    stage(
        "write",
        (|| {
            std::fs::create_dir_all(out_dir)?;
            let contents = [
                pcf_csv,
                coord_csv,
                structure,
                sidecar,
                vac_csv,
                deco_csv,
                rabi_csv,
                pretty(&manifest),
            ];
            for (name, text) in REPORT_OUTPUTS.iter().zip(&contents) {
                write_atomic(&out_dir.join(name), text.as_bytes())?;
            }
            Ok(())
        })(),
    )
}
