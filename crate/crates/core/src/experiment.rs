//! Config-driven pipeline: synthesize the free-space field, apply each blockage
//! scenario, evaluate every beamforming scheme over the region of interest and
//! write plot-ready tables plus a JSON report.
//!
//! Quantity names in the report (all in dB, one sample per RoI cell):
//!
//! | name | definition |
//! |---|---|
//! | `gain/<scheme>` | realized gain of the scheme on the blocked field |
//! | `loss/optimal` | free-space MRC gain − blocked MRC gain |
//! | `loss/directional` | free-space directional gain − blocked directional gain |
//! | `loss/element-<i>` | free-space − blocked elemental gain of antenna `i` |
//! | `gap/directional-to-optimal` | blocked MRC gain − blocked directional gain |
//! | `gap/directional-to-free-optimal` | free-space MRC gain − blocked directional gain |
//! | `improvement/<enh>-over-directional` | enhanced gain − directional gain |
//! | `gap/<enh>-to-optimal` | blocked MRC gain − enhanced gain |

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{
    directional_codebook, enh_phase_codebook, gain_map, DirectionalParams, GainMap, Scheme,
};
use crate::distortion::{gen_distortion, DistortionMode, DistortionSpec, Finger};
use crate::error::{Error, Result};
use crate::field::{apply_distortion, synth_freespace_field, AntennaFieldMap, ArrayConfig};
use crate::grid::{make_grid, SphericalGrid};
use crate::io;
use crate::metrics::{
    cdf_summary, cdf_summary_weighted, coverage_stats, loss_samples, pair_phase_diff, phase_mixing,
    rect_roi, roi_mask_aggregate, CdfSummary, CoverageRow, RoiMask, DEFAULT_G1_DB, DEFAULT_G2_DB,
    DEFAULT_PERCENTILES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub theta_step_deg: f64,
    pub phi_step_deg: f64,
    pub theta_span_deg: [f64; 2],
    pub phi_span_deg: [f64; 2],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            theta_step_deg: 5.0,
            phi_step_deg: 5.0,
            theta_span_deg: [0.0, 180.0],
            phi_span_deg: [0.0, 360.0],
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<SphericalGrid> {
        make_grid(
            self.theta_step_deg,
            self.phi_step_deg,
            (self.theta_span_deg[0], self.theta_span_deg[1]),
            (self.phi_span_deg[0], self.phi_span_deg[1]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoiKind {
    /// θ/φ rectangle only.
    Rectangular,
    /// Union over antennas of `{G_free,i ≥ G1} ∪ {G_blockage,i ≥ G2}`.
    Thresholds,
    /// Intersection of the two.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub kind: RoiKind,
    pub theta_range_deg: [f64; 2],
    pub phi_range_deg: [f64; 2],
    pub g1_db: f64,
    pub g2_db: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            kind: RoiKind::Rectangular,
            theta_range_deg: [0.0, 180.0],
            phi_range_deg: [150.0, 360.0],
            g1_db: DEFAULT_G1_DB,
            g2_db: DEFAULT_G2_DB,
        }
    }
}

impl RoiConfig {
    pub fn build(&self, free: &AntennaFieldMap, blocked: &AntennaFieldMap) -> Result<RoiMask> {
        let rect = || {
            rect_roi(
                free.grid(),
                (self.theta_range_deg[0], self.theta_range_deg[1]),
                (self.phi_range_deg[0], self.phi_range_deg[1]),
            )
        };
        let thresholds = || roi_mask_aggregate(free, blocked, self.g1_db, self.g2_db);
        let mask = match self.kind {
            RoiKind::Rectangular => rect()?,
            RoiKind::Thresholds => thresholds()?,
            RoiKind::Both => {
                let (r, t) = (rect()?, thresholds()?);
                let cells = r.mask.iter().zip(&t.mask).map(|(a, b)| *a && *b).collect();
                RoiMask::from_mask(r.grid, t.antenna, t.thresholds, cells)?
            }
        };
        if mask.count() == 0 {
            return Err(Error::Empty(
                "region of interest contains no grid cells".into(),
            ));
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub directional_beams: usize,
    pub directional_quant_bits: u32,
    pub enhanced_bits: Vec<u32>,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            directional_beams: 4,
            directional_quant_bits: 5,
            enhanced_bits: vec![2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub distortion: DistortionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; scenario `k` draws its screens from `seed + distortion.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub percentiles: Vec<f64>,
    /// Weight CDF samples by cell solid angle instead of counting cells.
    pub solid_angle_weighting: bool,
    /// Also write the blocked field and distortion files of every scenario.
    pub write_fields: bool,
    pub array: ArrayConfig,
    pub grid: GridConfig,
    pub roi: RoiConfig,
    pub codebook: CodebookConfig,
    pub scenarios: Vec<Scenario>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            output_dir: PathBuf::from("beamshadow-out"),
            percentiles: DEFAULT_PERCENTILES.to_vec(),
            solid_angle_weighting: false,
            write_fields: true,
            array: ArrayConfig::default(),
            grid: GridConfig::default(),
            roi: RoiConfig::default(),
            codebook: CodebookConfig::default(),
            scenarios: default_scenarios(),
        }
    }
}

fn finger(theta: f64, phi: f64, radius: f64, depth: f64, antennas: &[usize]) -> Finger {
    Finger {
        center_theta_deg: theta,
        center_phi_deg: phi,
        radius_deg: radius,
        depth_db: depth,
        antennas: Some(antennas.to_vec()),
    }
}

/// Four synthetic stand-ins for the phantom positions: 0 mm and 1 mm air gap,
/// one or two fingers. Fingers sit over the antennas they are named for.
pub fn default_scenarios() -> Vec<Scenario> {
    let combined = |fingers, phase_std_deg, amp_std_db, seed| DistortionSpec {
        mode: DistortionMode::Combined,
        fingers,
        phase_correlation_deg: 20.0,
        phase_std_deg,
        amp_std_db,
        seed,
    };
    // a broad, shallow palm shadow on every antenna plus deeper finger caps
    let palm = |depth| Finger {
        center_theta_deg: 90.0,
        center_phi_deg: 255.0,
        radius_deg: 100.0,
        depth_db: depth,
        antennas: None,
    };
    vec![
        Scenario {
            name: "0mm-1finger-like".into(),
            distortion: combined(
                vec![palm(6.0), finger(90.0, 255.0, 60.0, 12.0, &[2])],
                35.0,
                2.5,
                1,
            ),
        },
        Scenario {
            name: "0mm-2finger-like".into(),
            distortion: combined(
                vec![
                    palm(7.0),
                    finger(80.0, 240.0, 60.0, 14.0, &[0, 1]),
                    finger(100.0, 270.0, 50.0, 10.0, &[0, 1]),
                ],
                40.0,
                3.0,
                2,
            ),
        },
        Scenario {
            name: "1mm-1finger-like".into(),
            distortion: combined(
                vec![palm(5.0), finger(90.0, 255.0, 55.0, 9.0, &[3])],
                25.0,
                2.0,
                3,
            ),
        },
        Scenario {
            name: "1mm-2finger-like".into(),
            distortion: combined(
                vec![
                    palm(6.0),
                    finger(85.0, 250.0, 55.0, 10.0, &[0]),
                    finger(95.0, 275.0, 50.0, 8.0, &[0]),
                ],
                30.0,
                2.5,
                4,
            ),
        },
    ]
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.grid.build()?;
        if self.codebook.enhanced_bits.iter().any(|&b| b < 1) {
            return Err(Error::Config("enhanced codebook bits must be >= 1".into()));
        }
        if self.codebook.directional_beams < 1 || self.codebook.directional_quant_bits < 1 {
            return Err(Error::Config(
                "directional codebook needs J >= 1 and >= 1 quantization bit".into(),
            ));
        }
        if self.percentiles.is_empty()
            || self.percentiles.iter().any(|p| !(0.0..=100.0).contains(p))
        {
            return Err(Error::Config(
                "percentiles must be a non-empty list within [0, 100]".into(),
            ));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario is required".into()));
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            let ok = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && s.name != "."
                && s.name != "..";
            if !ok {
                return Err(Error::Config(format!(
                    "scenario name `{}` must be non-empty and use only [A-Za-z0-9._-]",
                    s.name
                )));
            }
            if self.scenarios[..k].iter().any(|o| o.name == s.name) {
                return Err(Error::Config(format!("duplicate scenario `{}`", s.name)));
            }
            s.distortion
                .validate(self.array.n_antennas)
                .map_err(|e| e.in_scenario(&s.name))?;
        }
        Ok(())
    }

    fn dir_params(&self) -> DirectionalParams {
        DirectionalParams {
            beams: self.codebook.directional_beams,
            quant_bits: self.codebook.directional_quant_bits,
            spacing: self.array.element_spacing,
        }
    }

    /// Optimal, directional, then phase-only and phase+amplitude for each B.
    pub fn schemes(&self) -> Vec<Scheme> {
        let mut v = vec![Scheme::Optimal, Scheme::Directional];
        for &bits in &self.codebook.enhanced_bits {
            v.push(Scheme::EnhPhase { bits });
            v.push(Scheme::EnhPhaseAmp { bits });
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub summary: CdfSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMixingRow {
    pub pair: (usize, usize),
    pub freespace_deg: f64,
    pub blocked_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub distortion_seed: u64,
    pub roi_cells: usize,
    pub roi_area_fraction: f64,
    pub quantities: Vec<Quantity>,
    pub phase_mixing: Vec<PhaseMixingRow>,
    pub coverage: Vec<CoverageRow>,
    /// Largest `|improvement + gap_enh − gap_dir|` over cells and enhanced schemes.
    pub closure_max_abs_db: f64,
}

impl ScenarioReport {
    pub fn quantity(&self, name: &str) -> Option<&CdfSummary> {
        self.quantities
            .iter()
            .find(|q| q.name == name)
            .map(|q| &q.summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub schemes: Vec<String>,
    pub freespace: Vec<Quantity>,
    pub scenarios: Vec<ScenarioReport>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

struct Summarizer<'a> {
    percentiles: &'a [f64],
    weights: Option<Vec<f64>>,
}

impl Summarizer<'_> {
    fn summarize(&self, name: String, samples: &[f64]) -> Result<Quantity> {
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::ZeroField(format!(
                "`{name}` has a non-finite sample at RoI position {k} (zero field)"
            )));
        }
        let summary = match &self.weights {
            Some(w) => cdf_summary_weighted(samples, w, self.percentiles)?,
            None => cdf_summary(samples, self.percentiles)?,
        };
        Ok(Quantity { name, summary })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn write(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Runs the whole pipeline and writes into `config.output_dir`:
/// `report.json`, `config.toml`, `freespace-field.csv`, `codebook-*.csv`, and
/// per scenario `<name>/{cdf.csv, coverage.csv, gain-<scheme>.csv, ...}`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let grid = config.grid.build()?;
    let free = synth_freespace_field(&config.array, &grid)?;
    let dir_params = config.dir_params();
    let schemes = config.schemes();
    let n = config.array.n_antennas;

    write(out.join("config.toml"), config.to_toml_string()?)?;
    if config.write_fields {
        io::write_field_file(&free, out.join("freespace-field.csv"))?;
    }
    let dcb = directional_codebook(
        n,
        dir_params.beams,
        dir_params.quant_bits,
        dir_params.spacing,
    )?;
    write(
        out.join("codebook-directional.csv"),
        io::codebook_to_string(&dcb),
    )?;
    for &bits in &config.codebook.enhanced_bits {
        let cbk = enh_phase_codebook(n, bits)?;
        write(
            out.join(format!("codebook-enh-phase-B{bits}.csv")),
            io::codebook_to_string(&cbk),
        )?;
    }

    let free_roi = config.roi.build(&free, &free)?;
    let free_opt = gain_map(Scheme::Optimal, dir_params, &free, &free_roi)?;
    let summarizer = Summarizer {
        percentiles: &config.percentiles,
        weights: config
            .solid_angle_weighting
            .then(|| free_roi.cell_weights()),
    };
    let freespace = vec![summarizer.summarize("gain/optimal".into(), &free_opt.masked_values())?];

    let scenarios = config
        .scenarios
        .par_iter()
        .map(|s| {
            run_scenario(config, s, &free, &schemes, dir_params).map_err(|e| e.in_scenario(&s.name))
        })
        .collect::<Result<Vec<_>>>()?;

    let report = ExperimentReport {
        seed: config.seed,
        schemes: schemes.iter().map(Scheme::name).collect(),
        freespace,
        scenarios,
        config: config.clone(),
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write(out.join("report.json"), json)?;
    Ok(report)
}

fn run_scenario(
    config: &ExperimentConfig,
    scenario: &Scenario,
    free: &AntennaFieldMap,
    schemes: &[Scheme],
    dir_params: DirectionalParams,
) -> Result<ScenarioReport> {
    let dir = config.output_dir.join(&scenario.name);
    fs::create_dir_all(&dir)?;
    let grid = *free.grid();
    let seed = config.seed.wrapping_add(scenario.distortion.seed);
    let spec = DistortionSpec {
        seed,
        ..scenario.distortion.clone()
    };
    let distortion = gen_distortion(&spec, &config.array, &grid)?;
    let mut blocked = apply_distortion(free, &distortion)?;
    blocked.label = scenario.name.clone();
    if config.write_fields {
        io::write_field_file(&blocked, dir.join("blocked-field.csv"))?;
        io::write_distortion_file(&distortion, dir.join("distortion.csv"))?;
    }

    let roi = config.roi.build(free, &blocked)?;
    let summarizer = Summarizer {
        percentiles: &config.percentiles,
        weights: config.solid_angle_weighting.then(|| roi.cell_weights()),
    };

    let maps: Vec<GainMap> = schemes
        .iter()
        .map(|&s| gain_map(s, dir_params, &blocked, &roi))
        .collect::<Result<_>>()?;
    for m in &maps {
        write(
            dir.join(format!("gain-{}.csv", m.scheme.name())),
            io::gain_map_to_string(m),
        )?;
    }
    let gains: Vec<Vec<f64>> = maps.iter().map(GainMap::masked_values).collect();
    let free_opt = gain_map(Scheme::Optimal, dir_params, free, &roi)?.masked_values();
    let free_dir = gain_map(Scheme::Directional, dir_params, free, &roi)?.masked_values();
    let (opt, dirg) = (&gains[0], &gains[1]);

    let mut quantities = Vec::new();
    for (s, g) in schemes.iter().zip(&gains) {
        quantities.push(summarizer.summarize(format!("gain/{}", s.name()), g)?);
    }
    quantities.push(summarizer.summarize("loss/optimal".into(), &diff(&free_opt, opt))?);
    quantities.push(summarizer.summarize("loss/directional".into(), &diff(&free_dir, dirg))?);
    for i in 0..config.array.n_antennas {
        let l = loss_samples(free, &blocked, i, &roi)?;
        quantities.push(summarizer.summarize(format!("loss/element-{i}"), &l)?);
    }
    let dir_gap = diff(opt, dirg);
    quantities.push(summarizer.summarize("gap/directional-to-optimal".into(), &dir_gap)?);
    quantities.push(summarizer.summarize(
        "gap/directional-to-free-optimal".into(),
        &diff(&free_opt, dirg),
    )?);
    let mut closure = 0.0f64;
    for (s, g) in schemes.iter().zip(&gains).skip(2) {
        let improvement = diff(g, dirg);
        let gap = diff(opt, g);
        for ((a, b), c) in improvement.iter().zip(&gap).zip(&dir_gap) {
            closure = closure.max((a + b - c).abs());
        }
        quantities.push(summarizer.summarize(
            format!("improvement/{}-over-directional", s.name()),
            &improvement,
        )?);
        quantities.push(summarizer.summarize(format!("gap/{}-to-optimal", s.name()), &gap)?);
    }

    let mut phase_mix = Vec::new();
    for i in 0..config.array.n_antennas {
        for j in i + 1..config.array.n_antennas {
            phase_mix.push(PhaseMixingRow {
                pair: (i, j),
                freespace_deg: phase_mixing(&pair_phase_diff(free, i, j)?)?,
                blocked_deg: phase_mixing(&pair_phase_diff(&blocked, i, j)?)?,
            });
        }
    }
    let coverage = coverage_stats(free, &blocked, config.roi.g1_db, config.roi.g2_db)?;

    write(
        dir.join("cdf.csv"),
        io::cdf_table_to_string(quantities.iter().map(|q| (q.name.as_str(), &q.summary))),
    )?;
    write(dir.join("coverage.csv"), io::coverage_to_string(&coverage))?;
    let mut pm = String::from("antenna_i,antenna_j,freespace_deg,blocked_deg\n");
    for r in &phase_mix {
        pm.push_str(&format!(
            "{},{},{},{}\n",
            r.pair.0, r.pair.1, r.freespace_deg, r.blocked_deg
        ));
    }
    write(dir.join("phase-mixing.csv"), pm)?;

    Ok(ScenarioReport {
        name: scenario.name.clone(),
        distortion_seed: seed,
        roi_cells: roi.count(),
        roi_area_fraction: roi.area_fraction,
        quantities,
        phase_mixing: phase_mix,
        coverage,
        closure_max_abs_db: closure,
    })
}
