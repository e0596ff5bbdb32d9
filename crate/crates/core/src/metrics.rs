//! Elemental gains, regions of interest, loss distributions and phase mixing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::AntennaFieldMap;
use crate::grid::{Direction, SphericalGrid};
use crate::units::{power_to_db, wrap_deg};

pub const DEFAULT_G1_DB: f64 = 7.5;
pub const DEFAULT_G2_DB: f64 = 2.5;
pub const DEFAULT_PERCENTILES: [f64; 4] = [10.0, 50.0, 80.0, 90.0];

/// Reference θ step of the phase-mixing metric.
const PHASE_MIXING_REF_STEP_DEG: f64 = 5.0;

/// `10·log10 |E_i(θ,φ)|²`; zero field gives the null-gain sentinel.
pub fn elemental_gain(field: &AntennaFieldMap, i: usize, dir: Direction) -> Result<f64> {
    field.check_antenna(i)?;
    let cell = field.grid().locate(dir)?;
    Ok(power_to_db(field.get(i, cell).norm_sqr()))
}

fn gain_at(field: &AntennaFieldMap, i: usize, cell: usize) -> f64 {
    power_to_db(field.get(i, cell).norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoiAntenna {
    Index(usize),
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoiThresholds {
    Gains { g1_db: f64, g2_db: f64 },
    Rectangular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    pub grid: SphericalGrid,
    pub antenna: RoiAntenna,
    pub mask: Vec<bool>,
    pub thresholds: RoiThresholds,
    /// Solid-angle fraction of the whole sphere covered by true cells.
    pub area_fraction: f64,
}

impl RoiMask {
    pub fn from_mask(
        grid: SphericalGrid,
        antenna: RoiAntenna,
        thresholds: RoiThresholds,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} cells, grid has {}",
                mask.len(),
                grid.len()
            )));
        }
        let area_fraction = area_fraction(&grid, &mask);
        Ok(Self {
            grid,
            antenna,
            mask,
            thresholds,
            area_fraction,
        })
    }

    /// Every cell of the grid.
    pub fn all(grid: SphericalGrid) -> Self {
        Self::from_mask(
            grid,
            RoiAntenna::Aggregate,
            RoiThresholds::Rectangular,
            vec![true; grid.len()],
        )
        .expect("mask sized from grid")
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
    }

    /// Solid angles of the true cells, in cell order.
    pub fn cell_weights(&self) -> Vec<f64> {
        self.cells()
            .map(|c| self.grid.cell_solid_angle(self.grid.split(c).0))
            .collect()
    }
}

fn area_fraction(grid: &SphericalGrid, mask: &[bool]) -> f64 {
    let covered: f64 = mask
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(c, _)| grid.cell_solid_angle(grid.split(c).0))
        .sum();
    (covered / (4.0 * std::f64::consts::PI)).clamp(0.0, 1.0)
}

/// `RoI_i = {G_free,i ≥ G1} ∪ {G_blockage,i ≥ G2}`.
pub fn roi_mask(
    free: &AntennaFieldMap,
    blocked: &AntennaFieldMap,
    i: usize,
    g1_db: f64,
    g2_db: f64,
) -> Result<RoiMask> {
    free.check_compatible(blocked)?;
    free.check_antenna(i)?;
    let grid = *free.grid();
    let mask = (0..grid.len())
        .map(|c| gain_at(free, i, c) >= g1_db || gain_at(blocked, i, c) >= g2_db)
        .collect();
    RoiMask::from_mask(
        grid,
        RoiAntenna::Index(i),
        RoiThresholds::Gains { g1_db, g2_db },
        mask,
    )
}

/// Union of the per-antenna threshold regions.
pub fn roi_mask_aggregate(
    free: &AntennaFieldMap,
    blocked: &AntennaFieldMap,
    g1_db: f64,
    g2_db: f64,
) -> Result<RoiMask> {
    free.check_compatible(blocked)?;
    let grid = *free.grid();
    let mut mask = vec![false; grid.len()];
    for i in 0..free.n_antennas() {
        let m = roi_mask(free, blocked, i, g1_db, g2_db)?;
        for (a, b) in mask.iter_mut().zip(m.mask) {
            *a |= b;
        }
    }
    RoiMask::from_mask(
        grid,
        RoiAntenna::Aggregate,
        RoiThresholds::Gains { g1_db, g2_db },
        mask,
    )
}

/// Rectangle `θ ∈ [θ_lo, θ_hi) × φ ∈ [φ_lo, φ_hi)` over grid samples.
pub fn rect_roi(
    grid: &SphericalGrid,
    theta_range: (f64, f64),
    phi_range: (f64, f64),
) -> Result<RoiMask> {
    let (t0, t1) = theta_range;
    let (p0, p1) = phi_range;
    if t1.partial_cmp(&t0) != Some(Ordering::Greater)
        || p1.partial_cmp(&p0) != Some(Ordering::Greater)
    {
        return Err(Error::Empty(format!(
            "RoI ranges theta [{t0}, {t1}) and phi [{p0}, {p1}) must be non-empty"
        )));
    }
    let eps = 1e-9;
    let mask: Vec<bool> = grid
        .directions()
        .map(|d| {
            d.theta_deg >= t0 - eps
                && d.theta_deg < t1 - eps
                && d.phi_deg >= p0 - eps
                && d.phi_deg < p1 - eps
        })
        .collect();
    if !mask.iter().any(|&b| b) {
        return Err(Error::Empty(format!(
            "RoI theta [{t0}, {t1}) × phi [{p0}, {p1}) contains no grid samples"
        )));
    }
    RoiMask::from_mask(
        *grid,
        RoiAntenna::Aggregate,
        RoiThresholds::Rectangular,
        mask,
    )
}

/// `G_free,i − G_blockage,i` over the mask cells; positive values are losses.
pub fn loss_samples(
    free: &AntennaFieldMap,
    blocked: &AntennaFieldMap,
    i: usize,
    mask: &RoiMask,
) -> Result<Vec<f64>> {
    free.check_compatible(blocked)?;
    free.check_antenna(i)?;
    if mask.grid != *free.grid() {
        return Err(Error::DimensionMismatch(
            "RoI mask grid differs from the field grid".into(),
        ));
    }
    mask.cells()
        .map(|c| {
            let l = gain_at(free, i, c) - gain_at(blocked, i, c);
            if l.is_finite() {
                Ok(l)
            } else {
                let d = free.grid().direction(c);
                Err(Error::ZeroField(format!(
                    "antenna {i} has a zero field at (theta={}°, phi={}°) inside the RoI",
                    d.theta_deg, d.phi_deg
                )))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    pub n_samples: usize,
    pub mean: f64,
    pub std: f64,
    /// `(percentile in [0,100], value)`.
    pub percentiles: Vec<(f64, f64)>,
    pub min: f64,
    pub max: f64,
}

impl CdfSummary {
    pub fn percentile(&self, p: f64) -> Option<f64> {
        self.percentiles
            .iter()
            .find(|(q, _)| *q == p)
            .map(|(_, v)| *v)
    }
}

fn check_summary_input(samples: &[f64], percentiles: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("cannot summarize an empty sample set".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(
            "sample set contains a non-finite value".into(),
        ));
    }
    if percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(Error::InvalidParameter(
            "percentiles must lie in [0, 100]".into(),
        ));
    }
    Ok(())
}

/// Mean/std (population) and percentiles by linear interpolation between order statistics:
/// the p-th percentile sits at sorted position `(n−1)·p/100`.
pub fn cdf_summary(samples: &[f64], percentiles: &[f64]) -> Result<CdfSummary> {
    check_summary_input(samples, percentiles)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let pct = percentiles
        .iter()
        .map(|&p| {
            let h = (n - 1) as f64 * p / 100.0;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let v = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
            (p, v)
        })
        .collect();
    Ok(CdfSummary {
        n_samples: n,
        mean,
        std: var.sqrt(),
        percentiles: pct,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Weighted analogue of [`cdf_summary`]. Sorted sample k sits at cumulative position
/// `W_{<k} / (W − w_last)`, which reduces to `k/(n−1)` for equal weights.
pub fn cdf_summary_weighted(
    samples: &[f64],
    weights: &[f64],
    percentiles: &[f64],
) -> Result<CdfSummary> {
    check_summary_input(samples, percentiles)?;
    if weights.len() != samples.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} samples",
            weights.len(),
            samples.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidParameter(
            "weights must be >= 0 with a positive sum".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .zip(weights.iter().copied())
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mean = pairs.iter().map(|(x, w)| x * w).sum::<f64>() / total;
    let var = pairs
        .iter()
        .map(|(x, w)| w * (x - mean).powi(2))
        .sum::<f64>()
        / total;
    let denom = total - pairs[n - 1].1;
    let mut pos = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (_, w) in &pairs {
        pos.push(if denom > 0.0 {
            (acc / denom).min(1.0)
        } else {
            1.0
        });
        acc += w;
    }
    let pct = percentiles
        .iter()
        .map(|&p| {
            let q = p / 100.0;
            let k = pos.partition_point(|&x| x <= q);
            let v = if k == 0 {
                pairs[0].0
            } else if k >= n {
                pairs[n - 1].0
            } else {
                let (a, b) = (pos[k - 1], pos[k]);
                let t = if b > a { (q - a) / (b - a) } else { 0.0 };
                pairs[k - 1].0 + t * (pairs[k].0 - pairs[k - 1].0)
            };
            (p, v)
        })
        .collect();
    Ok(CdfSummary {
        n_samples: n,
        mean,
        std: var.sqrt(),
        percentiles: pct,
        min: pairs[0].0,
        max: pairs[n - 1].0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub antenna: usize,
    pub max_free_gain_dbi: f64,
    pub max_blocked_gain_dbi: f64,
    pub area_pct: f64,
}

/// Per-antenna peak gains and RoI_i area.
pub fn coverage_stats(
    free: &AntennaFieldMap,
    blocked: &AntennaFieldMap,
    g1_db: f64,
    g2_db: f64,
) -> Result<Vec<CoverageRow>> {
    free.check_compatible(blocked)?;
    let cells = free.grid().len();
    (0..free.n_antennas())
        .map(|i| {
            let max_of = |f: &AntennaFieldMap| {
                (0..cells)
                    .map(|c| gain_at(f, i, c))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let roi = roi_mask(free, blocked, i, g1_db, g2_db)?;
            Ok(CoverageRow {
                antenna: i,
                max_free_gain_dbi: max_of(free),
                max_blocked_gain_dbi: max_of(blocked),
                area_pct: 100.0 * roi.area_fraction,
            })
        })
        .collect()
}

/// `∠E_j − ∠E_i` in degrees, wrapped to (−180, 180]; `None` where either field is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiffMap {
    pub grid: SphericalGrid,
    pub pair: (usize, usize),
    pub values: Vec<Option<f64>>,
}

pub fn pair_phase_diff(field: &AntennaFieldMap, i: usize, j: usize) -> Result<PhaseDiffMap> {
    field.check_antenna(i)?;
    field.check_antenna(j)?;
    if i == j {
        return Err(Error::InvalidParameter(format!(
            "phase difference needs i != j, got {i}"
        )));
    }
    let values = (0..field.grid().len())
        .map(|c| {
            let (a, b) = (field.get(i, c), field.get(j, c));
            if a.norm_sqr() == 0.0 || b.norm_sqr() == 0.0 {
                None
            } else {
                Some(wrap_deg((b * a.conj()).arg().to_degrees()))
            }
        })
        .collect();
    Ok(PhaseDiffMap {
        grid: *field.grid(),
        pair: (i, j),
        values,
    })
}

/// Mean absolute wrapped forward θ-difference, in degrees per 5° of θ.
pub fn phase_mixing(pd: &PhaseDiffMap) -> Result<f64> {
    let g = &pd.grid;
    if g.n_theta() < 2 {
        return Err(Error::InvalidParameter(
            "phase mixing needs at least two theta samples".into(),
        ));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ip in 0..g.n_phi() {
        for it in 0..g.n_theta() - 1 {
            if let (Some(a), Some(b)) = (pd.values[g.cell(it, ip)], pd.values[g.cell(it + 1, ip)]) {
                sum += wrap_deg(b - a).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::ZeroField(
            "no valid adjacent cells for phase mixing".into(),
        ));
    }
    Ok(sum / count as f64 * PHASE_MIXING_REF_STEP_DEG / g.theta_step)
}
