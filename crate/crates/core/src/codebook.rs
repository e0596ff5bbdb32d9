//! Beamforming codebooks, the MRC oracle, and realized-gain search.
//!
//! Realized gain of a codebook at a field vector `E` is
//! `max_k 10·log10 |Σ_i conj(w_{k,i})·E_i|²`. The enhanced codebooks are
//! Cartesian products of per-antenna weights; their search walks the product
//! in index order with shared prefix sums, which performs exactly the same
//! floating-point operations as evaluating each entry on its own.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::AntennaFieldMap;
use crate::grid::{Direction, SphericalGrid};
use crate::metrics::RoiMask;
use crate::units::{inner, power_to_db, total_power, NULL_GAIN_DB};

/// Largest codebook the exhaustive search will accept.
pub const MAX_CODEBOOK_SIZE: u128 = 10_000_000;

const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamTag {
    Directional(usize),
    EnhPhase(Vec<usize>),
    EnhPhaseAmp(Vec<usize>),
    Mrc,
    Element(usize),
    Custom(String),
}

impl std::fmt::Display for BeamTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ks = |k: &[usize]| {
            k.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("-")
        };
        match self {
            BeamTag::Directional(j) => write!(f, "directional({j})"),
            BeamTag::EnhPhase(k) => write!(f, "enh-phase({})", ks(k)),
            BeamTag::EnhPhaseAmp(k) => write!(f, "enh-phase-amp({})", ks(k)),
            BeamTag::Mrc => write!(f, "mrc"),
            BeamTag::Element(i) => write!(f, "element({i})"),
            BeamTag::Custom(s) => write!(f, "custom({s})"),
        }
    }
}

/// Unit-norm complex weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeight {
    weights: Vec<Complex64>,
    pub tag: BeamTag,
}

impl BeamWeight {
    /// Scales `weights` to unit norm. Rejects empty or all-zero vectors.
    pub fn normalized(weights: Vec<Complex64>, tag: BeamTag) -> Result<Self> {
        let norm = total_power(&weights).sqrt();
        if weights.is_empty() || !(norm.is_finite() && norm > 0.0) {
            return Err(Error::ZeroField(format!(
                "cannot normalize weights for {tag}"
            )));
        }
        let weights = if (norm - 1.0).abs() <= UNIT_NORM_TOL {
            weights
        } else {
            weights.into_iter().map(|w| w / norm).collect()
        };
        Ok(Self { weights, tag })
    }

    /// Accepts weights that are already unit norm (within 1e−12).
    pub fn new(weights: Vec<Complex64>, tag: BeamTag) -> Result<Self> {
        let p = total_power(&weights);
        if (p - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "beam weight {tag} has squared norm {p}, expected 1"
            )));
        }
        Ok(Self { weights, tag })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Combined power `|w^H e|²`.
    pub fn power(&self, e: &[Complex64]) -> f64 {
        inner(&self.weights, e).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodebookKind {
    Directional,
    EnhPhase,
    EnhPhaseAmp,
    ElementSweep,
}

#[derive(Debug, Clone)]
enum Storage {
    Explicit(Vec<BeamWeight>),
    /// Entry `(k_2..k_N)` has weight `table[i][k_i]` on antenna i; antenna 0 has one level.
    Product {
        table: Vec<Vec<Complex64>>,
    },
}

#[derive(Debug, Clone)]
pub struct Codebook {
    kind: CodebookKind,
    bits: Option<u32>,
    n_antennas: usize,
    storage: Storage,
}

/// Winner of a codebook search: linear combined power and entry index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamChoice {
    pub power: f64,
    pub index: usize,
}

impl BeamChoice {
    pub fn gain_db(&self) -> f64 {
        power_to_db(self.power)
    }
}

impl Codebook {
    /// Codebook from explicit unit-norm entries of equal length.
    pub fn from_entries(
        kind: CodebookKind,
        bits: Option<u32>,
        entries: Vec<BeamWeight>,
    ) -> Result<Self> {
        let n = entries
            .first()
            .ok_or_else(|| Error::Empty("codebook has no entries".into()))?
            .len();
        if n == 0 || entries.iter().any(|e| e.len() != n) {
            return Err(Error::DimensionMismatch(
                "codebook entries differ in length".into(),
            ));
        }
        for e in &entries {
            let p = total_power(e.weights());
            if (p - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "codebook entry {} is not unit norm (|w|² = {p})",
                    e.tag
                )));
            }
        }
        Ok(Self {
            kind,
            bits,
            n_antennas: n,
            storage: Storage::Explicit(entries),
        })
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn bits(&self) -> Option<u32> {
        self.bits
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Explicit(v) => v.len(),
            Storage::Product { table } => table.iter().map(Vec::len).product(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materializes entry `index`.
    pub fn entry(&self, index: usize) -> BeamWeight {
        match &self.storage {
            Storage::Explicit(v) => v[index].clone(),
            Storage::Product { table } => {
                let ks = product_digits(table, index);
                let weights = ks.iter().enumerate().map(|(i, &k)| table[i][k]).collect();
                let tail = ks[1..].to_vec();
                let tag = match self.kind {
                    CodebookKind::EnhPhaseAmp => BeamTag::EnhPhaseAmp(tail),
                    _ => BeamTag::EnhPhase(tail),
                };
                BeamWeight { weights, tag }
            }
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = BeamWeight> + '_ {
        (0..self.len()).map(move |k| self.entry(k))
    }

    fn check_vector(&self, e: &[Complex64]) -> Result<()> {
        if e.len() != self.n_antennas {
            return Err(Error::DimensionMismatch(format!(
                "field vector has {} elements, codebook expects {}",
                e.len(),
                self.n_antennas
            )));
        }
        Ok(())
    }

    /// Best entry by exhaustive search. Ties go to the lowest index.
    pub fn search(&self, e: &[Complex64]) -> Result<BeamChoice> {
        self.check_vector(e)?;
        match &self.storage {
            Storage::Explicit(_) => self.search_naive(e),
            Storage::Product { table } => Ok(search_product(table, e)),
        }
    }

    /// Reference search: materialize every entry and evaluate it independently.
    pub fn search_naive(&self, e: &[Complex64]) -> Result<BeamChoice> {
        self.check_vector(e)?;
        let mut best = BeamChoice {
            power: f64::NEG_INFINITY,
            index: 0,
        };
        for (k, w) in self.entries().enumerate() {
            let p = w.power(e);
            if p > best.power {
                best = BeamChoice { power: p, index: k };
            }
        }
        Ok(best)
    }
}

fn product_digits(table: &[Vec<Complex64>], mut index: usize) -> Vec<usize> {
    let mut ks = vec![0; table.len()];
    for i in (0..table.len()).rev() {
        let r = table[i].len();
        ks[i] = index % r;
        index /= r;
    }
    ks
}

/// Odometer walk over the product in index order (last antenna fastest).
fn search_product(table: &[Vec<Complex64>], e: &[Complex64]) -> BeamChoice {
    let n = table.len();
    // prefix[i+1] = Σ_{m ≤ i} conj(w_m)·e_m for the current digits
    let mut prefix = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut ks = vec![0usize; n];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + table[i][0].conj() * e[i];
    }
    let mut best = BeamChoice {
        power: prefix[n].norm_sqr(),
        index: 0,
    };
    let mut index = 0;
    loop {
        let mut d = n;
        while d > 0 {
            d -= 1;
            ks[d] += 1;
            if ks[d] < table[d].len() {
                break;
            }
            ks[d] = 0;
            if d == 0 {
                return best;
            }
        }
        for i in d..n {
            prefix[i + 1] = prefix[i] + table[i][ks[i]].conj() * e[i];
        }
        index += 1;
        let p = prefix[n].norm_sqr();
        if p > best.power {
            best = BeamChoice { power: p, index };
        }
    }
}

/// `e^{jφ_k}` with `φ_k = 2πk/2^B`. Quarter turns are exact.
pub fn phase_level(bits: u32, k: usize) -> Complex64 {
    let levels = 1usize << bits;
    let k = k % levels;
    if (4 * k).is_multiple_of(levels) {
        return match 4 * k / levels {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let (s, c) = level_angle(bits, k).sin_cos();
    Complex64::new(c, s)
}

fn level_angle(bits: u32, k: usize) -> f64 {
    TAU * k as f64 / (1u64 << bits) as f64
}

/// The 2^B phase values `2πk/2^B`, in radians.
pub fn phase_levels(bits: u32) -> Result<Vec<f64>> {
    check_bits(bits)?;
    Ok((0..1usize << bits).map(|k| level_angle(bits, k)).collect())
}

fn check_bits(bits: u32) -> Result<()> {
    if !(1..=16).contains(&bits) {
        return Err(Error::InvalidParameter(format!(
            "phase shifter bits must be in 1..=16, got {bits}"
        )));
    }
    Ok(())
}

/// Nearest B-bit level index to an arbitrary phase.
pub fn quantize_phase(bits: u32, phase: f64) -> usize {
    let levels = (1u64 << bits) as f64;
    let k = (phase.rem_euclid(TAU) / TAU * levels).round() as u64;
    (k % (1u64 << bits)) as usize
}

/// J steering beams at beamspace points `u_j = −1 + (2j−1)/J`, phases rounded to `quant_bits`.
///
/// Beam j has `w_i ∝ exp(j·2π·spacing·i·u_j)`, so `|w^H E|` peaks where `cosθ = u_j`
/// for a field with inter-element phase `2π·spacing·cosθ`.
pub fn directional_codebook(
    n: usize,
    j_beams: usize,
    quant_bits: u32,
    spacing: f64,
) -> Result<Codebook> {
    if n < 1 || j_beams < 1 {
        return Err(Error::InvalidParameter(format!(
            "directional codebook needs N >= 1 and J >= 1, got N={n}, J={j_beams}"
        )));
    }
    check_bits(quant_bits)?;
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be > 0, got {spacing}"
        )));
    }
    let amp = (1.0 / n as f64).sqrt();
    let entries = (1..=j_beams)
        .map(|j| {
            let u = beamspace_point(j, j_beams);
            let w = (0..n)
                .map(|i| {
                    let k = quantize_phase(quant_bits, TAU * spacing * i as f64 * u);
                    phase_level(quant_bits, k) * amp
                })
                .collect();
            BeamWeight::normalized(w, BeamTag::Directional(j - 1))
        })
        .collect::<Result<Vec<_>>>()?;
    Codebook::from_entries(CodebookKind::Directional, Some(quant_bits), entries)
}

/// `u_j = −1 + (2j−1)/J` for `j = 1..=J`.
pub fn beamspace_point(j: usize, j_beams: usize) -> f64 {
    -1.0 + (2 * j - 1) as f64 / j_beams as f64
}

fn product_size(n: usize, bits: u32) -> Result<u128> {
    let levels = 1u128 << bits;
    let size = (0..n - 1).try_fold(1u128, |acc, _| acc.checked_mul(levels));
    match size {
        Some(s) if s <= MAX_CODEBOOK_SIZE => Ok(s),
        Some(s) => Err(Error::CodebookTooLarge {
            size: s,
            limit: MAX_CODEBOOK_SIZE,
        }),
        None => Err(Error::CodebookTooLarge {
            size: u128::MAX,
            limit: MAX_CODEBOOK_SIZE,
        }),
    }
}

fn product_codebook(kind: CodebookKind, bits: u32, amps: &[f64]) -> Result<Codebook> {
    let n = amps.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "enhanced codebooks need N >= 2, got {n}"
        )));
    }
    check_bits(bits)?;
    product_size(n, bits)?;
    let levels = 1usize << bits;
    let table = amps
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if i == 0 {
                vec![Complex64::new(a, 0.0)]
            } else {
                (0..levels).map(|k| phase_level(bits, k) * a).collect()
            }
        })
        .collect();
    Ok(Codebook {
        kind,
        bits: Some(bits),
        n_antennas: n,
        storage: Storage::Product { table },
    })
}

/// All `(2^B)^(N−1)` equal-amplitude relative-phase combinations, first phase fixed to 0.
pub fn enh_phase_codebook(n: usize, bits: u32) -> Result<Codebook> {
    let amp = (1.0 / n as f64).sqrt();
    product_codebook(CodebookKind::EnhPhase, bits, &vec![amp; n])
}

/// Same phase grid as [`enh_phase_codebook`] with amplitudes `√(S_i/ΣS)`.
pub fn enh_phase_amp_codebook(n: usize, bits: u32, s: &StrengthVector) -> Result<Codebook> {
    if s.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "strength vector has {} entries, expected {n}",
            s.len()
        )));
    }
    product_codebook(CodebookKind::EnhPhaseAmp, bits, &s.amplitudes())
}

/// N single-element beams (standard basis vectors).
pub fn element_sweep_codebook(n: usize) -> Result<Codebook> {
    if n < 1 {
        return Err(Error::InvalidParameter("element sweep needs N >= 1".into()));
    }
    let entries = (0..n)
        .map(|i| {
            let w = (0..n)
                .map(|m| Complex64::new(if m == i { 1.0 } else { 0.0 }, 0.0))
                .collect();
            BeamWeight::new(w, BeamTag::Element(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Codebook::from_entries(CodebookKind::ElementSweep, None, entries)
}

/// Per-element training powers `S_i ≥ 0`, not all zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrengthVector(Vec<f64>);

impl StrengthVector {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::Empty("strength vector".into()));
        }
        if s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter(
                "strengths must be finite and >= 0".into(),
            ));
        }
        if s.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroField("all training strengths are zero".into()));
        }
        Ok(Self(s))
    }

    /// `S_i = |E_i|²`.
    pub fn from_field_vector(e: &[Complex64]) -> Result<Self> {
        Self::new(e.iter().map(|z| z.norm_sqr()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `√(S_i/ΣS)`; equal strengths give exactly the uniform amplitude `√(1/N)`.
    pub fn amplitudes(&self) -> Vec<f64> {
        let n = self.0.len();
        if self.0.iter().all(|&x| x == self.0[0]) {
            return vec![(1.0 / n as f64).sqrt(); n];
        }
        let total: f64 = self.0.iter().sum();
        self.0.iter().map(|&x| (x / total).sqrt()).collect()
    }
}

/// Noiseless single-element training at an on-grid direction.
pub fn element_strengths(field: &AntennaFieldMap, dir: Direction) -> Result<StrengthVector> {
    StrengthVector::from_field_vector(&field.vector_at(dir)?)
}

/// `w = E/‖E‖`.
pub fn mrc_weights_for(e: &[Complex64]) -> Result<BeamWeight> {
    if total_power(e) == 0.0 {
        return Err(Error::ZeroField(
            "MRC weights undefined for an all-zero field vector".into(),
        ));
    }
    BeamWeight::normalized(e.to_vec(), BeamTag::Mrc)
}

pub fn mrc_weights(field: &AntennaFieldMap, dir: Direction) -> Result<BeamWeight> {
    mrc_weights_for(&field.vector_at(dir)?)
}

/// `10·log10 Σ|E_i|²`, or the null-gain sentinel for an all-zero vector.
pub fn optimal_gain_for(e: &[Complex64]) -> f64 {
    power_to_db(total_power(e))
}

pub fn optimal_gain(field: &AntennaFieldMap, dir: Direction) -> Result<f64> {
    Ok(optimal_gain_for(&field.vector_at(dir)?))
}

/// `(gain dB, winning index)` of a codebook at an on-grid direction.
pub fn realized_gain(
    cbk: &Codebook,
    field: &AntennaFieldMap,
    dir: Direction,
) -> Result<(f64, usize)> {
    let c = cbk.search(&field.vector_at(dir)?)?;
    Ok((c.gain_db(), c.index))
}

/// Beamforming scheme evaluated per direction by [`gain_map`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    Optimal,
    Directional,
    EnhPhase {
        bits: u32,
    },
    /// Amplitudes come from element training at each evaluated direction.
    EnhPhaseAmp {
        bits: u32,
    },
}

impl Scheme {
    pub fn name(&self) -> String {
        match self {
            Scheme::Optimal => "optimal".into(),
            Scheme::Directional => "directional".into(),
            Scheme::EnhPhase { bits } => format!("enh-phase-B{bits}"),
            Scheme::EnhPhaseAmp { bits } => format!("enh-phase-amp-B{bits}"),
        }
    }
}

/// Directional codebook parameters used whenever [`Scheme::Directional`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalParams {
    pub beams: usize,
    pub quant_bits: u32,
    pub spacing: f64,
}

impl Default for DirectionalParams {
    fn default() -> Self {
        Self {
            beams: 4,
            quant_bits: 5,
            spacing: 0.5,
        }
    }
}

/// Evaluates a scheme on field vectors. Builds fixed codebooks once.
pub struct SchemeEvaluator {
    scheme: Scheme,
    fixed: Option<Codebook>,
    n_antennas: usize,
}

impl SchemeEvaluator {
    pub fn new(scheme: Scheme, n_antennas: usize, dir_params: DirectionalParams) -> Result<Self> {
        let fixed = match scheme {
            Scheme::Optimal | Scheme::EnhPhaseAmp { .. } => None,
            Scheme::Directional => Some(directional_codebook(
                n_antennas,
                dir_params.beams,
                dir_params.quant_bits,
                dir_params.spacing,
            )?),
            Scheme::EnhPhase { bits } => Some(enh_phase_codebook(n_antennas, bits)?),
        };
        if let Scheme::EnhPhaseAmp { bits } = scheme {
            // validates N and B up front
            product_codebook(CodebookKind::EnhPhaseAmp, bits, &vec![1.0; n_antennas])?;
        }
        Ok(Self {
            scheme,
            fixed,
            n_antennas,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn gain_db(&self, e: &[Complex64]) -> Result<f64> {
        if e.len() != self.n_antennas {
            return Err(Error::DimensionMismatch(format!(
                "field vector has {} elements, scheme expects {}",
                e.len(),
                self.n_antennas
            )));
        }
        match (self.scheme, &self.fixed) {
            (Scheme::Optimal, _) => Ok(optimal_gain_for(e)),
            (Scheme::EnhPhaseAmp { bits }, _) => {
                if total_power(e) == 0.0 {
                    return Ok(NULL_GAIN_DB);
                }
                let s = StrengthVector::from_field_vector(e)?;
                Ok(enh_phase_amp_codebook(e.len(), bits, &s)?
                    .search(e)?
                    .gain_db())
            }
            (_, Some(cbk)) => Ok(cbk.search(e)?.gain_db()),
            (_, None) => unreachable!("fixed codebook built in new()"),
        }
    }
}

/// Per-direction gain over the cells of `mask`; `None` outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub grid: SphericalGrid,
    pub scheme: Scheme,
    pub values: Vec<Option<f64>>,
}

impl GainMap {
    /// Gains of the masked cells in flat cell order.
    pub fn masked_values(&self) -> Vec<f64> {
        self.values.iter().filter_map(|v| *v).collect()
    }
}

pub fn gain_map(
    scheme: Scheme,
    dir_params: DirectionalParams,
    field: &AntennaFieldMap,
    mask: &RoiMask,
) -> Result<GainMap> {
    if mask.grid != *field.grid() {
        return Err(Error::DimensionMismatch(
            "RoI mask grid differs from the field grid".into(),
        ));
    }
    let eval = SchemeEvaluator::new(scheme, field.n_antennas(), dir_params)?;
    let values = mask
        .mask
        .par_iter()
        .enumerate()
        .map(|(c, &on)| {
            if on {
                eval.gain_db(&field.vector(c)).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainMap {
        grid: *field.grid(),
        scheme,
        values,
    })
}
