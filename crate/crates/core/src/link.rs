//! Clustered blockage channel, received SNR, and the lower bound on the SNR gained
//! by adding amplitude control to a quantized phase-only codebook.
//!
//! With a dominant cluster of gain `α₁` arriving from a direction where the
//! blocked UE field vector is `E`, the received SNR for a unit-norm combiner `g`
//! is approximately `|α₁|²·|g^H E|²`. Writing `ΔSNR` for the difference between
//! the best phase+amplitude entry (amplitudes `√(|E_i|²/Σ|E|²)`) and the best
//! phase-only entry, with B-bit phase shifters:
//!
//! ```text
//! ΔSNR/|α₁|² ≥ N·Var·cos²(π/2^B) − (2/N)·sin²(π/2^B)·(Σ|E_i|)²
//! Var        = Σ|E_i|²/N − (Σ|E_i|/N)²
//! ```
//!
//! [`inequality_chain_check`] re-derives the bound step by step on concrete
//! vectors and reports the margin of every intermediate inequality.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codebook::{
    enh_phase_amp_codebook, enh_phase_codebook, BeamWeight, Codebook, StrengthVector,
};
use crate::error::{Error, Result};
use crate::field::AntennaFieldMap;
use crate::grid::Direction;
use crate::units::{inner, total_power, wrap_rad};

/// Absolute slack for linear-power bound checks.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    pub alpha: Complex64,
    pub rx_dir: Direction,
    pub tx_dir: Direction,
}

/// Clusters sorted by decreasing `|α|`, the blocked UE field, and an M-element
/// half-wavelength linear array at the base station.
#[derive(Debug, Clone)]
pub struct ChannelInstance {
    clusters: Vec<Cluster>,
    rx_field: AntennaFieldMap,
    tx_antennas: usize,
    pub rho: f64,
}

impl ChannelInstance {
    pub fn new(
        mut clusters: Vec<Cluster>,
        rx_field: AntennaFieldMap,
        tx_antennas: usize,
    ) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Empty("channel needs at least one cluster".into()));
        }
        if tx_antennas < 1 {
            return Err(Error::InvalidParameter(
                "tx array needs at least one antenna".into(),
            ));
        }
        if clusters
            .iter()
            .any(|c| !(c.alpha.re.is_finite() && c.alpha.im.is_finite()))
        {
            return Err(Error::NonFinite("cluster gain".into()));
        }
        for c in &clusters {
            rx_field.grid().locate(c.rx_dir)?;
        }
        clusters.sort_by(|a, b| b.alpha.norm().total_cmp(&a.alpha.norm()));
        Ok(Self {
            clusters,
            rx_field,
            tx_antennas,
            rho: 1.0,
        })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn rx_field(&self) -> &AntennaFieldMap {
        &self.rx_field
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    /// `H = Σ_ℓ α_ℓ·E(rx_ℓ)·a_T(tx_ℓ)^H`, row-major N × M.
    pub fn matrix(&self) -> Result<Vec<Complex64>> {
        let n = self.rx_field.n_antennas();
        let m = self.tx_antennas;
        let mut h = vec![Complex64::new(0.0, 0.0); n * m];
        for c in &self.clusters {
            let e = self.rx_field.vector_at(c.rx_dir)?;
            let a = tx_steering(m, c.tx_dir);
            for (r, er) in e.iter().enumerate() {
                for (col, ac) in a.iter().enumerate() {
                    h[r * m + col] += c.alpha * er * ac.conj();
                }
            }
        }
        Ok(h)
    }
}

/// Unit-norm steering vector of an M-element half-wavelength array along Z.
pub fn tx_steering(m: usize, dir: Direction) -> Vec<Complex64> {
    let u = dir.theta_deg.to_radians().cos();
    let amp = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|k| Complex64::from_polar(amp, PI * k as f64 * u))
        .collect()
}

/// `ρ·|g^H H f|²`.
pub fn rx_snr(ch: &ChannelInstance, f: &BeamWeight, g: &BeamWeight) -> Result<f64> {
    let n = ch.rx_field.n_antennas();
    let m = ch.tx_antennas;
    if f.len() != m || g.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "tx beam has {} weights (M={m}), rx beam has {} (N={n})",
            f.len(),
            g.len()
        )));
    }
    let h = ch.matrix()?;
    let hf: Vec<Complex64> = (0..n)
        .map(|r| (0..m).map(|col| h[r * m + col] * f.weights()[col]).sum())
        .collect();
    Ok(ch.rho * inner(g.weights(), &hf).norm_sqr())
}

/// Dominant-cluster surrogate `|α₁|²·|g^H E|²`.
pub fn approx_rx_snr(e: &[Complex64], alpha1: Complex64, g: &BeamWeight) -> Result<f64> {
    if g.len() != e.len() {
        return Err(Error::DimensionMismatch(format!(
            "combiner has {} weights, field vector {}",
            g.len(),
            e.len()
        )));
    }
    Ok(alpha1.norm_sqr() * g.power(e))
}

/// `Σ|E_i|²/N − (Σ|E_i|/N)²`.
pub fn var_blockage(e: &[Complex64]) -> f64 {
    let n = e.len() as f64;
    let mean_sq = total_power(e) / n;
    let mean = e.iter().map(|z| z.norm()).sum::<f64>() / n;
    (mean_sq - mean * mean).max(0.0)
}

/// Lower bound on `ΔSNR/|α₁|²`; may be negative.
pub fn theorem1_lb(e: &[Complex64], bits: u32) -> f64 {
    let n = e.len() as f64;
    let (s, c) = (PI / (1u64 << bits) as f64).sin_cos();
    let sum_abs: f64 = e.iter().map(|z| z.norm()).sum();
    n * var_blockage(e) * c * c - 2.0 * s * s / n * sum_abs * sum_abs
}

fn check_enhanced_inputs(e: &[Complex64], bits: u32) -> Result<()> {
    if e.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "enhanced codebooks need N >= 2, got {}",
            e.len()
        )));
    }
    if bits < 1 {
        return Err(Error::InvalidParameter(
            "phase shifter bits must be >= 1".into(),
        ));
    }
    if e.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite("field vector".into()));
    }
    Ok(())
}

/// Best entries of both enhanced codebooks at `e`.
struct EnhancedPair {
    phase_cbk: Codebook,
    phase_power: f64,
    phase_index: usize,
    amp_cbk: Option<Codebook>,
    amp_power: f64,
    amp_index: usize,
}

fn search_enhanced(e: &[Complex64], bits: u32) -> Result<EnhancedPair> {
    check_enhanced_inputs(e, bits)?;
    let phase_cbk = enh_phase_codebook(e.len(), bits)?;
    let p = phase_cbk.search(e)?;
    if total_power(e) == 0.0 {
        return Ok(EnhancedPair {
            phase_cbk,
            phase_power: p.power,
            phase_index: p.index,
            amp_cbk: None,
            amp_power: 0.0,
            amp_index: 0,
        });
    }
    let s = StrengthVector::from_field_vector(e)?;
    let amp_cbk = enh_phase_amp_codebook(e.len(), bits, &s)?;
    let a = amp_cbk.search(e)?;
    Ok(EnhancedPair {
        phase_cbk,
        phase_power: p.power,
        phase_index: p.index,
        amp_cbk: Some(amp_cbk),
        amp_power: a.power,
        amp_index: a.index,
    })
}

/// Best phase+amplitude SNR minus best phase-only SNR, both by exhaustive search.
pub fn delta_snr_achieved(e: &[Complex64], alpha1: Complex64, bits: u32) -> Result<f64> {
    let pair = search_enhanced(e, bits)?;
    Ok(alpha1.norm_sqr() * pair.amp_power - alpha1.norm_sqr() * pair.phase_power)
}

/// Worst case over ±1 element signs of the best directional beam:
/// `min_a max_j |Σ_i conj(w_ij)·|E_free,i|·A_i·a_i|²`.
pub fn worst_case_dir_snr(e_free: &[Complex64], amp: &[f64], cbk: &Codebook) -> Result<f64> {
    sign_extreme(e_free, amp, cbk, true)
}

/// Best case over the same sign patterns as [`worst_case_dir_snr`].
pub fn best_case_dir_snr(e_free: &[Complex64], amp: &[f64], cbk: &Codebook) -> Result<f64> {
    sign_extreme(e_free, amp, cbk, false)
}

const MAX_SIGN_ANTENNAS: usize = 20;

fn sign_extreme(e_free: &[Complex64], amp: &[f64], cbk: &Codebook, worst: bool) -> Result<f64> {
    let n = e_free.len();
    if amp.len() != n || cbk.n_antennas() != n {
        return Err(Error::DimensionMismatch(format!(
            "field has {n} elements, amplitudes {}, codebook {}",
            amp.len(),
            cbk.n_antennas()
        )));
    }
    if n > MAX_SIGN_ANTENNAS {
        return Err(Error::InvalidParameter(format!(
            "sign enumeration supports at most {MAX_SIGN_ANTENNAS} antennas, got {n}"
        )));
    }
    let mags: Vec<f64> = e_free.iter().zip(amp).map(|(z, a)| z.norm() * a).collect();
    let mut extreme = if worst {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for signs in 0u32..(1 << n) {
        for (i, (vi, m)) in v.iter_mut().zip(&mags).enumerate() {
            *vi = Complex64::new(if signs >> i & 1 == 1 { -m } else { *m }, 0.0);
        }
        let best = cbk.search(&v)?.power;
        extreme = if worst {
            extreme.min(best)
        } else {
            extreme.max(best)
        };
    }
    Ok(extreme)
}

/// One inequality of the chain, stated as `lhs ≥ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStep {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; negative beyond the slack is a violation.
    pub margin: f64,
}

impl ChainStep {
    fn ge(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Self {
            name,
            lhs,
            rhs,
            margin: lhs - rhs,
        }
    }

    pub fn holds(&self) -> bool {
        self.margin >= -BOUND_SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n_antennas: usize,
    pub bits: u32,
    /// Achieved `ΔSNR/|α₁|²`.
    pub delta_snr: f64,
    pub lb: f64,
    pub var_blockage: f64,
    pub amp_snr: f64,
    pub phase_snr: f64,
    /// Cosine and sine terms of the phase+amplitude SNR at its best entry.
    pub cos_term: f64,
    pub sin_term: f64,
    /// `Σ|E_i|·cos θ'_i` and `Σ|E_i|·sin θ'_i` at the best phase-only entry.
    pub phase_cos_sum: f64,
    pub phase_sin_sum: f64,
    /// Per-antenna quantizer residuals (radians) at the best entries; `None` for zero elements.
    pub amp_residuals: Vec<Option<f64>>,
    pub phase_residuals: Vec<Option<f64>>,
    pub residual_bound: f64,
    pub steps: Vec<ChainStep>,
    pub holds: bool,
}

impl BoundReport {
    pub fn violations(&self) -> impl Iterator<Item = &ChainStep> {
        self.steps.iter().filter(|s| !s.holds())
    }

    pub fn max_residual(&self) -> f64 {
        self.amp_residuals
            .iter()
            .chain(&self.phase_residuals)
            .flatten()
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Residuals `θ_i = ∠(conj(w_i)·E_i) − ∠(w^H E)`: each element's phase error
/// relative to the combined sum, in (−π, π].
fn residuals(w: &BeamWeight, e: &[Complex64]) -> Vec<Option<f64>> {
    let total = inner(w.weights(), e);
    let reference = total.arg();
    w.weights()
        .iter()
        .zip(e)
        .map(|(wi, ei)| {
            let t = wi.conj() * ei;
            if t.norm_sqr() == 0.0 || total.norm_sqr() == 0.0 {
                None
            } else {
                Some(wrap_rad(t.arg() - reference))
            }
        })
        .collect()
}

/// Builds `E_blockage = E_free·A·e^{jP}` and verifies every step of the bound derivation.
pub fn inequality_chain_check(
    e_free: &[Complex64],
    amp: &[f64],
    phase: &[f64],
    bits: u32,
) -> Result<BoundReport> {
    let n = e_free.len();
    if amp.len() != n || phase.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "field has {n} elements, amplitudes {}, phases {}",
            amp.len(),
            phase.len()
        )));
    }
    if amp.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::InvalidParameter(
            "distortion amplitudes must be >= 0".into(),
        ));
    }
    let e: Vec<Complex64> = e_free
        .iter()
        .zip(amp.iter().zip(phase))
        .map(|(z, (&a, &p))| z * Complex64::from_polar(a, p))
        .collect();
    bound_report(&e, bits)
}

/// The chain for an already-blocked field vector.
pub fn bound_report(e: &[Complex64], bits: u32) -> Result<BoundReport> {
    let pair = search_enhanced(e, bits)?;
    let nf = e.len() as f64;
    let (s_b, c_b) = (PI / (1u64 << bits) as f64).sin_cos();
    let sum_sq = total_power(e);
    let sum_abs: f64 = e.iter().map(|z| z.norm()).sum();

    let phase_w = pair.phase_cbk.entry(pair.phase_index);
    let phase_residuals = residuals(&phase_w, e);
    let (amp_residuals, cos_term, sin_term) = match &pair.amp_cbk {
        Some(cbk) => {
            let w = cbk.entry(pair.amp_index);
            let r = residuals(&w, e);
            let (mut cs, mut sn) = (0.0, 0.0);
            for (ri, z) in r.iter().zip(e) {
                if let Some(t) = ri {
                    cs += z.norm_sqr() * t.cos();
                    sn += z.norm_sqr() * t.sin();
                }
            }
            (r, cs * cs / sum_sq, sn * sn / sum_sq)
        }
        None => (vec![None; e.len()], 0.0, 0.0),
    };
    let (mut phase_cos_sum, mut phase_sin_sum) = (0.0, 0.0);
    for (ri, z) in phase_residuals.iter().zip(e) {
        if let Some(t) = ri {
            phase_cos_sum += z.norm() * t.cos();
            phase_sin_sum += z.norm() * t.sin();
        }
    }

    let delta = pair.amp_power - pair.phase_power;
    let lb = theorem1_lb(e, bits);
    let var = var_blockage(e);
    let bound = PI / (1u64 << bits) as f64;
    let max_res = amp_residuals
        .iter()
        .chain(&phase_residuals)
        .flatten()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    let assembled =
        c_b * c_b * sum_sq - sum_abs * sum_abs / nf - s_b * s_b * sum_abs * sum_abs / nf;
    let scale = 1.0 + sum_sq;

    let steps = vec![
        ChainStep::ge("quantizer residual |θ_i| <= π/2^B", bound, max_res),
        ChainStep::ge(
            "amp SNR equals cos-term + sin-term",
            -(pair.amp_power - cos_term - sin_term).abs() / scale,
            0.0,
        ),
        ChainStep::ge(
            "cos-term >= cos²(π/2^B)·Σ|E|²",
            cos_term,
            c_b * c_b * sum_sq,
        ),
        ChainStep::ge("sin-term >= 0", sin_term, 0.0),
        ChainStep::ge(
            "phase SNR equals (cos-sum² + sin-sum²)/N",
            -(pair.phase_power - (phase_cos_sum.powi(2) + phase_sin_sum.powi(2)) / nf).abs()
                / scale,
            0.0,
        ),
        ChainStep::ge(
            "(Σ|E|)² >= (Σ|E|·cos θ)²",
            sum_abs * sum_abs,
            phase_cos_sum * phase_cos_sum,
        ),
        ChainStep::ge(
            "sin(π/2^B)·Σ|E| >= |Σ|E|·sin θ|",
            s_b * sum_abs,
            phase_sin_sum.abs(),
        ),
        ChainStep::ge("ΔSNR >= assembled bound", delta, assembled),
        ChainStep::ge(
            "assembled bound equals closed form",
            -(assembled - lb).abs() / scale,
            0.0,
        ),
        ChainStep::ge("ΔSNR >= lower bound", delta, lb),
    ];
    let holds = steps.iter().all(ChainStep::holds);
    Ok(BoundReport {
        n_antennas: e.len(),
        bits,
        delta_snr: delta,
        lb,
        var_blockage: var,
        amp_snr: pair.amp_power,
        phase_snr: pair.phase_power,
        cos_term,
        sin_term,
        phase_cos_sum,
        phase_sin_sum,
        amp_residuals,
        phase_residuals,
        residual_bound: bound,
        steps,
        holds,
    })
}

/// Trial-level RNG: stream `trial` of a ChaCha8 generator keyed by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Amplitudes uniform in `[0, max_amp]`, phases uniform in `[0, 2π)`.
pub fn random_field_vector<R: Rng>(rng: &mut R, n: usize, max_amp: f64) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let a = rng.random_range(0.0..=max_amp);
            let p = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(a, p)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub trials: usize,
    pub seed: u64,
    pub bits: u32,
    pub n_antennas: usize,
    pub max_amplitude: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            seed: 7,
            bits: 2,
            n_antennas: 4,
            max_amplitude: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremTrial {
    pub trial: usize,
    pub var_blockage: f64,
    pub lb: f64,
    pub delta: f64,
    /// `delta − lb`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessSummary {
    pub trials: Vec<TheoremTrial>,
    pub violations: usize,
    pub min_margin: f64,
}

impl HarnessSummary {
    /// CSV with header `trial,var_blockage,lb,delta,margin`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,var_blockage,lb,delta,margin\n");
        for t in &self.trials {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                t.trial, t.var_blockage, t.lb, t.delta, t.margin
            ));
        }
        s
    }
}

/// Randomized check of `delta_snr_achieved ≥ theorem1_lb` with `α₁ = 1`.
pub fn run_theorem_harness(cfg: &HarnessConfig) -> Result<HarnessSummary> {
    if cfg.n_antennas < 2 {
        return Err(Error::InvalidParameter("harness needs N >= 2".into()));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let e = random_field_vector(&mut rng, cfg.n_antennas, cfg.max_amplitude);
            let delta = delta_snr_achieved(&e, Complex64::new(1.0, 0.0), cfg.bits)?;
            let lb = theorem1_lb(&e, cfg.bits);
            Ok(TheoremTrial {
                trial: t,
                var_blockage: var_blockage(&e),
                lb,
                delta,
                margin: delta - lb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = trials.iter().filter(|t| t.margin < -BOUND_SLACK).count();
    let min_margin = trials
        .iter()
        .map(|t| t.margin)
        .fold(f64::INFINITY, f64::min);
    Ok(HarnessSummary {
        trials,
        violations,
        min_margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainSummary {
    pub trials: usize,
    /// Trials with at least one failing step.
    pub violations: usize,
    /// Smallest margin seen for each step, in step order.
    pub min_margins: Vec<(&'static str, f64)>,
    /// Largest `|θ_i|·2^B/π` over all trials; at most 1 when the residual bound holds.
    pub max_residual_ratio: f64,
    /// Report of the trial with the smallest final margin.
    pub tightest: Option<BoundReport>,
}

/// Randomized [`inequality_chain_check`]: free-space vectors as in
/// [`run_theorem_harness`], amplitudes `A_i` uniform in `[0, max_amplitude]`,
/// phases `P_i` uniform in `[0, 2π)`.
pub fn run_chain_harness(cfg: &HarnessConfig) -> Result<ChainSummary> {
    if cfg.n_antennas < 2 {
        return Err(Error::InvalidParameter("harness needs N >= 2".into()));
    }
    let reports = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t as u64);
            let e_free = random_field_vector(&mut rng, cfg.n_antennas, cfg.max_amplitude);
            let amp: Vec<f64> = (0..cfg.n_antennas)
                .map(|_| rng.random_range(0.0..=cfg.max_amplitude))
                .collect();
            let phase: Vec<f64> = (0..cfg.n_antennas)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            inequality_chain_check(&e_free, &amp, &phase, cfg.bits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut min_margins: Vec<(&'static str, f64)> = Vec::new();
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    let mut tightest: Option<&BoundReport> = None;
    for r in &reports {
        if !r.holds {
            violations += 1;
        }
        max_ratio = max_ratio.max(r.max_residual() / r.residual_bound);
        if min_margins.is_empty() {
            min_margins = r.steps.iter().map(|s| (s.name, s.margin)).collect();
        }
        for (m, s) in min_margins.iter_mut().zip(&r.steps) {
            m.1 = m.1.min(s.margin);
        }
        let last = |r: &BoundReport| r.steps.last().map_or(f64::INFINITY, |s| s.margin);
        if tightest.is_none_or(|t| last(r) < last(t)) {
            tightest = Some(r);
        }
    }
    Ok(ChainSummary {
        trials: reports.len(),
        violations,
        min_margins,
        max_residual_ratio: max_ratio,
        tightest: tightest.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{directional_codebook, mrc_weights_for, BeamTag, CodebookKind};
    use crate::grid::SphericalGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn var_blockage_examples() {
        assert_eq!(
            var_blockage(&[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]),
            0.0
        );
        let v = var_blockage(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((v - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_examples() {
        let single = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!((theorem1_lb(&single, 2) - 0.125).abs() < 1e-12);
        let equal = [c(1.0, 0.0); 4];
        for b in 1..=4 {
            let s = (PI / (1u64 << b) as f64).sin();
            assert!((theorem1_lb(&equal, b) + 2.0 * s * s / 4.0 * 16.0).abs() < 1e-12);
            assert!(theorem1_lb(&equal, b) < 0.0);
        }
        let e = [c(1.5, 0.0), c(0.2, 0.1), c(0.0, 0.7), c(0.3, -0.3)];
        let limit = 4.0 * var_blockage(&e);
        assert!((theorem1_lb(&e, 30) - limit).abs() < 1e-12);
    }

    #[test]
    fn delta_for_single_dominant_element() {
        let e = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let alpha = c(0.6, 0.8);
        let d = delta_snr_achieved(&e, alpha, 2).unwrap();
        assert!((d - 0.75).abs() < 1e-12);
        let d = delta_snr_achieved(&e, c(2.0, 0.0), 3).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn delta_is_zero_for_equal_amplitudes() {
        let e = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for b in 1..=3 {
            assert_eq!(delta_snr_achieved(&e, c(1.3, -0.2), b).unwrap(), 0.0);
        }
        let e = [c(0.6, 0.8), c(-0.8, 0.6), c(0.8, -0.6), c(-0.6, -0.8)];
        assert_eq!(delta_snr_achieved(&e, c(1.0, 0.0), 2).unwrap(), 0.0);
    }

    #[test]
    fn approx_snr_identities() {
        let e = [c(0.3, 0.4), c(-1.0, 0.2), c(0.0, 0.9)];
        let g = mrc_weights_for(&e).unwrap();
        let a = c(0.5, -0.5);
        let snr = approx_rx_snr(&e, a, &g).unwrap();
        assert!((snr - a.norm_sqr() * total_power(&e)).abs() < 1e-12);
        let snr2 = approx_rx_snr(&e, a * 2.0, &g).unwrap();
        assert!((snr2 - 4.0 * snr).abs() < 1e-12);
    }

    fn channel(clusters: Vec<Cluster>, m: usize) -> ChannelInstance {
        let g = SphericalGrid::full_sphere(5.0, 5.0).unwrap();
        let field =
            crate::field::synth_freespace_field(&crate::field::ArrayConfig::default(), &g).unwrap();
        ChannelInstance::new(clusters, field, m).unwrap()
    }

    /// Hand expansion of the rank-1 product: `g^H (α E a^H) f = α·(g^H E)·(a^H f)`,
    /// and with `f = a` (unit norm) the second factor is 1.
    #[test]
    fn rank_one_snr_hand_expansion() {
        let rx = Direction::new(60.0, 240.0);
        let tx = Direction::new(70.0, 0.0);
        let alpha = c(0.3, -0.4);
        let ch = channel(
            vec![Cluster {
                alpha,
                rx_dir: rx,
                tx_dir: tx,
            }],
            4,
        );
        let e = ch.rx_field().vector_at(rx).unwrap();
        let g = mrc_weights_for(&e).unwrap();
        let f = BeamWeight::normalized(tx_steering(4, tx), BeamTag::Custom("tx".into())).unwrap();
        let snr = rx_snr(&ch, &f, &g).unwrap();
        let expect = alpha.norm_sqr() * total_power(&e);
        assert!((snr - expect).abs() < 1e-12 * expect);

        let rotated = BeamWeight::normalized(
            g.weights()
                .iter()
                .map(|w| w * Complex64::from_polar(1.0, 0.7))
                .collect(),
            BeamTag::Mrc,
        )
        .unwrap();
        assert!((rx_snr(&ch, &f, &rotated).unwrap() - snr).abs() < 1e-12 * snr);
    }

    #[test]
    fn zero_cluster_gives_zero_snr() {
        let d = Direction::new(90.0, 255.0);
        let ch = channel(
            vec![Cluster {
                alpha: c(0.0, 0.0),
                rx_dir: d,
                tx_dir: d,
            }],
            8,
        );
        let g = mrc_weights_for(&ch.rx_field().vector_at(d).unwrap()).unwrap();
        let f = BeamWeight::normalized(tx_steering(8, d), BeamTag::Custom("tx".into())).unwrap();
        assert_eq!(rx_snr(&ch, &f, &g).unwrap(), 0.0);
    }

    #[test]
    fn clusters_are_sorted_by_strength() {
        let d = Direction::new(90.0, 255.0);
        let ch = channel(
            vec![
                Cluster {
                    alpha: c(0.1, 0.0),
                    rx_dir: d,
                    tx_dir: d,
                },
                Cluster {
                    alpha: c(0.0, -0.9),
                    rx_dir: d,
                    tx_dir: d,
                },
            ],
            4,
        );
        assert_eq!(ch.clusters()[0].alpha, c(0.0, -0.9));
        let off = Direction::new(91.0, 255.0);
        let g = SphericalGrid::full_sphere(5.0, 5.0).unwrap();
        let field = crate::field::synth_freespace_field(&Default::default(), &g).unwrap();
        assert!(ChannelInstance::new(
            vec![Cluster {
                alpha: c(1.0, 0.0),
                rx_dir: off,
                tx_dir: d
            }],
            field,
            4
        )
        .is_err());
    }

    #[test]
    fn worst_case_examples() {
        let ones = vec![c(1.0, 0.0); 4];
        let beam = BeamWeight::new(vec![c(0.5, 0.0); 4], BeamTag::Custom("ones".into())).unwrap();
        let single = Codebook::from_entries(CodebookKind::Directional, None, vec![beam]).unwrap();
        assert!(worst_case_dir_snr(&ones, &[1.0; 4], &single).unwrap().abs() < 1e-15);

        let dir = directional_codebook(4, 4, 5, 0.5).unwrap();
        let dominant = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let w = worst_case_dir_snr(&dominant, &[1.0; 4], &dir).unwrap();
        assert!((w - 0.25).abs() < 1e-12);
        let b = best_case_dir_snr(&dominant, &[1.0; 4], &dir).unwrap();
        assert!((w - b).abs() < 1e-12);

        let worst = worst_case_dir_snr(&ones, &[1.0; 4], &dir).unwrap();
        let best = best_case_dir_snr(&ones, &[1.0; 4], &dir).unwrap();
        assert!(worst < best, "worst {worst} best {best}");
    }

    #[test]
    fn benign_chain() {
        let e_free = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let r = inequality_chain_check(&e_free, &[1.0; 4], &[0.0; 4], 2).unwrap();
        assert!(r.holds, "{:?}", r.steps);
        assert!(r.max_residual() < 1e-12);
        assert_eq!(r.delta_snr, 0.0);
    }

    #[test]
    fn one_bit_chain_degenerates_gracefully() {
        let e_free = [c(1.0, 0.0), c(0.4, 0.2), c(-0.3, 0.9), c(0.0, -0.5)];
        let r = inequality_chain_check(&e_free, &[1.0, 0.5, 1.2, 0.1], &[0.3, 2.0, 4.0, 1.0], 1)
            .unwrap();
        assert!(r.holds, "{:?}", r.steps);
        let cos_step = &r.steps[2];
        assert!(cos_step.rhs.abs() < 1e-30);
    }

    #[test]
    fn chain_rejects_bad_shapes() {
        let e = [c(1.0, 0.0); 4];
        assert!(inequality_chain_check(&e, &[1.0; 3], &[0.0; 4], 2).is_err());
        assert!(inequality_chain_check(&e, &[-1.0; 4], &[0.0; 4], 2).is_err());
    }

    #[test]
    fn harness_is_order_independent() {
        let cfg = HarnessConfig {
            trials: 200,
            seed: 5,
            ..HarnessConfig::default()
        };
        let a = run_theorem_harness(&cfg).unwrap();
        let b = run_theorem_harness(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.violations, 0);
        let t17 = {
            let mut rng = trial_rng(5, 17);
            random_field_vector(&mut rng, 4, 2.0)
        };
        assert_eq!(a.trials[17].lb, theorem1_lb(&t17, 2));
        assert!(a
            .to_csv()
            .starts_with("trial,var_blockage,lb,delta,margin\n"));
    }

    #[test]
    fn chain_harness_holds() {
        for bits in 1..=3 {
            let cfg = HarnessConfig {
                trials: 300,
                seed: 9,
                bits,
                ..HarnessConfig::default()
            };
            let s = run_chain_harness(&cfg).unwrap();
            assert_eq!(s.violations, 0, "{:?}", s.min_margins);
            assert!(s.max_residual_ratio <= 1.0 + 1e-9);
            assert_eq!(s.min_margins.len(), 10);
        }
    }
}
