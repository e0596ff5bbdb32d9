//! Parameterized hand-blockage distortion fields.
//!
//! Finger occlusions attenuate a cap of directions with a raised-cosine taper.
//! Phase and log-amplitude screens are white Gaussian noise smoothed by a
//! Gaussian angular kernel and rescaled to the requested standard deviation.
//! Every random draw comes from a ChaCha8 stream keyed by `(seed, antenna, component)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ArrayConfig, DistortionField};
use crate::grid::{angle_between, Direction, SphericalGrid};
use crate::units::db_to_amplitude;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionMode {
    Identity,
    FingerOcclusion,
    PhaseScreen,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finger {
    pub center_theta_deg: f64,
    pub center_phi_deg: f64,
    pub radius_deg: f64,
    pub depth_db: f64,
    /// Antennas shadowed by this finger; all antennas when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionSpec {
    pub mode: DistortionMode,
    pub fingers: Vec<Finger>,
    pub phase_correlation_deg: f64,
    pub phase_std_deg: f64,
    pub amp_std_db: f64,
    pub seed: u64,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self {
            mode: DistortionMode::Identity,
            fingers: Vec::new(),
            phase_correlation_deg: 20.0,
            phase_std_deg: 0.0,
            amp_std_db: 0.0,
            seed: 0,
        }
    }
}

impl DistortionSpec {
    pub fn validate(&self, n_antennas: usize) -> Result<()> {
        for (k, f) in self.fingers.iter().enumerate() {
            if !(f.radius_deg.is_finite() && f.radius_deg > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "finger {k}: radius must be > 0, got {}",
                    f.radius_deg
                )));
            }
            if !f.depth_db.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "finger {k}: depth must be finite"
                )));
            }
            if let Some(ants) = &f.antennas {
                if let Some(a) = ants.iter().find(|&&a| a >= n_antennas) {
                    return Err(Error::InvalidParameter(format!(
                        "finger {k}: antenna {a} out of range for {n_antennas} antennas"
                    )));
                }
            }
        }
        if !(self.phase_correlation_deg.is_finite() && self.phase_correlation_deg > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "phase correlation length must be > 0, got {}",
                self.phase_correlation_deg
            )));
        }
        if !(self.phase_std_deg >= 0.0 && self.amp_std_db >= 0.0) {
            return Err(Error::InvalidParameter(
                "screen standard deviations must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

const PHASE_STREAM: u64 = 0;
const AMP_STREAM: u64 = 1;

/// Generates the distortion field. Pure in `(spec, cfg, grid)`.
pub fn gen_distortion(
    spec: &DistortionSpec,
    cfg: &ArrayConfig,
    grid: &SphericalGrid,
) -> Result<DistortionField> {
    cfg.validate()?;
    spec.validate(cfg.n_antennas)?;
    let n = cfg.n_antennas;
    if spec.mode == DistortionMode::Identity {
        return Ok(DistortionField::identity(*grid, n));
    }
    let occlude = matches!(
        spec.mode,
        DistortionMode::FingerOcclusion | DistortionMode::Combined
    );
    let phase_screen = matches!(
        spec.mode,
        DistortionMode::PhaseScreen | DistortionMode::Combined
    ) && spec.phase_std_deg > 0.0;
    let amp_screen = spec.mode == DistortionMode::Combined && spec.amp_std_db > 0.0;

    let units: Vec<[f64; 3]> = grid.directions().map(|d| d.unit_vector()).collect();
    let mut amp = Vec::with_capacity(n * grid.len());
    let mut phase = Vec::with_capacity(n * grid.len());
    for i in 0..n {
        let mut atten_db = vec![0.0; grid.len()];
        if occlude {
            for f in spec.fingers.iter().filter(|f| covers(f, i)) {
                let center = Direction::new(f.center_theta_deg, f.center_phi_deg).unit_vector();
                for (c, u) in units.iter().enumerate() {
                    atten_db[c] +=
                        f.depth_db * raised_cosine(angle_between(u, &center), f.radius_deg);
                }
            }
        }
        let log_amp_db = if amp_screen {
            let s = smooth_screen(grid, &units, spec, i, AMP_STREAM);
            rescale(s, spec.amp_std_db)
        } else {
            vec![0.0; grid.len()]
        };
        let p = if phase_screen {
            let s = smooth_screen(grid, &units, spec, i, PHASE_STREAM);
            rescale(s, spec.phase_std_deg.to_radians())
        } else {
            vec![0.0; grid.len()]
        };
        amp.extend(
            atten_db
                .iter()
                .zip(&log_amp_db)
                .map(|(a, l)| db_to_amplitude(l - a)),
        );
        phase.extend(p);
    }
    DistortionField::new(*grid, n, amp, phase)
}

fn covers(f: &Finger, antenna: usize) -> bool {
    f.antennas.as_ref().is_none_or(|a| a.contains(&antenna))
}

/// 1 at the center, falling to 0 at `radius` along a raised cosine.
fn raised_cosine(dist_deg: f64, radius_deg: f64) -> f64 {
    if dist_deg >= radius_deg {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * dist_deg / radius_deg).cos())
    }
}

/// White noise on the grid convolved with `exp(−d²/2L²)`, truncated at 4L.
fn smooth_screen(
    grid: &SphericalGrid,
    units: &[[f64; 3]],
    spec: &DistortionSpec,
    antenna: usize,
    component: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(antenna as u64 * 2 + component);
    let noise: Vec<f64> = (0..grid.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let corr = spec.phase_correlation_deg;
    let cutoff = 4.0 * corr;
    let thetas: Vec<f64> = (0..grid.n_theta()).map(|it| grid.theta(it)).collect();
    (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let (it0, _) = grid.split(c);
            let mut acc = 0.0;
            for (it, &th) in thetas.iter().enumerate() {
                if (th - thetas[it0]).abs() > cutoff {
                    continue;
                }
                for ip in 0..grid.n_phi() {
                    let k = grid.cell(it, ip);
                    let d = angle_between(&units[c], &units[k]);
                    if d <= cutoff {
                        acc += noise[k] * (-0.5 * (d / corr).powi(2)).exp();
                    }
                }
            }
            acc
        })
        .collect()
}

/// Removes the mean and scales to standard deviation `target` (population form).
fn rescale(mut s: Vec<f64>, target: f64) -> Vec<f64> {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { target / var.sqrt() } else { 0.0 };
    for x in &mut s {
        *x = (*x - mean) * scale;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::wrap_rad;

    fn grid5() -> SphericalGrid {
        SphericalGrid::full_sphere(5.0, 5.0).unwrap()
    }

    #[test]
    fn identity_mode() {
        let g = grid5();
        let d = gen_distortion(&DistortionSpec::default(), &ArrayConfig::default(), &g).unwrap();
        assert!(d.amp().iter().all(|&a| a == 1.0));
        assert!(d.phase().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn same_seed_same_field() {
        let g = grid5();
        let spec = DistortionSpec {
            mode: DistortionMode::Combined,
            fingers: vec![Finger {
                center_theta_deg: 80.0,
                center_phi_deg: 250.0,
                radius_deg: 30.0,
                depth_db: 10.0,
                antennas: Some(vec![1, 2]),
            }],
            phase_std_deg: 30.0,
            amp_std_db: 2.0,
            seed: 11,
            ..DistortionSpec::default()
        };
        let cfg = ArrayConfig::default();
        let a = gen_distortion(&spec, &cfg, &g).unwrap();
        let b = gen_distortion(&spec, &cfg, &g).unwrap();
        assert_eq!(a, b);
        let other = gen_distortion(&DistortionSpec { seed: 12, ..spec }, &cfg, &g).unwrap();
        assert_ne!(a.phase(), other.phase());
    }

    #[test]
    fn phase_screen_hits_requested_std() {
        let g = grid5();
        let spec = DistortionSpec {
            mode: DistortionMode::PhaseScreen,
            phase_std_deg: 30.0,
            phase_correlation_deg: 20.0,
            seed: 3,
            ..DistortionSpec::default()
        };
        let d = gen_distortion(&spec, &ArrayConfig::default(), &g).unwrap();
        for i in 0..4 {
            let vals: Vec<f64> = (0..g.len())
                .map(|c| wrap_rad(d.phase_at(i, c)).to_degrees())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let std =
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!((std - 30.0).abs() <= 0.2 * 30.0, "antenna {i}: std {std}");
            assert!(d.amp().iter().all(|&a| a == 1.0));
        }
    }

    #[test]
    fn occlusion_tapers_to_zero_at_radius() {
        let g = grid5();
        let spec = DistortionSpec {
            mode: DistortionMode::FingerOcclusion,
            fingers: vec![Finger {
                center_theta_deg: 90.0,
                center_phi_deg: 180.0,
                radius_deg: 20.0,
                depth_db: 12.0,
                antennas: Some(vec![0]),
            }],
            ..DistortionSpec::default()
        };
        let d = gen_distortion(&spec, &ArrayConfig::default(), &g).unwrap();
        let at = |i: usize, t: f64, p: f64| d.amp_at(i, g.locate(Direction::new(t, p)).unwrap());
        assert!((20.0 * at(0, 90.0, 180.0).log10() + 12.0).abs() < 1e-9);
        assert!((20.0 * at(0, 90.0, 190.0).log10() + 6.0).abs() < 1e-9);
        assert_eq!(at(0, 90.0, 200.0), 1.0);
        assert_eq!(at(1, 90.0, 180.0), 1.0);
        assert!(d.phase().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let g = grid5();
        let cfg = ArrayConfig::default();
        let bad_radius = DistortionSpec {
            mode: DistortionMode::FingerOcclusion,
            fingers: vec![Finger {
                center_theta_deg: 0.0,
                center_phi_deg: 0.0,
                radius_deg: 0.0,
                depth_db: 3.0,
                antennas: None,
            }],
            ..DistortionSpec::default()
        };
        assert!(gen_distortion(&bad_radius, &cfg, &g).is_err());
        let bad_std = DistortionSpec {
            phase_std_deg: -1.0,
            ..DistortionSpec::default()
        };
        assert!(gen_distortion(&bad_std, &cfg, &g).is_err());
    }
}
