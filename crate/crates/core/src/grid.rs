//! Uniform (θ, φ) sampling of the sphere.
//!
//! θ is elevation measured from +Z in [0°, 180°], φ is azimuth in [0°, 360°).
//! Spans are half-open: a span `[start, end)` with step `s` holds the samples
//! `start + k·s` for `k = 0 .. (end − start)/s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when matching a requested angle against grid samples.
pub(crate) const ANGLE_TOL_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Direction {
    pub fn new(theta_deg: f64, phi_deg: f64) -> Self {
        Self { theta_deg, phi_deg }
    }

    /// Unit vector in Cartesian coordinates.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta_deg.to_radians().sin_cos();
        let (sp, cp) = self.phi_deg.to_radians().sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Great-circle distance to `other`, in degrees.
    pub fn angular_distance_deg(&self, other: &Direction) -> f64 {
        angle_between(&self.unit_vector(), &other.unit_vector())
    }
}

pub(crate) fn angle_between(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
    dot.acos().to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalGrid {
    pub theta_start: f64,
    pub theta_step: f64,
    pub theta_end: f64,
    pub phi_start: f64,
    pub phi_step: f64,
    pub phi_end: f64,
    n_theta: usize,
    n_phi: usize,
}

fn axis_count(name: &str, start: f64, end: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::GridSizing(format!(
            "{name} step must be > 0, got {step}"
        )));
    }
    if !(start.is_finite() && end.is_finite()) || end <= start {
        return Err(Error::GridSizing(format!(
            "{name} span [{start}, {end}) is empty"
        )));
    }
    let n = (end - start) / step;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-9 * n.max(1.0) || rounded < 1.0 {
        return Err(Error::GridSizing(format!(
            "{name} step {step}° does not divide the span [{start}, {end})"
        )));
    }
    Ok(rounded as usize)
}

/// Builds a grid over the half-open spans `theta_span` × `phi_span` (degrees).
pub fn make_grid(
    theta_step: f64,
    phi_step: f64,
    theta_span: (f64, f64),
    phi_span: (f64, f64),
) -> Result<SphericalGrid> {
    let (t0, t1) = theta_span;
    let (p0, p1) = phi_span;
    if t0 < 0.0 || t1 > 180.0 {
        return Err(Error::GridSizing(format!(
            "theta span [{t0}, {t1}) must lie within [0, 180]"
        )));
    }
    if !(0.0..360.0).contains(&p0) || p1 > 360.0 {
        return Err(Error::GridSizing(format!(
            "phi span [{p0}, {p1}) must lie within [0, 360)"
        )));
    }
    let n_theta = axis_count("theta", t0, t1, theta_step)?;
    let n_phi = axis_count("phi", p0, p1, phi_step)?;
    Ok(SphericalGrid {
        theta_start: t0,
        theta_step,
        theta_end: t1,
        phi_start: p0,
        phi_step,
        phi_end: p1,
        n_theta,
        n_phi,
    })
}

impl SphericalGrid {
    /// Full sphere `[0,180) × [0,360)` at the given steps.
    pub fn full_sphere(theta_step: f64, phi_step: f64) -> Result<Self> {
        make_grid(theta_step, phi_step, (0.0, 180.0), (0.0, 360.0))
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Number of directions.
    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, it: usize) -> f64 {
        self.theta_start + it as f64 * self.theta_step
    }

    pub fn phi(&self, ip: usize) -> f64 {
        self.phi_start + ip as f64 * self.phi_step
    }

    /// Flat cell index, θ-major.
    pub fn cell(&self, it: usize, ip: usize) -> usize {
        it * self.n_phi + ip
    }

    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.n_phi, cell % self.n_phi)
    }

    pub fn direction(&self, cell: usize) -> Direction {
        let (it, ip) = self.split(cell);
        Direction::new(self.theta(it), self.phi(ip))
    }

    pub fn directions(&self) -> impl Iterator<Item = Direction> + '_ {
        (0..self.len()).map(move |c| self.direction(c))
    }

    /// True when the φ samples wrap around the whole circle.
    pub fn wraps_phi(&self) -> bool {
        ((self.n_phi as f64) * self.phi_step - 360.0).abs() < ANGLE_TOL_DEG
    }

    /// Flat index of the sample at `dir`, or `OffGrid`.
    pub fn locate(&self, dir: Direction) -> Result<usize> {
        let off = || Error::OffGrid {
            theta_deg: dir.theta_deg,
            phi_deg: dir.phi_deg,
        };
        let it = axis_index(
            dir.theta_deg,
            self.theta_start,
            self.theta_step,
            self.n_theta,
        )
        .ok_or_else(off)?;
        let mut phi = dir.phi_deg;
        if self.wraps_phi() {
            phi = self.phi_start + (phi - self.phi_start).rem_euclid(360.0);
        }
        let ip = axis_index(phi, self.phi_start, self.phi_step, self.n_phi)
            .or_else(|| {
                // a value just below 360 can round up to the first sample
                if self.wraps_phi() {
                    axis_index(phi - 360.0, self.phi_start, self.phi_step, self.n_phi)
                } else {
                    None
                }
            })
            .ok_or_else(off)?;
        Ok(self.cell(it, ip))
    }

    /// Solid angle (steradians) of the cell `[θ, θ+Δθ) × [φ, φ+Δφ)` owned by sample `it`.
    pub fn cell_solid_angle(&self, it: usize) -> f64 {
        let lo = self.theta(it).to_radians();
        let hi = (self.theta(it) + self.theta_step).min(180.0).to_radians();
        (lo.cos() - hi.cos()) * self.phi_step.to_radians()
    }

    /// Per-cell solid angle in flat cell order.
    pub fn solid_angle_weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|c| self.cell_solid_angle(self.split(c).0))
            .collect()
    }

    /// Header form `start:step:end` used by the file formats.
    pub(crate) fn theta_spec(&self) -> String {
        format!(
            "{}:{}:{}",
            self.theta_start, self.theta_step, self.theta_end
        )
    }

    pub(crate) fn phi_spec(&self) -> String {
        format!("{}:{}:{}", self.phi_start, self.phi_step, self.phi_end)
    }

    /// Inverse of [`theta_spec`](Self::theta_spec) / [`phi_spec`](Self::phi_spec).
    pub(crate) fn from_specs(theta: &str, phi: &str) -> Result<Self> {
        let parse = |s: &str| -> Result<(f64, f64, f64)> {
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::GridSizing(format!(
                    "expected start:step:end, got `{s}`"
                )));
            }
            let v = |p: &str| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::GridSizing(format!("bad number `{p}` in `{s}`")))
            };
            Ok((v(parts[0])?, v(parts[1])?, v(parts[2])?))
        };
        let (t0, ts, t1) = parse(theta)?;
        let (p0, ps, p1) = parse(phi)?;
        make_grid(ts, ps, (t0, t1), (p0, p1))
    }
}

fn axis_index(x: f64, start: f64, step: f64, n: usize) -> Option<usize> {
    let k = (x - start) / step;
    let r = k.round();
    if r < 0.0 || r >= n as f64 || ((k - r) * step).abs() > ANGLE_TOL_DEG {
        return None;
    }
    Some(r as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_degree_sphere() {
        let g = make_grid(5.0, 5.0, (0.0, 180.0), (0.0, 360.0)).unwrap();
        assert_eq!((g.n_theta(), g.n_phi()), (36, 72));
        assert_eq!(g.len(), 2592);
        assert_eq!(g.theta(35), 175.0);
        assert_eq!(g.phi(71), 355.0);
    }

    #[test]
    fn one_degree_sphere() {
        let g = make_grid(1.0, 1.0, (0.0, 180.0), (0.0, 360.0)).unwrap();
        assert_eq!((g.n_theta(), g.n_phi()), (180, 360));
    }

    #[test]
    fn non_dividing_step_is_rejected() {
        let err = make_grid(7.0, 5.0, (0.0, 180.0), (0.0, 360.0)).unwrap_err();
        assert!(matches!(err, Error::GridSizing(_)), "{err}");
        assert!(make_grid(0.0, 5.0, (0.0, 180.0), (0.0, 360.0)).is_err());
        assert!(make_grid(5.0, 5.0, (0.0, 185.0), (0.0, 360.0)).is_err());
        assert!(make_grid(5.0, 5.0, (0.0, 180.0), (360.0, 370.0)).is_err());
    }

    #[test]
    fn locate_round_trips_and_wraps() {
        let g = SphericalGrid::full_sphere(5.0, 5.0).unwrap();
        for c in [0, 1, 71, 72, 1000, g.len() - 1] {
            assert_eq!(g.locate(g.direction(c)).unwrap(), c);
        }
        assert_eq!(g.locate(Direction::new(10.0, 365.0)).unwrap(), g.cell(2, 1));
        assert_eq!(g.locate(Direction::new(10.0, -5.0)).unwrap(), g.cell(2, 71));
        assert!(g.locate(Direction::new(12.0, 0.0)).is_err());
        assert!(g.locate(Direction::new(180.0, 0.0)).is_err());
    }

    #[test]
    fn solid_angles_cover_the_sphere() {
        let g = SphericalGrid::full_sphere(5.0, 5.0).unwrap();
        let total: f64 = g.solid_angle_weights().iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn spec_strings_round_trip() {
        let g = make_grid(2.5, 5.0, (10.0, 170.0), (150.0, 360.0)).unwrap();
        let back = SphericalGrid::from_specs(&g.theta_spec(), &g.phi_spec()).unwrap();
        assert_eq!(g, back);
    }
}
