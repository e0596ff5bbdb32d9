use std::f64::consts::{PI, TAU};

use beamshadow::codebook::{
    directional_codebook, enh_phase_amp_codebook, enh_phase_codebook, optimal_gain_for,
    phase_level, Codebook, StrengthVector,
};
use beamshadow::field::{apply_distortion, resample, AntennaFieldMap, DistortionField};
use beamshadow::grid::{make_grid, SphericalGrid};
use beamshadow::link::{
    best_case_dir_snr, delta_snr_achieved, inequality_chain_check, theorem1_lb, var_blockage,
    worst_case_dir_snr,
};
use beamshadow::metrics::{
    cdf_summary, loss_samples, pair_phase_diff, phase_mixing, roi_mask, PhaseDiffMap, RoiMask,
};
use beamshadow::Complex64;
use proptest::prelude::*;

/// Amplitudes drawn from a mix of regimes: zeros, tiny, comparable and dominant.
fn amplitude() -> impl Strategy<Value = f64> {
    prop_oneof![
        1 => Just(0.0),
        2 => 0.0..1e-3,
        6 => 0.0..2.0,
        1 => 10.0..100.0,
    ]
}

fn field_vector(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((amplitude(), 0.0..TAU), n).prop_map(|v| {
        v.into_iter()
            .map(|(a, p)| Complex64::from_polar(a, p))
            .collect()
    })
}

fn nonzero_field_vector(
    n: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<Complex64>> {
    field_vector(n).prop_filter("needs some energy", |e| {
        e.iter().any(|z| z.norm_sqr() > 1e-12)
    })
}

fn amp_codebook(e: &[Complex64], bits: u32) -> Codebook {
    let s = StrengthVector::from_field_vector(e).unwrap();
    enh_phase_amp_codebook(e.len(), bits, &s).unwrap()
}

fn small_grid() -> SphericalGrid {
    make_grid(30.0, 45.0, (0.0, 180.0), (0.0, 360.0)).unwrap()
}

fn field_on(grid: SphericalGrid, n: usize) -> impl Strategy<Value = AntennaFieldMap> {
    prop::collection::vec((0.05..3.0f64, 0.0..TAU), n * grid.len()).prop_map(move |v| {
        let samples = v
            .into_iter()
            .map(|(a, p)| Complex64::from_polar(a, p))
            .collect();
        AntennaFieldMap::new(grid, n, samples, "random").unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_codebook_is_dominated_by_mrc(e in nonzero_field_vector(2..=5), bits in 1u32..=3, j in 1usize..=6) {
        let opt = optimal_gain_for(&e);
        let dir = directional_codebook(e.len(), j, 5, 0.5).unwrap();
        for cbk in [dir, enh_phase_codebook(e.len(), bits).unwrap(), amp_codebook(&e, bits)] {
            let g = cbk.search(&e).unwrap().gain_db();
            prop_assert!(g <= opt + 1e-9, "{:?}: {} > {}", cbk.kind(), g, opt);
        }
    }

    #[test]
    fn global_phase_rotation_changes_nothing(e in nonzero_field_vector(2..=4), bits in 1u32..=3, alpha in 0.0..TAU) {
        let rot: Vec<Complex64> = e.iter().map(|z| z * Complex64::from_polar(1.0, alpha)).collect();
        for cbk in [enh_phase_codebook(e.len(), bits).unwrap(), amp_codebook(&e, bits), directional_codebook(e.len(), 4, 5, 0.5).unwrap()] {
            let (a, b) = (cbk.search(&e).unwrap(), cbk.search(&rot).unwrap());
            prop_assert!((a.power - b.power).abs() <= 1e-12 * a.power.max(1e-300));
            // a different index is only acceptable for an exact tie up to rounding
            let old_on_rot = cbk.entry(a.index).power(&rot);
            prop_assert!(a.index == b.index || (old_on_rot - b.power).abs() <= 1e-12 * b.power);
        }
    }

    #[test]
    fn more_phase_bits_never_hurt(e in nonzero_field_vector(2..=4)) {
        let p2 = enh_phase_codebook(e.len(), 2).unwrap().search(&e).unwrap().power;
        let p3 = enh_phase_codebook(e.len(), 3).unwrap().search(&e).unwrap().power;
        prop_assert!(p3 >= p2 * (1.0 - 1e-12), "{} < {}", p3, p2);
        let a2 = amp_codebook(&e, 2).search(&e).unwrap().power;
        let a3 = amp_codebook(&e, 3).search(&e).unwrap().power;
        prop_assert!(a3 >= a2 * (1.0 - 1e-12), "{} < {}", a3, a2);
        let p1 = enh_phase_codebook(e.len(), 1).unwrap().search(&e).unwrap().power;
        prop_assert!(p2 >= p1 * (1.0 - 1e-12));
    }

    #[test]
    fn quantization_floor(e in nonzero_field_vector(2..=5), bits in 1u32..=3) {
        let floor = 20.0 * (PI / (1u64 << bits) as f64).cos().log10();
        let g = amp_codebook(&e, bits).search(&e).unwrap().gain_db();
        if bits == 1 {
            prop_assert!(g.is_finite() || g == f64::NEG_INFINITY);
        } else {
            prop_assert!(g >= optimal_gain_for(&e) + floor - 1e-9);
        }
    }

    #[test]
    fn equal_amplitudes_collapse(r in 0.01..10.0f64, phases in prop::collection::vec(0usize..8, 2..=5), bits in 1u32..=3) {
        // axis points have bit-identical magnitudes; the 3-4-5 points only agree up to rounding
        let units = [
            Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0),
            Complex64::new(0.6, 0.8), Complex64::new(-0.8, 0.6), Complex64::new(0.8, -0.6), Complex64::new(-0.6, -0.8),
        ];
        let e: Vec<Complex64> = phases.iter().map(|&k| units[k] * r).collect();
        let p = enh_phase_codebook(e.len(), bits).unwrap().search(&e).unwrap();
        let a = amp_codebook(&e, bits).search(&e).unwrap();
        let delta = delta_snr_achieved(&e, Complex64::new(1.0, 0.0), bits).unwrap();
        if phases.iter().all(|&k| k < 4) {
            prop_assert_eq!(p.power, a.power);
            prop_assert_eq!(p.index, a.index);
            prop_assert_eq!(delta, 0.0);
        } else {
            prop_assert!((p.power - a.power).abs() <= 1e-12 * p.power);
            prop_assert!(delta.abs() <= 1e-12 * p.power);
        }
    }

    #[test]
    fn accelerated_search_matches_enumeration(e in field_vector(2..=4), bits in 1u32..=3) {
        for cbk in [enh_phase_codebook(e.len(), bits).unwrap(), directional_codebook(e.len(), 4, 5, 0.5).unwrap()] {
            let (a, b) = (cbk.search(&e).unwrap(), cbk.search_naive(&e).unwrap());
            prop_assert_eq!(a.power.to_bits(), b.power.to_bits());
            prop_assert_eq!(a.index, b.index);
        }
        if e.iter().any(|z| z.norm_sqr() > 0.0) {
            let cbk = amp_codebook(&e, bits);
            let (a, b) = (cbk.search(&e).unwrap(), cbk.search_naive(&e).unwrap());
            prop_assert_eq!(a.power.to_bits(), b.power.to_bits());
            prop_assert_eq!(a.index, b.index);
        }
    }

    #[test]
    fn phase_grids_are_nested(bits in 1u32..=6, k in 0usize..64) {
        let k = k % (1 << bits);
        prop_assert_eq!(phase_level(bits, k), phase_level(bits + 1, 2 * k));
    }

    #[test]
    fn theorem_lower_bound(e in field_vector(2..=5), bits in 1u32..=3, a in 0.1..3.0f64) {
        let alpha = Complex64::from_polar(a, 0.3);
        let delta = delta_snr_achieved(&e, alpha, bits).unwrap();
        let lb = alpha.norm_sqr() * theorem1_lb(&e, bits);
        prop_assert!(delta >= lb - 1e-9, "delta {} < lb {}", delta, lb);
        prop_assert!(var_blockage(&e) >= 0.0);
    }

    #[test]
    fn chain_steps_hold(
        e in field_vector(2..=4),
        amp in prop::collection::vec(0.0..2.0f64, 4),
        phase in prop::collection::vec(0.0..TAU, 4),
        bits in 1u32..=3,
    ) {
        let n = e.len();
        let r = inequality_chain_check(&e, &amp[..n], &phase[..n], bits).unwrap();
        prop_assert!(r.holds, "{:?}", r.steps);
        prop_assert!(r.max_residual() <= r.residual_bound + 1e-12);
    }

    #[test]
    fn worst_case_below_best_case(mags in prop::collection::vec(0.0..2.0f64, 2..=5), j in 1usize..=5) {
        let e: Vec<Complex64> = mags.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        let cbk = directional_codebook(e.len(), j, 5, 0.5).unwrap();
        let ones = vec![1.0; e.len()];
        let w = worst_case_dir_snr(&e, &ones, &cbk).unwrap();
        let b = best_case_dir_snr(&e, &ones, &cbk).unwrap();
        prop_assert!(w <= b + 1e-12);
    }

    #[test]
    fn dominant_element_makes_signs_irrelevant(m in 0.1..5.0f64, n in 2usize..=5, at in 0usize..5, j in 1usize..=5) {
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[at % n] = Complex64::new(m, 0.0);
        let cbk = directional_codebook(n, j, 5, 0.5).unwrap();
        let ones = vec![1.0; n];
        let w = worst_case_dir_snr(&e, &ones, &cbk).unwrap();
        let b = best_case_dir_snr(&e, &ones, &cbk).unwrap();
        prop_assert!((w - b).abs() <= 1e-12 * b);
        prop_assert!((w - m * m / n as f64).abs() <= 1e-9 * m * m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identity_distortion_is_a_no_op(f in field_on(small_grid(), 3)) {
        let d = DistortionField::identity(*f.grid(), 3);
        let out = apply_distortion(&f, &d).unwrap();
        prop_assert_eq!(out.samples(), f.samples());
    }

    #[test]
    fn phase_only_distortion_keeps_magnitudes(f in field_on(small_grid(), 2), p in prop::collection::vec(-10.0..10.0f64, 2 * 48)) {
        let g = *f.grid();
        let d = DistortionField::new(g, 2, vec![1.0; 2 * g.len()], p).unwrap();
        let out = apply_distortion(&f, &d).unwrap();
        for (a, b) in out.samples().iter().zip(f.samples()) {
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-12 * b.norm());
        }
    }

    #[test]
    fn resample_is_exact_on_coincident_points(f in field_on(small_grid(), 2)) {
        prop_assert_eq!(resample(&f, f.grid()).unwrap(), f.clone());
        let coarse = make_grid(60.0, 90.0, (0.0, 180.0), (0.0, 360.0)).unwrap();
        let out = resample(&f, &coarse).unwrap();
        for c in 0..coarse.len() {
            let d = coarse.direction(c);
            let src = f.grid().locate(d).unwrap();
            for i in 0..2 {
                prop_assert_eq!(out.get(i, c), f.get(i, src));
            }
        }
    }

    #[test]
    fn loss_shifts_with_amplitude_scaling(f in field_on(small_grid(), 2), s in 0.05..20.0f64) {
        let scaled = f.scaled(Complex64::new(s, 0.0)).unwrap();
        let mask = RoiMask::all(*f.grid());
        prop_assert!(loss_samples(&f, &f, 1, &mask).unwrap().iter().all(|&l| l == 0.0));
        let shift = -20.0 * s.log10();
        for l in loss_samples(&f, &scaled, 0, &mask).unwrap() {
            prop_assert!((l - shift).abs() <= 1e-9, "{} vs {}", l, shift);
        }
    }

    #[test]
    fn roi_grows_as_thresholds_drop(f in field_on(small_grid(), 1), b in field_on(small_grid(), 1), g1 in -5.0..10.0f64, g2 in -5.0..10.0f64, d in 0.0..5.0f64) {
        let hi = roi_mask(&f, &b, 0, g1, g2).unwrap();
        let lo = roi_mask(&f, &b, 0, g1 - d, g2 - d).unwrap();
        for (h, l) in hi.mask.iter().zip(&lo.mask) {
            prop_assert!(!h || *l);
        }
        prop_assert!(lo.area_fraction >= hi.area_fraction);
    }

    #[test]
    fn phase_mixing_invariances(f in field_on(small_grid(), 2), alpha in 0.0..TAU, k in -170.0..170.0f64) {
        let pd = pair_phase_diff(&f, 0, 1).unwrap();
        let base = phase_mixing(&pd).unwrap();
        let rot = f.scaled(Complex64::from_polar(1.0, alpha)).unwrap();
        prop_assert!((phase_mixing(&pair_phase_diff(&rot, 0, 1).unwrap()).unwrap() - base).abs() < 1e-9);
        let shifted = PhaseDiffMap {
            values: pd.values.iter().map(|v| v.map(|x| beamshadow::units::wrap_deg(x + k))).collect(),
            ..pd.clone()
        };
        prop_assert!((phase_mixing(&shifted).unwrap() - base).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn percentiles_are_monotone(samples in prop::collection::vec(-50.0..50.0f64, 1..200), mut ps in prop::collection::vec(0.0..=100.0f64, 1..8)) {
        ps.sort_by(f64::total_cmp);
        let c = cdf_summary(&samples, &ps).unwrap();
        for w in c.percentiles.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
        prop_assert!(c.min <= c.percentiles[0].1 && c.percentiles.last().unwrap().1 <= c.max);
    }
}
