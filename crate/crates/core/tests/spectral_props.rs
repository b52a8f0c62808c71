mod common;

use proptest::prelude::*;
use vibalign::spectral::{
    average_energy, bandpass_filter_pixel, energy_map, energy_map_chunked, energy_map_literal, heatmap_for_display,
    passband_energy, pixel_energy, BandProjector,
};
use vibalign::{BandpassSpec, EnergyMap, FrameSequence, Phantom, PhantomConfig, ProbeState};

const FS: f64 = 30.0;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-15
}

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_path_matches_literal_and_textbook(x in signal(8..130)) {
        let band = BandpassSpec::default();
        let fast = passband_energy(&x, FS, &band).unwrap();
        let literal = pixel_energy(&bandpass_filter_pixel(&x, FS, &band).unwrap());
        let parseval = common::band_energy(&x, FS, 1.5, 2.5);
        let time_domain = common::band_energy_time_domain(&x, FS, 1.5, 2.5);
        prop_assert!(close(fast, literal, 1e-9), "{fast} vs {literal}");
        prop_assert!(close(fast, parseval, 1e-9), "{fast} vs {parseval}");
        prop_assert!(close(parseval, time_domain, 1e-9));
    }

    #[test]
    fn circular_shift_keeps_energy(x in signal(8..130), shift in 0usize..200) {
        let band = BandpassSpec::default();
        let mut y = x.clone();
        let s = shift % y.len();
        y.rotate_left(s);
        let a = passband_energy(&x, FS, &band).unwrap();
        let b = passband_energy(&y, FS, &band).unwrap();
        prop_assert!(close(a, b, 1e-9), "{a} vs {b}");
    }

    #[test]
    fn energy_is_quadratic(x in signal(8..130), c in -5.0f64..5.0) {
        let band = BandpassSpec::default();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let a = passband_energy(&x, FS, &band).unwrap();
        let b = passband_energy(&scaled, FS, &band).unwrap();
        prop_assert!(close(b, c * c * a, 1e-12), "{b} vs {}", c * c * a);
    }

    /// In-band tone plus an on-bin tone outside the band: only the first counts.
    #[test]
    fn disjoint_band_tones_superpose(
        cycles in 1usize..6,
        amp in 0.01f64..0.5,
        other_amp in 0.01f64..0.5,
        pick in any::<prop::sample::Index>(),
    ) {
        // `cycles` whole periods of 2 Hz at 30 Hz.
        let n = 15 * cycles;
        let band = BandpassSpec::default();
        let outside: Vec<f64> = (1..n.div_ceil(2))
            .map(|k| k as f64 * FS / n as f64)
            .filter(|&f| !(f > 1.5 && f < 2.5))
            .collect();
        let other_hz = outside[pick.index(outside.len())];
        let inb = common::tone(amp, 2.0, FS, n);
        let out = common::tone(other_amp, other_hz, FS, n);
        let mix: Vec<f64> = inb.iter().zip(&out).map(|(a, b)| a + b).collect();
        let e_in = passband_energy(&inb, FS, &band).unwrap();
        let e_mix = passband_energy(&mix, FS, &band).unwrap();
        prop_assert!(close(e_mix, e_in, 1e-6), "{e_mix} vs {e_in} with {other_hz} Hz");
        prop_assert!(close(e_in, n as f64 * amp * amp / 2.0, 1e-9));
    }

    #[test]
    fn map_is_non_negative_and_mean_is_metric(
        h in 1usize..5, w in 1usize..5, t in 4usize..40, seed in any::<u64>()
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..h * w * t).map(|_| rng.random_range(0.0f32..=1.0)).collect();
        let seq = FrameSequence::new(h, w, FS, 0.0, data).unwrap();
        let band = BandpassSpec::default();
        let map = energy_map(&seq, &band).unwrap();
        prop_assert!(map.values().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(average_energy(&map).e_avg, map.mean());
        let sum: f64 = map.values().iter().sum();
        prop_assert_eq!(map.mean(), sum / (h * w) as f64);

        let literal = energy_map_literal(&seq, &band).unwrap();
        for (i, (a, b)) in map.values().iter().zip(literal.values()).enumerate() {
            let (r, c) = (i / w, i % w);
            let oracle = common::band_energy(&seq.pixel_series(r, c), FS, 1.5, 2.5);
            prop_assert!(close(*a, *b, 1e-9));
            prop_assert!(close(*a, oracle, 1e-9));
        }
        for rows in 1..=h {
            let chunked = energy_map_chunked(&seq, &band, rows).unwrap();
            prop_assert_eq!(chunked.values(), map.values());
        }
    }

    #[test]
    fn heatmap_without_floor_preserves_order(values in prop::collection::vec(0.0f64..10.0, 1..64)) {
        let map = EnergyMap::from_values(1, values.len(), values.clone(), 60, FS).unwrap();
        let heat = heatmap_for_display(&map, 0.0).unwrap();
        let max = values.iter().cloned().fold(0.0, f64::max);
        for (i, j) in (0..values.len()).flat_map(|i| (0..values.len()).map(move |j| (i, j))) {
            if values[i] < values[j] {
                prop_assert!(heat[i] <= heat[j]);
            }
        }
        if max > 0.0 {
            prop_assert!(heat.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!(heat.contains(&1.0));
        }
    }
}

#[test]
fn constant_and_zero_series_have_no_energy() {
    let band = BandpassSpec::default();
    for n in [2, 7, 60, 61] {
        let constant = vec![0.7; n];
        assert_eq!(passband_energy(&constant, FS, &band).unwrap(), 0.0);
        assert!(bandpass_filter_pixel(&constant, FS, &band).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(passband_energy(&vec![0.0; n], FS, &band).unwrap(), 0.0);
    }
}

#[test]
fn in_band_tone_passes_unchanged() {
    let band = BandpassSpec::default();
    let x = common::tone(0.1, 2.0, FS, 60);
    let y = bandpass_filter_pixel(&x, FS, &band).unwrap();
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-9);
    }
    let out = bandpass_filter_pixel(&common::tone(0.1, 5.0, FS, 60), FS, &band).unwrap();
    assert!(out.iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn band_edges_are_excluded() {
    // At T = 60 the bins sit every 0.5 Hz, so 1.5 and 2.5 Hz land exactly on
    // the band edges.
    let band = BandpassSpec::default();
    for hz in [1.5, 2.5] {
        let x = common::tone(0.2, hz, FS, 60);
        assert!(passband_energy(&x, FS, &band).unwrap() < 1e-20, "{hz} Hz leaked");
    }
    let projector = BandProjector::new(60, FS, &band).unwrap();
    assert_eq!(projector.kept_bins(), 1);
    let mask = band.mask(60, FS);
    let kept: Vec<usize> = (0..60).filter(|&k| mask[k]).collect();
    assert_eq!(kept, vec![4, 56]);
}

#[test]
fn single_hot_pixel_average() {
    let mut values = vec![0.0; 256 * 256];
    values[1234] = 0.3;
    let map = EnergyMap::from_values(256, 256, values, 60, FS).unwrap();
    assert!((average_energy(&map).e_avg - 0.3 / 65536.0).abs() < 1e-18);
    let zero = EnergyMap::from_values(256, 256, vec![0.0; 65536], 60, FS).unwrap();
    assert_eq!(average_energy(&zero).e_avg, 0.0);
    assert!(heatmap_for_display(&zero, 0.7).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn quantile_floor_then_normalise() {
    let map = EnergyMap::from_values(1, 4, vec![1.0, 2.0, 3.0, 4.0], 60, FS).unwrap();
    assert_eq!(heatmap_for_display(&map, 0.5).unwrap(), vec![0.0, 0.0, 0.75, 1.0]);
}

#[test]
fn constant_cube_gives_zero_map() {
    let seq = FrameSequence::new(8, 8, FS, 0.0, vec![0.42; 8 * 8 * 60]).unwrap();
    let map = energy_map(&seq, &BandpassSpec::default()).unwrap();
    assert!(map.values().iter().all(|&v| v == 0.0));
}

/// Noiseless, in plane: the hottest decile of the map lies in the needle's
/// halo (within three halo lengths of the needle segment).
#[test]
fn hottest_pixels_hug_the_needle() {
    let cfg = PhantomConfig::default().noiseless();
    let phantom = Phantom::new(cfg.clone()).unwrap();
    let seq = phantom.sequence(&ProbeState::translation(0.0), 60, 0).unwrap();
    let map = energy_map(&seq, &BandpassSpec::default()).unwrap();
    let mut sorted = map.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cut = sorted[sorted.len() / 10];
    let (c0, c1) = cfg.needle_span;
    let reach = 3.0 * cfg.tissue_halo_lambda;
    for i in 0..map.height() {
        for j in 0..map.width() {
            if map.get(i, j) > cut {
                let dx = j as f64 - (j as f64).clamp(c0 as f64, (c1 - 1) as f64);
                let dy = i as f64 - cfg.needle_depth_px as f64;
                assert!(dx.hypot(dy) <= reach, "hot pixel ({i},{j}) is {} px from the needle", dx.hypot(dy));
            }
        }
    }
}

#[test]
fn band_outside_nyquist_is_rejected() {
    let x = vec![0.0; 60];
    assert!(passband_energy(&x, FS, &BandpassSpec::new(1.5, 15.0)).is_err());
    assert!(passband_energy(&x, FS, &BandpassSpec::new(2.5, 1.5)).is_err());
    assert!(passband_energy(&x, FS, &BandpassSpec::new(0.0, 2.5)).is_err());
}
