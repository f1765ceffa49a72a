mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;
use vlp_core::bounds::*;
use vlp_core::geometry::{channel_gain, grad_channel_gain, grad_toa, toa};
use vlp_core::scene;
use vlp_core::simulator::PositionScene;
use vlp_core::waveform::closed_form_cross_energies;
use vlp_core::{CrossEnergies, Exec, FrequencyMap, Mat3, Waveform};

fn distance_setup(power: f64, duration: f64, fc: f64) -> (Mat3, [f64; 3], CrossEnergies) {
    let w = FrequencyMap::default().waveforms(1, power, duration, fc).unwrap();
    (
        scene::distance_gammas().unwrap(),
        scene::receiver().noise_psd,
        closed_form_cross_energies(&w).unwrap(),
    )
}

fn distance_bounds(x: f64, power: f64, duration: f64, fc: f64) -> [f64; 3] {
    let (g, s2, ce) = distance_setup(power, duration, fc);
    let k = kappas(&g, &s2, &ce);
    let h = g.map(|r| r.map(|v| v * x.powi(-4)));
    [
        crlb_distance_s1(x, 1.0, &k).unwrap().variance_bound,
        crlb_distance_s2(x, 1.0, &k).unwrap().variance_bound,
        crlb_distance_s3(x, &h, &s2, &ce).unwrap().variance_bound,
    ]
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let g = random_link(&mut rng);
        let lt = g.led_location;
        let p = g.rx_location;
        let analytic = grad_toa(&p, &lt).unwrap();
        let fd = fd_gradient(|l| toa(l, &lt, 0.0).unwrap(), &p, 1e-4);
        assert!((analytic - fd).norm() / analytic.norm() < 1e-6);

        let gain = |l: &vlp_core::Vec3| {
            channel_gain(
                l,
                &g.rx_orientation,
                &lt,
                &g.led_orientation,
                g.lambertian_order,
                1e-4,
                0.4,
            )
            .unwrap()
            .value
        };
        let (analytic, los) = grad_channel_gain(
            &p,
            &g.rx_orientation,
            &lt,
            &g.led_orientation,
            g.lambertian_order,
            1e-4,
            0.4,
        )
        .unwrap();
        assert!(los);
        let fd = fd_gradient(gain, &p, 1e-5);
        let err = (analytic - fd).norm() / analytic.norm();
        assert!(err < 1e-6, "gain gradient error {err:e}");
    }
}

#[test]
fn kappas_match_brute_force() {
    let (g, s2, ce) = distance_setup(0.3, 1e-6, 2e7);
    let k = kappas(&g, &s2, &ce);
    // Σ_j σ⁻² γ_jᵀ E γ_j, written as an explicit quadruple sum over flat indices.
    let brute = |m: &Mat3| -> f64 {
        (0..27)
            .map(|f| {
                let (j, i, l) = (f / 9, (f / 3) % 3, f % 3);
                g[j][i] * g[j][l] * m[i][l] / s2[j]
            })
            .sum()
    };
    assert!(rel(k.kappa, brute(&ce.e)) < 1e-13);
    assert!(rel(k.kappa_dprime, brute(&ce.e_dprime)) < 1e-13);
    assert!((k.kappa_prime - brute(&ce.e_prime)).abs() < 1e-13 * (k.kappa * k.kappa_dprime).sqrt());
}

#[test]
fn distance_bounds_match_dense_inversion() {
    let (g, s2, ce) = distance_setup(0.1, 0.01, 1e7);
    for &x in &[2.5, 5.0, 9.0] {
        let k = kappas(&g, &s2, &ce);
        let s1 = crlb_distance_s1(x, 1.0, &k).unwrap().variance_bound;
        let s1_dense = dense_leading_trace(&distance_known_dense(x, 1.0, &g, &s2, &ce, false), 1);
        assert!(rel(s1, s1_dense) < 1e-10);

        // Delay as the free parameter: the distance variance is that of (x, τ)
        // with the x-derivative of the delay removed.
        let s2b = crlb_distance_s2(x, 1.0, &k).unwrap().variance_bound;
        let s2_dense = dense_leading_trace(&distance_known_dense(x, 1.0, &g, &s2, &ce, true), 1);
        assert!(rel(s2b, s2_dense) < 1e-10, "{s2b:e} vs {s2_dense:e}");
        assert!(rel(s2b, crlb_distance_s2_closed_form(x, 1.0, &k)) < 1e-10);

        let h = g.map(|r| r.map(|v| v * x.powi(-4)));
        let s3 = crlb_distance_s3(x, &h, &s2, &ce).unwrap().variance_bound;
        let dense = distance_s3_dense(x, &h, &s2, &ce);
        assert!(rel(s3, dense_leading_trace(&dense, 1)) < 1e-10);
        let lib = fim_distance_s3(x, &h, &s2, &ce).unwrap();
        assert!((&lib.matrix - &dense).norm() < 1e-12 * dense.norm());
    }
}

fn reference_problem(
    power: f64,
    fc: f64,
) -> (Vec<vlp_core::LedTransmitter>, vlp_core::VlcReceiver, Vec<CrossEnergies>) {
    let mut s = PositionScene::reference();
    s.signal.power = power;
    s.signal.center_hz = fc;
    let leds = s.transmitters().unwrap();
    let energies = s.energies(&leds, Exec::Sequential).unwrap();
    (leds, s.receiver, energies)
}

#[test]
fn position_bounds_match_dense_inversion() {
    let (leds, rx0, energies) = reference_problem(0.1, 1e7);
    for loc in [[4.0, 4.0, 1.0], [2.5, 5.5, 0.5], [6.0, 3.0, 2.0]] {
        let rx = rx0.at(vlp_core::Vec3::from(loc));
        let p = PositionProblem::new(&leds, &rx, &energies);
        for (case, sc, dim) in [
            (PositionCase::KnownSync, Scenario::S1, 3),
            (PositionCase::UnknownDelays, Scenario::S2, 7),
            (PositionCase::UnknownGains, Scenario::S3, 39),
        ] {
            let dense = position_dense(&leds, &rx, &energies, case);
            assert_eq!(dense.nrows(), dim);
            let oracle = dense_leading_trace(&dense, 3);
            let lib = crlb_position(&p, sc).unwrap();
            assert!(!lib.singular_flag);
            let err = rel(lib.variance_bound, oracle);
            assert!(err < 1e-10, "{sc} at {loc:?}: {err:e}");
        }
        let s1 = fim_position_s1(&p).unwrap().matrix;
        let dense = position_dense(&leds, &rx, &energies, PositionCase::KnownSync);
        assert!((&s1 - &dense).norm() < 1e-12 * dense.norm());
    }
}

#[test]
fn position_s2_elementwise_matches_blocks() {
    let (leds, rx, energies) = reference_problem(0.1, 1e7);
    let p = PositionProblem::new(&leds, &rx, &energies);
    let elem = fim_position_s2_elementwise(&p).unwrap().matrix;
    let blk = position_s2_blocks(&p).unwrap();
    let mut eff = blk.j_a;
    for k in 0..blk.j_d.len() {
        let c = blk.j_b.column(k);
        let c = nalgebra::Vector3::new(c[0], c[1], c[2]);
        eff -= c * c.transpose() / blk.j_d[k];
    }
    for r in 0..3 {
        for c in 0..3 {
            assert!((elem[(r, c)] - eff[(r, c)]).abs() < 1e-10 * eff.norm());
        }
    }
}

#[test]
fn trace_inverse_matches_adjugate() {
    let m = nalgebra::DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
    let a = |r: usize, c: usize| m[(r, c)];
    let det = m.determinant();
    // Diagonal cofactors of a symmetric 3×3 matrix.
    let cof = [
        a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1),
        a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0),
        a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
    ];
    let r = trace_inverse(&FisherMatrix::new(vec!["a".into(), "b".into(), "c".into()], m)).unwrap();
    assert!(rel(r.variance_bound, cof.iter().sum::<f64>() / det) < 1e-14);
}

#[test]
fn identical_colors_have_no_first_moment() {
    let w = Waveform::raised_cosine(0.1, 1e-6, 2e7).unwrap();
    let ce = closed_form_cross_energies(&[w.clone(), w.clone(), w]).unwrap();
    let k = kappas(&scene::distance_gammas().unwrap(), &scene::receiver().noise_psd, &ce);
    assert!(k.kappa_prime.abs() < 1e-12 * (k.kappa * k.kappa_dprime).sqrt());
}

#[test]
fn unknown_gains_without_first_moment_is_inverse_timing_information() {
    let (g, s2, ce) = distance_setup(0.1, 1e-6, 1e7);
    let ce = ce.without_first_derivative();
    let x: f64 = 4.0;
    let h = g.map(|r| r.map(|v| v * x.powi(-4)));
    let a: f64 = (0..3)
        .map(|j| {
            (0..3)
                .map(|i| (0..3).map(|l| h[j][i] * h[j][l] * ce.e_dprime[i][l]).sum::<f64>())
                .sum::<f64>()
                / (s2[j] * vlp_core::SPEED_OF_LIGHT.powi(2))
        })
        .sum();
    let b = crlb_distance_s3(x, &h, &s2, &ce).unwrap().variance_bound;
    assert!(rel(b, 1.0 / a) < 1e-12);
}

#[test]
fn single_color_reduction_matches_general_bound() {
    let (leds, rx, energies) = reference_problem(0.1, 1e7);
    for color in vlp_core::geometry::COLORS {
        let p = PositionProblem::new(&leds, &rx, &energies).with_channels(ChannelSet::single(color));
        let general = crlb_position_s3(&p).unwrap().variance_bound;
        let reduced = crlb_position_s3_single_color(&p, color).unwrap().variance_bound;
        assert!(rel(general, reduced) < 1e-12, "{color:?}");
    }
}

#[test]
fn distance_slopes() {
    let xs = [2.0, 10.0];
    let b: Vec<[f64; 3]> = xs.iter().map(|&x| distance_bounds(x, 0.1, 0.01, 1e7)).collect();
    let slope = |s: usize| (b[1][s].sqrt() / b[0][s].sqrt()).ln() / (xs[1] / xs[0]).ln();
    assert!((slope(1) - 5.0).abs() < 0.1);
    assert!((slope(2) - 4.0).abs() < 0.08);
    assert!(rel(slope(0), slope(1)) < 0.02);
}

#[test]
fn frequency_behaviour() {
    let fcs = [1e7, 2e7, 5e7, 1e8];
    let b: Vec<[f64; 3]> = fcs.iter().map(|&f| distance_bounds(5.0, 0.1, 0.01, f)).collect();
    for w in b.windows(2) {
        assert!(rel(w[1][1], b[0][1]) < 1e-9);
        assert!(w[1][2] < w[0][2]);
    }
    assert!(rel(b[0][0].sqrt(), b[0][1].sqrt()) < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_information_ordering(
        x in 2.5f64..10.0,
        power in 0.01f64..10.0,
        duration in prop::sample::select(vec![1e-6, 1e-5, 1e-3]),
        fc in 1e6f64..1e8,
    ) {
        let [s1, s2, s3] = distance_bounds(x, power, duration, fc);
        prop_assert!(s1 <= s2 * (1.0 + 1e-9));
        prop_assert!(s1 <= s3 * (1.0 + 1e-9));
    }

    #[test]
    fn position_information_ordering(
        lx in 0.5f64..7.5, ly in 0.5f64..7.5, lz in 0.0f64..3.0,
        power in 0.01f64..10.0,
        fc in 1e6f64..1e8,
    ) {
        let (leds, rx, energies) = reference_problem(power, fc);
        let rx = rx.at(vlp_core::Vec3::new(lx, ly, lz));
        let p = PositionProblem::new(&leds, &rx, &energies);
        let b: Vec<f64> = Scenario::ALL.iter().map(|&s| crlb_position(&p, s).unwrap().variance_bound).collect();
        prop_assert!(b[0] <= b[1] * (1.0 + 1e-9));
        prop_assert!(b[0] <= b[2] * (1.0 + 1e-9));
    }
}
