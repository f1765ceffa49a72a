use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vlp_core::estimators::{ml_position_s1, Correlator, PositionModel, Templates};
use vlp_core::quadrature::AdaptiveOptions;
use vlp_core::simulator::{run_mc_position, synthesize_frames, trial_rng, PositionScene, SweepSpec, SweepVariable};
use vlp_core::waveform::cross_energies;
use vlp_core::{Exec, FrequencyMap, Scenario};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn energies(c: &mut Criterion) {
    let w = FrequencyMap::default().waveforms(2, 0.1, 1e-4, 1e7).unwrap();
    let mut g = c.benchmark_group("cross_energies_quadrature");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| cross_energies(black_box(&w), AdaptiveOptions::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn position_search(c: &mut Criterion) {
    let mut scene = PositionScene::reference();
    scene.signal.power = 1.0;
    let leds = scene.transmitters().unwrap();
    let energies = scene.energies(&leds, Exec::Sequential).unwrap();
    let frames = synthesize_frames(&scene, &mut trial_rng(1, 0, 0)).unwrap();
    let templates: Vec<Templates> = leds.iter().map(|l| Templates::new(&l.waveforms, scene.dt)).collect();
    let model = PositionModel {
        leds: &leds,
        receiver: &scene.receiver,
        energies: &energies,
    };
    let mut g = c.benchmark_group("ml_position_s1_search");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                // Fresh correlators so that cached correlations are not reused.
                let corrs: Vec<Correlator> = frames
                    .iter()
                    .zip(&templates)
                    .map(|(f, t)| Correlator::new(f, t).unwrap())
                    .collect();
                ml_position_s1(&corrs, &model, &scene.grid, exec).unwrap()
            })
        });
    }
    g.finish();
}

fn position_monte_carlo(c: &mut Criterion) {
    let mut scene = PositionScene::reference();
    scene.signal.power = 1.0;
    let spec = SweepSpec {
        variable: SweepVariable::Power,
        values: vec![1.0],
        trials: 8,
        seed: 1,
    };
    let mut g = c.benchmark_group("mc_position_8_trials");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_mc_position(&spec, &scene, &Scenario::ALL, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, energies, position_search, position_monte_carlo);
criterion_main!(benches);
