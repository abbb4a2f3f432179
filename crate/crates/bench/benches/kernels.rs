use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matchsim::analysis::uniformization_transient;
use matchsim::ctmc::{simulate_path_with, Recording};
use matchsim::diffusion::{DoubleEnded, DoubleEndedStepper, LimitStepper};
use matchsim::generator::testfn::{Difference, Profile, SupportBox};
use matchsim::generator::{apply_an, convergence_sweep};
use matchsim::kernel::{build_generator_matrix, DEFAULT_ENTRY_CAP};
use matchsim::model::derive_prelimit_rates;
use matchsim::rng::stream_rng;
use matchsim::{Capacity, PreLimitRates, QueueState, SystemParams};

fn params(k: usize, n: u64) -> SystemParams {
    let beta = (0..k).map(|i| 0.3 - 0.2 * i as f64).collect();
    SystemParams::new(1.0, beta, vec![1.0; k], vec![f64::INFINITY; k], n).unwrap()
}

fn ctmc(c: &mut Criterion) {
    let mut group = c.benchmark_group("ctmc");
    for n in [100u64, 400, 1600] {
        let rates = derive_prelimit_rates(&params(2, n)).unwrap();
        group.bench_with_input(BenchmarkId::new("path_T1_final_only", n), &rates, |b, r| {
            let mut rng = stream_rng(1, 0);
            b.iter(|| simulate_path_with(r, &QueueState::zeros(2), 1.0, 1, Recording::FinalOnly, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn generator(c: &mut Criterion) {
    let p = params(2, 10_000);
    let rates = derive_prelimit_rates(&p).unwrap();
    let f = Difference::bump(2, 1.5, Profile::PolyBump);
    let state = QueueState::new(vec![120, 0]).unwrap();
    c.bench_function("apply_an", |b| b.iter(|| apply_an(&f, black_box(&state), &rates, 10_000).unwrap()));
    let window = SupportBox {
        lower: vec![0.0, 0.0],
        upper: vec![2.0, 2.0],
    };
    c.bench_function("sweep_3_scales", |b| {
        b.iter(|| convergence_sweep(&f, &p, &[100, 1000, 10_000], &window).unwrap())
    });
}

fn uniformization(c: &mut Criterion) {
    let mut group = c.benchmark_group("uniformization");
    for b in [2u32, 5, 10] {
        let rates = PreLimitRates::new(vec![20.0, 20.0], vec![1.0, 1.0], vec![Capacity::Finite(b); 2]).unwrap();
        let g = build_generator_matrix(&rates, DEFAULT_ENTRY_CAP).unwrap();
        let mut p0 = vec![0.0; g.len()];
        p0[0] = 1.0;
        group.bench_with_input(BenchmarkId::from_parameter(g.len()), &g, |bch, g| {
            bch.iter(|| uniformization_transient(g.matrix(), &p0, 2.0, 1e-10).unwrap())
        });
    }
    group.finish();
}

fn euler(c: &mut Criterion) {
    let mut group = c.benchmark_group("euler_1000_steps");
    let p = params(2, 1);
    let model = DoubleEnded::from_params(&p, 2f64.sqrt()).unwrap();
    group.bench_function("double_ended", |b| {
        let mut rng = stream_rng(2, 0);
        b.iter(|| {
            let mut st = DoubleEndedStepper::new(model, 0.0, 1e-3).unwrap();
            for _ in 0..1000 {
                st.step(&mut rng);
            }
            st.x
        })
    });
    for k in [2usize, 4] {
        let p = params(k, 1);
        group.bench_with_input(BenchmarkId::new("limit_k", k), &p, |b, p| {
            let mut rng = stream_rng(3, 0);
            b.iter(|| {
                let mut st = LimitStepper::new(p, &vec![0.0; p.k()], 1e-3).unwrap();
                for _ in 0..1000 {
                    st.step(&mut rng);
                }
                st.matching
            })
        });
    }
    group.finish();
}

criterion_group!(benches, ctmc, generator, uniformization, euler);
criterion_main!(benches);
