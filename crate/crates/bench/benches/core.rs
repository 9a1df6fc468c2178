use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use xmr_core::mrbma::{score_model, search, BmaParams, WeightedDesign};
use xmr_core::sumstats::{Locus, SnpRecord};
use xmr_core::{
    clump, generate, twmr_fit, AssocTable, ClumpParams, LdMatrix, LdScale, SimSpec, TraitKind,
    TwmrInput,
};

fn clump_instance(n: usize) -> (AssocTable, LdMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let recs: Vec<SnpRecord> = (0..n)
        .map(|i| {
            let pos = i as u64 * 2_000 + 1;
            let p = 10f64.powf(-rng.random_range(0.0..15.0));
            SnpRecord::new(
                format!("rs{i}"),
                Some(Locus::new("1", pos).unwrap()),
                "A",
                "G",
                0.1,
                0.01,
                p,
            )
            .unwrap()
        })
        .collect();
    let r = DMatrix::from_fn(n, n, |i, j| 0.9f64.powi(i.abs_diff(j) as i32));
    let ld = LdMatrix::new(
        recs.iter().map(|r| r.rsid.clone()).collect(),
        r,
        LdScale::SignedR,
    )
    .unwrap();
    (
        AssocTable::new("bench", TraitKind::Exposure, recs).unwrap(),
        ld,
    )
}

fn bench_clump(c: &mut Criterion) {
    let mut group = c.benchmark_group("clump");
    for n in [250, 1000, 2000] {
        let (assoc, ld) = clump_instance(n);
        let params = ClumpParams {
            p1: 1e-4,
            p2: 1e-2,
            r2: 0.1,
            kb: 250.0,
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| clump(black_box(&assoc), &ld, &params).unwrap())
        });
    }
    group.finish();
}

fn bench_twmr(c: &mut Criterion) {
    let mut group = c.benchmark_group("twmr_fit");
    for (n, k) in [(50, 3), (200, 10)] {
        let spec = SimSpec {
            n_snps: n,
            k_exposures: k,
            true_alpha: vec![0.1; k],
            ld_rho: 0.4,
            n_gwas: 1e5,
            n_qtl: 1e5,
            pleiotropy_sd: 0.0,
            seed: 3,
        };
        let d = generate(&spec).unwrap();
        let input = TwmrInput::new(d.effects, d.ld, spec.n_gwas, spec.n_qtl).unwrap();
        group.bench_function(format!("{n}x{k}"), |b| {
            b.iter(|| twmr_fit(black_box(&input)).unwrap())
        });
    }
    group.finish();
}

fn bma_design(n: usize, k: usize) -> WeightedDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let y = x.column(0) * 0.5 + x.column(1) * -0.3;
    WeightedDesign::new(x, y, (0..k).map(|i| format!("e{i}")).collect())
}

fn bench_bma(c: &mut Criterion) {
    let design = bma_design(100, 12);
    let params = BmaParams {
        kmin: 1,
        kmax: 12,
        max_iter: 2_000,
        ..Default::default()
    };
    c.bench_function("bma_score_size4", |b| {
        b.iter(|| score_model(&design, black_box(&[0, 3, 5, 9]), &params).unwrap())
    });
    let mut group = c.benchmark_group("bma_search");
    group.sample_size(10);
    group.bench_function("stochastic_k12_2000", |b| {
        b.iter(|| search(black_box(&design), &params).unwrap())
    });
    let exhaustive = BmaParams {
        kmin: 4,
        kmax: 4,
        ..params.clone()
    };
    group.bench_function("exhaustive_k12_size4", |b| {
        b.iter(|| search(black_box(&design), &exhaustive).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_clump, bench_twmr, bench_bma);
criterion_main!(benches);
