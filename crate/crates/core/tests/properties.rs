mod support;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;
use xmr_core::mrbma::{score_model, search, BmaParams, WeightedDesign};
use xmr_core::simgen::{ar1_ld, draw_truth, observe, replicate_rng};
use xmr_core::twmr::{alpha_jacobians, gls_alpha, LdSolver};
use xmr_core::uni_mr::{egger, ivw, weighted_median_point};
use xmr_core::{clump, generate, twmr_estimate, SimSpec, TwmrInput};

#[test]
fn bma_score_matches_snp_space_determinant() {
    for seed in 0..20 {
        let (x, y) = random_bma_design(seed, 25, 6);
        let design = WeightedDesign::new(
            x.clone(),
            y.clone(),
            (0..6).map(|i| format!("e{i}")).collect(),
        );
        let params = BmaParams {
            kmin: 0,
            kmax: 6,
            prior_sigma: 0.7,
            ..Default::default()
        };
        for members in [vec![], vec![2], vec![0, 5], vec![1, 2, 3, 4]] {
            let fast = score_model(&design, &members, &params).unwrap().log_ml;
            let direct = bma_log_ml_direct(&x, &y, &members, 0.7);
            assert!(
                rel_close(fast, direct, 1e-10),
                "{members:?}: {fast} vs {direct}"
            );
        }
    }
}

#[test]
fn bma_exhaustive_fixed_size_matches_oracle() {
    let (x, y) = random_bma_design(3, 30, 7);
    let design = WeightedDesign::new(
        x.clone(),
        y.clone(),
        (0..7).map(|i| format!("e{i}")).collect(),
    );
    let params = BmaParams {
        kmin: 3,
        kmax: 3,
        ..Default::default()
    };
    let report = search(&design, &params).unwrap();
    let (models, mip) = bma_exhaustive_oracle(&x, &y, 3, 3, 0.1, 0.5);
    assert_eq!(report.models.len(), models.len());
    for m in &report.models {
        let expected = models.iter().find(|o| o.0 == m.members).unwrap().1;
        assert!((m.posterior - expected).abs() < 1e-12);
    }
    for (a, b) in report.mip.iter().zip(&mip) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn null_signal_mip_shrinks_with_prior_sigma() {
    // With no signal, a wider effect prior penalizes every non-empty model
    // more, so inclusion probabilities fall as sigma grows.
    let x = DMatrix::from_fn(40, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    let y = DVector::zeros(40);
    let design = WeightedDesign::new(x, y, (0..4).map(|i| format!("e{i}")).collect());
    let mut last = f64::INFINITY;
    for sigma in [0.1, 0.3, 0.5, 1.0, 2.0] {
        let p = BmaParams {
            kmin: 0,
            kmax: 4,
            prior_sigma: sigma,
            max_iter: 3000,
            ..Default::default()
        };
        let total: f64 = search(&design, &p).unwrap().mip.iter().sum();
        assert!(total < last);
        last = total;
    }
}

#[test]
fn estimator_oracles_on_fixed_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 3..12 {
        let pairs = random_pairs(&mut rng, n);
        let (b, se) = ivw_oracle(&pairs);
        let fit = ivw(&pairs).unwrap();
        assert!(rel_close(fit.estimate, b, 1e-10) && rel_close(fit.se, se, 1e-10));
        let (slope, slope_se, icpt, icpt_se) = egger_oracle(&pairs);
        let e = egger(&pairs).unwrap();
        assert!(rel_close(e.slope.estimate, slope, 1e-10));
        assert!(rel_close(e.slope.se, slope_se, 1e-10));
        assert!(rel_close(e.intercept.estimate, icpt, 1e-10));
        assert!(rel_close(e.intercept.se, icpt_se, 1e-10));
        let ratios: Vec<f64> = pairs
            .iter()
            .map(|p| p.beta_outcome / p.beta_exposure)
            .collect();
        let w: Vec<f64> = pairs
            .iter()
            .map(|p| (p.beta_exposure / p.se_outcome).powi(2))
            .collect();
        assert!(rel_close(
            weighted_median_point(&ratios, &w).unwrap(),
            weighted_median_oracle(&pairs),
            1e-10
        ));
    }
}

#[test]
fn clump_matches_oracle_small() {
    for seed in 0..30 {
        let (assoc, ld, params) = random_clump_instance(1000 + seed, 150);
        let got: Vec<(String, Vec<String>)> = clump(&assoc, &ld, &params)
            .unwrap()
            .into_iter()
            .map(|c| (c.index, c.members))
            .collect();
        assert_eq!(got, clump_oracle(&assoc, &ld, &params), "seed {seed}");
    }
}

#[test]
fn simulated_gamma_covariance_converges() {
    let spec = SimSpec {
        n_snps: 8,
        k_exposures: 1,
        true_alpha: vec![0.4],
        ld_rho: 0.6,
        n_gwas: 1e4,
        n_qtl: 1e4,
        pleiotropy_sd: 0.0,
        seed: 17,
    };
    let truth = draw_truth(&spec, &mut replicate_rng(spec.seed, 0)).unwrap();
    let mean = truth.outcome_mean();
    let reps = 10_000;
    let mut cov = DMatrix::zeros(8, 8);
    for r in 0..reps {
        let d = observe(&spec, &truth, &mut replicate_rng(spec.seed, r + 1)).unwrap();
        let dev = &d.effects.outcome_beta - &mean;
        cov += &dev * dev.transpose();
    }
    cov /= reps as f64;
    let target = ar1_ld(8, 0.6) / spec.n_gwas;
    let rel = (&cov - &target).norm() / target.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}

#[test]
fn simulation_recovers_alpha_at_large_samples() {
    let spec = SimSpec {
        n_snps: 40,
        k_exposures: 3,
        true_alpha: vec![0.25, -0.4, 0.1],
        ld_rho: 0.5,
        n_gwas: 1e8,
        n_qtl: 1e8,
        pleiotropy_sd: 0.0,
        seed: 2,
    };
    let d = generate(&spec).unwrap();
    let input = TwmrInput::new(d.effects, d.ld, spec.n_gwas, spec.n_qtl).unwrap();
    for (r, a) in twmr_estimate(&input).unwrap().iter().zip(&spec.true_alpha) {
        assert!((r.alpha - a).abs() < 1e-2, "{} vs {a}", r.alpha);
    }
}

#[test]
fn twmr_jacobian_matches_finite_differences() {
    let spec = SimSpec {
        n_snps: 15,
        k_exposures: 2,
        true_alpha: vec![0.3, -0.1],
        ld_rho: 0.3,
        n_gwas: 1e4,
        n_qtl: 1e4,
        pleiotropy_sd: 0.01,
        seed: 5,
    };
    let d = generate(&spec).unwrap();
    let solver = LdSolver::new(d.ld.signed_r().unwrap()).unwrap();
    let e = d.effects.beta.clone();
    let g = d.effects.outcome_beta.clone();
    let jac = alpha_jacobians(&e, &g, &solver).unwrap();
    for (m, j) in jac.iter().enumerate() {
        let scale = j.amax();
        for i in 0..spec.n_snps {
            let h = 1e-6;
            let mut up = e.clone();
            up[(i, m)] += h;
            let mut down = e.clone();
            down[(i, m)] -= h;
            let fd = (gls_alpha(&up, &g, &solver).unwrap()
                - gls_alpha(&down, &g, &solver).unwrap())
                / (2.0 * h);
            for a in 0..2 {
                assert!(
                    (fd[a] - j[(a, i)]).abs() <= 1e-6 * scale,
                    "d alpha_{a} / d E[{i},{m}]"
                );
            }
        }
    }
}
