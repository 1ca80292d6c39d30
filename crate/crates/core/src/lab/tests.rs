use super::*;
use crate::activations::Act;
use crate::inputs::{
    draw_block_spec, fit_empirical_record, fit_streaming_record, sample_matrix, sample_scalar_law,
    BlockMixtureParams, GaussianLatent, ScalarLawSpec,
};
use crate::integrals::nonlinearity_stats;
use crate::network::{forward, init_gaussian, NetworkConfig};
use crate::sgd::SampleSource;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn mk_state(n: usize, d: usize, k: usize, m: usize, seed: u64) -> crate::network::NetworkState {
    let cfg = NetworkConfig { n, d, k, m, g: Act::Relu, f: Act::Tanh };
    init_gaussian(&cfg, seed, true).unwrap()
}

fn uniform_partition(d: usize, m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < d {
        let size = m.min(d - start);
        out.push((start, size));
        start += size;
    }
    out
}

// ---------------------------------------------------------------------------
// Wasserstein-1
// ---------------------------------------------------------------------------

#[test]
fn w1_self_distance_is_zero() {
    let mix = ScalarMixture::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
    assert!(wasserstein1_mixture_to_normal(&mix).unwrap() < 1e-9);
}

#[test]
fn w1_translation_identity() {
    // W1(N(μ,1), N(0,1)) = |μ|.
    for mu in [1.0, -2.0, 0.25] {
        let mix = ScalarMixture::new(vec![1.0], vec![mu], vec![1.0]).unwrap();
        let w = wasserstein1_mixture_to_normal(&mix).unwrap();
        assert!((w - mu.abs()).abs() < 1e-9, "W1(N({mu},1), Φ) = {w}");
    }
}

#[test]
fn w1_scale_identity() {
    // W1(N(0,σ²), N(0,1)) = |σ−1|·E|Z| = |σ−1|·√(2/π).
    let mix = ScalarMixture::new(vec![1.0], vec![0.0], vec![2.0]).unwrap();
    let w = wasserstein1_mixture_to_normal(&mix).unwrap();
    let expect = (2.0_f64 / std::f64::consts::PI).sqrt();
    assert!((w - expect).abs() < 1e-9, "got {w}, want {expect}");
}

#[test]
fn w1_empirical_translation() {
    let mut rng = crate::inputs::row_rng(77, 0);
    let samples: Vec<f64> = (0..200_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + 1.0
        })
        .collect();
    let w = wasserstein1_to_normal(&samples).unwrap();
    assert!((w - 1.0).abs() < 0.02, "empirical translation W1 = {w}");
}

#[test]
fn w1_closed_form_matches_empirical_sampling() {
    let mix = ScalarMixture::new(
        vec![0.3, 0.5, 0.2],
        vec![-1.2, 0.3, 2.0],
        vec![0.7, 1.0, 1.4],
    )
    .unwrap();
    let exact = wasserstein1_mixture_to_normal(&mix).unwrap();
    let mut rng = crate::inputs::row_rng(4242, 0);
    let samples: Vec<f64> = (0..400_000)
        .map(|_| {
            let u: f64 = rng.gen();
            let j = if u < 0.3 {
                0
            } else if u < 0.8 {
                1
            } else {
                2
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            mix.means[j] + mix.sds[j] * z
        })
        .collect();
    let emp = wasserstein1_to_normal(&samples).unwrap();
    assert!((exact - emp).abs() < 0.01, "closed form {exact} vs empirical {emp}");
}

#[test]
fn w1_spread_sweep_is_monotone_in_alpha() {
    let alphas = [0.1, 0.5, 1.0, 2.0, 5.0];
    for q in [2usize, 4, 8, 16] {
        let mut avg = vec![0.0_f64; alphas.len()];
        let seeds = [11u64, 12, 13, 14];
        for &seed in &seeds {
            for (i, &alpha) in alphas.iter().enumerate() {
                let mix = spread_mixture(q, alpha, seed).unwrap().standardized().unwrap();
                avg[i] += wasserstein1_mixture_to_normal(&mix).unwrap() / seeds.len() as f64;
            }
        }
        for i in 1..avg.len() {
            assert!(
                avg[i] >= avg[i - 1] - 1e-9,
                "q={q}: W1 not monotone: {avg:?}"
            );
        }
        assert!(avg[avg.len() - 1] > avg[0], "q={q}: sweep should actually grow: {avg:?}");
    }
}

#[test]
fn w1_zero_spread_is_standard_normal() {
    // α = 0 means every component is N(0,1): the mixture is exactly Φ.
    let mix = spread_mixture(8, 0.0, 5).unwrap();
    assert!(wasserstein1_mixture_to_normal(&mix).unwrap() < 1e-9);
}

#[test]
fn spread_mixture_couples_means_linearly_in_alpha() {
    let base = spread_mixture(4, 1.0, 99).unwrap();
    let scaled = spread_mixture(4, 2.0, 99).unwrap();
    for j in 0..4 {
        assert_eq!(scaled.means[j], 2.0 * base.means[j]);
        assert_eq!(scaled.weights[j], base.weights[j]);
    }
}

#[test]
fn w1_error_paths() {
    assert!(wasserstein1_to_normal(&[]).is_err());
    assert!(wasserstein1_to_normal(&[1.0, f64::NAN]).is_err());
    assert!(ScalarMixture::new(vec![0.5, 0.6], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    assert!(ScalarMixture::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov
// ---------------------------------------------------------------------------

#[test]
fn ks_respects_dkw_bound_for_normal_samples() {
    let model = GaussianLatent { d: 1 };
    let c = sample_matrix(&model, 100_000, 314).unwrap();
    let samples: Vec<f64> = c.column(0).to_vec();
    let d = ks_to_normal(&samples).unwrap();
    // DKW at 99% confidence: √(ln(2/0.01)/(2P)) ≈ 1.63/√P.
    assert!(d <= 1.63 / (100_000f64).sqrt(), "KS distance {d} above the DKW envelope");
}

#[test]
fn ks_point_mass_at_zero_is_half() {
    let d = ks_to_normal(&[0.0; 10]).unwrap();
    assert!((d - 0.5).abs() < 1e-15);
}

#[test]
fn ks_standardized_heavy_tail_is_visible() {
    let law = ScalarLawSpec::Lorentz { x0: 0.0, gamma: 1.0 };
    let c = sample_scalar_law(&law, 100_000, 1, 2024).unwrap();
    let rec = fit_empirical_record(&c).unwrap();
    let z = crate::inputs::apply_standardization(&c, &rec).unwrap();
    let samples: Vec<f64> = z.column(0).to_vec();
    let d = ks_to_normal(&samples).unwrap();
    assert!(d > 0.01, "standardized heavy-tail KS distance {d} should be visible");
}

#[test]
fn ks_error_paths() {
    assert!(ks_to_normal(&[]).is_err());
    assert!(ks_to_normal(&[f64::INFINITY]).is_err());
}

// ---------------------------------------------------------------------------
// Block statistics
// ---------------------------------------------------------------------------

#[test]
fn single_block_total_is_the_statistic_itself() {
    let state = mk_state(96, 64, 2, 2, 7);
    let model = GaussianLatent { d: 64 };
    let source = SampleSource::new(&model, None, 55);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let partition = uniform_partition(64, 64);
    let p = 512;
    let stat = block_statistic(&state, &source, p, &partition, BlockTarget::U(3), &stats).unwrap();

    // Normalized F means σ = ‖F_{·,i}‖/√D = 1 exactly up to roundoff.
    assert!((stat.sigma - 1.0).abs() < 1e-12);
    // Totals reproduce U_3/σ for every sample.
    let c = sample_matrix(&model, p, 55).unwrap();
    let fwd = forward(&state, c.view()).unwrap();
    for s in 0..p {
        let want = fwd.u[(s, 3)] / stat.sigma;
        assert!(
            (stat.totals[s] - want).abs() <= 1e-10 * want.abs().max(1.0),
            "sample {s}: total {} vs U_i/σ {want}",
            stat.totals[s]
        );
    }
    assert_eq!(stat.block_sizes, vec![64]);
    assert!(stat.remainder_ratio.is_none());
}

#[test]
fn nu_totals_match_forward_preactivations() {
    let state = mk_state(96, 64, 2, 3, 8);
    let model = GaussianLatent { d: 64 };
    let source = SampleSource::new(&model, None, 56);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let partition = uniform_partition(64, 16);
    let p = 256;
    let stat = block_statistic(&state, &source, p, &partition, BlockTarget::Nu(1), &stats).unwrap();
    let t_mm = state.w_tilde.row(1).dot(&state.w_tilde.row(1)) / 64.0;
    assert!((stat.sigma - t_mm.sqrt()).abs() < 1e-12);
    let c = sample_matrix(&model, p, 56).unwrap();
    let fwd = forward(&state, c.view()).unwrap();
    for s in 0..p {
        let want = fwd.nu[(s, 1)] / stat.sigma;
        assert!((stat.totals[s] - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}

#[test]
fn variance_partition_sums_to_one_for_gaussian_inputs() {
    let state = mk_state(128, 256, 2, 2, 9);
    let model = GaussianLatent { d: 256 };
    let source = SampleSource::new(&model, None, 57);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let p = 20_000;
    for m in [16usize, 64] {
        let partition = uniform_partition(256, m);
        let stat =
            block_statistic(&state, &source, p, &partition, BlockTarget::U(0), &stats).unwrap();
        let vs = stat.variance_sum();
        assert!(
            (vs - 1.0).abs() < 4.0 / (p as f64).sqrt(),
            "m={m}: Σ Var(Z_b) = {vs}"
        );
    }
}

#[test]
fn one_block_gaussian_absolute_third_moment() {
    // U_i is exactly N(0,1) for Gaussian latents and a normalized column, so
    // E|Z|³ = 2√(2/π) ≈ 1.5958.
    let state = mk_state(96, 64, 2, 2, 10);
    let model = GaussianLatent { d: 64 };
    let source = SampleSource::new(&model, None, 58);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let partition = uniform_partition(64, 64);
    let p = 20_000;
    let stat = block_statistic(&state, &source, p, &partition, BlockTarget::U(1), &stats).unwrap();
    let want = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let got = third_moment_sum(&stat);
    assert!((got - want).abs() < 0.1, "E|Z|³ = {got}, want ≈ {want}");
}

#[test]
fn third_moment_sum_scales_like_sqrt_block_fraction() {
    // For i.i.d. Gaussian latents each Z_b is Gaussian with sd ‖w_b‖/‖w‖, so
    // Σ_b E|Z_b|³ ≈ 2√(2/π)·(m/D)^{1/2} up to the mild χ²-norm factor; the
    // log-log slope over a wide sweep stays within 0.5 ± 0.1.
    let d = 512;
    let state = mk_state(128, d, 2, 2, 11);
    let model = GaussianLatent { d };
    let source = SampleSource::new(&model, None, 59);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let p = 4_000;
    let mut points = Vec::new();
    for m in [4usize, 16, 64, 256] {
        let partition = uniform_partition(d, m);
        let stat =
            block_statistic(&state, &source, p, &partition, BlockTarget::U(0), &stats).unwrap();
        points.push((m as f64 / d as f64, third_moment_sum(&stat)));
    }
    let fit = fit_scaling(&points, None).unwrap();
    assert!(
        (fit.slope - 0.5).abs() < 0.1,
        "third-moment slope {} (points {points:?})",
        fit.slope
    );
    assert!(fit.r2 > 0.98, "log-log fit should be nearly straight, R² = {}", fit.r2);
}

#[test]
fn berry_esseen_bound_holds_with_unit_constant() {
    let d = 256;
    let state = mk_state(128, d, 2, 2, 12);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let p = 20_000;

    // Independent Gaussian coordinates.
    let model = GaussianLatent { d };
    let source = SampleSource::new(&model, None, 60);
    let partition = uniform_partition(d, 16);
    let stat = block_statistic(&state, &source, p, &partition, BlockTarget::U(2), &stats).unwrap();
    let ks = ks_to_normal(&stat.totals).unwrap();
    assert!(ks <= third_moment_sum(&stat), "KS {ks} above third-moment sum");

    // Correlated blocks, standardized.
    let params = BlockMixtureParams { d, m: 32, q: 2, ..BlockMixtureParams::default() };
    let (spec, _) = draw_block_spec(&params, 613).unwrap();
    let rec = fit_streaming_record(&spec, 4_000, 61).unwrap();
    let source = SampleSource::new(&spec, Some(&rec), 62);
    let partition = spec.partition();
    let stat = block_statistic(&state, &source, p, &partition, BlockTarget::U(2), &stats).unwrap();
    let ks = ks_to_normal(&stat.totals).unwrap();
    let third = third_moment_sum(&stat);
    assert!(ks <= third, "KS {ks} above third-moment sum {third}");
}

#[test]
fn lambda_remainder_share_shrinks_with_block_fraction() {
    // The preactivation λ splits into b·(linear term) + remainder; the
    // remainder's variance share must decrease as m/D does (rank correlation
    // ≥ 0.8 over the sweep).
    let d = 256;
    let n = 256;
    let state = mk_state(n, d, 2, 2, 13);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    // The remainder's m-driven excess scales with the squared within-block
    // correlation, which sits on top of an m-independent nonlinearity floor
    // (≈ 8% here): a geometric m grid, strong block correlations, and
    // averaging over several structure draws are needed for the ordering to
    // rise above draw variability (the per-draw correlation strengths are
    // themselves random).
    let ms = [4usize, 32, 128];
    let p = 2_400;
    let mut ratios = vec![0.0_f64; ms.len()];
    let spec_seeds = [31u64, 32, 33, 34, 35, 36, 37, 38, 39, 40];
    for &spec_seed in &spec_seeds {
        for (i, &m) in ms.iter().enumerate() {
            let params = BlockMixtureParams {
                d,
                m,
                q: 2,
                equicorr_max: 0.85,
                rank1_max: 0.1,
                ..BlockMixtureParams::default()
            };
            let (spec, _) = draw_block_spec(&params, spec_seed).unwrap();
            let rec = fit_streaming_record(&spec, 4_000, 63).unwrap();
            let source = SampleSource::new(&spec, Some(&rec), 64 + spec_seed);
            let stat = block_statistic(
                &state,
                &source,
                p,
                &spec.partition(),
                BlockTarget::Lambda(0),
                &stats,
            )
            .unwrap();
            ratios[i] += stat.remainder_ratio.unwrap() / spec_seeds.len() as f64;
        }
    }
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let rho = spearman(&xs, &ratios).unwrap();
    assert!(
        rho >= 0.8,
        "remainder share should grow with m: ratios {ratios:?}, rank correlation {rho}"
    );
}

#[test]
fn block_statistic_validation() {
    let state = mk_state(64, 32, 2, 2, 14);
    let model = GaussianLatent { d: 32 };
    let source = SampleSource::new(&model, None, 65);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    // Gap in the tiling.
    let bad = vec![(0usize, 8usize), (9, 23)];
    assert!(matches!(
        block_statistic(&state, &source, 16, &bad, BlockTarget::U(0), &stats),
        Err(Error::Shape(_))
    ));
    // Wrong total size.
    let short = vec![(0usize, 8usize), (8, 8)];
    assert!(block_statistic(&state, &source, 16, &short, BlockTarget::U(0), &stats).is_err());
    // Out-of-range indices.
    let part = uniform_partition(32, 8);
    assert!(block_statistic(&state, &source, 16, &part, BlockTarget::U(64), &stats).is_err());
    assert!(block_statistic(&state, &source, 16, &part, BlockTarget::Nu(2), &stats).is_err());
    assert!(block_statistic(&state, &source, 16, &part, BlockTarget::Lambda(2), &stats).is_err());
    // Zero weight vector.
    let mut zeroed = state.clone();
    zeroed.f_mat.column_mut(0).fill(0.0);
    assert!(matches!(
        block_statistic(&zeroed, &source, 16, &part, BlockTarget::U(0), &stats),
        Err(Error::Degenerate(_))
    ));
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

#[test]
fn residuals_vanish_for_gaussian_inputs() {
    let state = mk_state(128, 64, 2, 2, 15);
    let model = GaussianLatent { d: 64 };
    let source = SampleSource::new(&model, None, 66);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let p = 20_000;
    let res = residuals(&state, &source, p, 0, 1, 3, &stats).unwrap();
    let scale = 4.0 / (p as f64).sqrt();
    assert!(res.r1 < scale, "R1 = {} (SE {})", res.r1, res.r1_se);
    assert!(res.r2 < scale, "R2 = {} (SE {})", res.r2, res.r2_se);
    assert!(res.r1_se > 0.0 && res.r2_se > 0.0);
}

#[test]
fn residual_r1_with_identity_feature_is_covariance_mismatch() {
    let cfg = NetworkConfig { n: 96, d: 64, k: 2, m: 2, g: Act::Relu, f: Act::Identity };
    let state = init_gaussian(&cfg, 16, true).unwrap();
    let model = GaussianLatent { d: 64 };
    let source = SampleSource::new(&model, None, 67);
    let stats = nonlinearity_stats(Act::Identity, 80).unwrap();
    let p = 20_000;
    let res = residuals(&state, &source, p, 2, 5, 0, &stats).unwrap();
    // With f = id the theory value is the exact Gaussian covariance, so the
    // residual is pure sampling noise.
    assert!(res.r1 < 4.0 / (p as f64).sqrt(), "identity-f R1 = {}", res.r1);
}

#[test]
fn residuals_validation() {
    let state = mk_state(64, 32, 2, 2, 17);
    let model = GaussianLatent { d: 32 };
    let source = SampleSource::new(&model, None, 68);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    assert!(residuals(&state, &source, 5_000, 0, 1, 0, &stats).is_err());
    assert!(residuals(&state, &source, 10_000, 3, 3, 0, &stats).is_err());
    assert!(residuals(&state, &source, 10_000, 0, 64, 0, &stats).is_err());
    assert!(residuals(&state, &source, 10_000, 0, 1, 32, &stats).is_err());
}

// ---------------------------------------------------------------------------
// Scaling fits and rank correlation
// ---------------------------------------------------------------------------

#[test]
fn fit_scaling_recovers_exact_power_law() {
    let points: Vec<(f64, f64)> = (1..=8)
        .map(|i| {
            let x = 2f64.powi(-i);
            (x, 3.5 * x.sqrt())
        })
        .collect();
    let fit = fit_scaling(&points, None).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12);
    assert!((fit.intercept - 3.5f64.ln()).abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    assert_eq!(fit.n_used, 8);
}

#[test]
fn fit_scaling_range_restriction() {
    let points: Vec<(f64, f64)> = (1..=10)
        .map(|i| {
            let x = i as f64 / 10.0;
            // Slope 1 inside [0.3, 0.8], wild outside.
            let y = if (0.25..=0.85).contains(&x) { 2.0 * x } else { 100.0 };
            (x, y)
        })
        .collect();
    let fit = fit_scaling(&points, Some((0.3, 0.8))).unwrap();
    assert!((fit.slope - 1.0).abs() < 1e-12, "restricted slope {}", fit.slope);
    assert_eq!(fit.n_used, 6);
    assert!(fit.x_lo >= 0.3 && fit.x_hi <= 0.8);
}

#[test]
fn fit_scaling_error_paths() {
    let three = [(0.1, 1.0), (0.2, 2.0), (0.4, 3.0)];
    assert!(fit_scaling(&three, None).is_err());
    let with_zero = [(0.1, 1.0), (0.2, 0.0), (0.4, 3.0), (0.8, 4.0)];
    assert!(fit_scaling(&with_zero, None).is_err());
    let same_x = [(0.1, 1.0), (0.1, 2.0), (0.1, 3.0), (0.1, 4.0)];
    assert!(matches!(fit_scaling(&same_x, None), Err(Error::Degenerate(_))));
}

#[test]
fn spearman_basics() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let up = [2.0, 4.0, 5.0, 7.0, 11.0];
    let down = [5.0, 4.0, 3.0, 2.0, 1.0];
    assert!((spearman(&xs, &up).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&xs, &down).unwrap() + 1.0).abs() < 1e-12);
    // One adjacent swap in a length-5 ranking gives ρ = 1 − 6·2/(5·24) = 0.9.
    let swapped = [2.0, 4.0, 7.0, 5.0, 11.0];
    assert!((spearman(&xs, &swapped).unwrap() - 0.9).abs() < 1e-12);
    // Ties get midranks.
    let tied = [1.0, 1.0, 2.0];
    let r = ranks(&tied);
    assert_eq!(r, vec![1.5, 1.5, 3.0]);
    assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    assert!(spearman(&[1.0], &[1.0]).is_err());
}

// ---------------------------------------------------------------------------
// Covariance mismatch
// ---------------------------------------------------------------------------

#[test]
fn covariance_mismatch_self_is_zero() {
    let state = mk_state(96, 48, 2, 2, 18);
    let model = GaussianLatent { d: 48 };
    let c = sample_matrix(&model, 4_000, 70).unwrap();
    let loss = covariance_mismatch(&state, c.view(), c.view()).unwrap();
    assert_eq!(loss.nu, 0.0);
    assert_eq!(loss.u, 0.0);
    assert_eq!(loss.w_tilde, 0.0);
}

#[test]
fn covariance_mismatch_gaussian_seeds_are_noise() {
    let state = mk_state(96, 48, 2, 2, 19);
    let model = GaussianLatent { d: 48 };
    let a = sample_matrix(&model, 8_000, 71).unwrap();
    let b = sample_matrix(&model, 8_000, 72).unwrap();
    let loss = covariance_mismatch(&state, a.view(), b.view()).unwrap();
    assert!(loss.nu < 0.06, "ν mismatch {} should be sampling noise", loss.nu);
    assert!(loss.u < 0.06, "U mismatch {} should be sampling noise", loss.u);
    assert!(loss.w_tilde < 0.06, "W̃ mismatch {} should be sampling noise", loss.w_tilde);
}

#[test]
fn covariance_mismatch_sees_correlated_blocks() {
    let d = 48;
    let state = mk_state(96, d, 2, 2, 20);
    let params = BlockMixtureParams {
        d,
        m: 16,
        q: 2,
        equicorr_max: 0.7,
        rank1_max: 0.2,
        ..BlockMixtureParams::default()
    };
    let (spec, _) = draw_block_spec(&params, 808).unwrap();
    let rec = fit_streaming_record(&spec, 8_000, 73).unwrap();
    let structured = {
        let raw = crate::inputs::sample_block_mixture(&spec, 8_000, 74).unwrap();
        crate::inputs::apply_standardization(&raw, &rec).unwrap()
    };
    let model = GaussianLatent { d };
    let reference = sample_matrix(&model, 8_000, 75).unwrap();
    let floor = {
        let other = sample_matrix(&model, 8_000, 76).unwrap();
        covariance_mismatch(&state, other.view(), reference.view()).unwrap()
    };
    let loss = covariance_mismatch(&state, structured.view(), reference.view()).unwrap();
    assert!(
        loss.nu > 3.0 * floor.nu && loss.nu > 0.02,
        "ν mismatch {} should clear the noise floor {}",
        loss.nu,
        floor.nu
    );
    assert!(loss.u > 2.0 * floor.u, "U mismatch {} vs floor {}", loss.u, floor.u);
}

#[test]
fn covariance_mismatch_validation() {
    let state = mk_state(64, 32, 2, 2, 21);
    let model = GaussianLatent { d: 32 };
    let a = sample_matrix(&model, 100, 77).unwrap();
    let wrong = Array2::<f64>::zeros((100, 16));
    assert!(covariance_mismatch(&state, a.view(), wrong.view()).is_err());
    let one = Array2::<f64>::zeros((1, 32));
    assert!(covariance_mismatch(&state, a.view(), one.view()).is_err());
}

#[test]
fn multi_target_fold_matches_single_target_calls() {
    let state = mk_state(96, 64, 2, 2, 11);
    let (spec, _) = draw_block_spec(
        &BlockMixtureParams {
            d: 64,
            m: 8,
            ..Default::default()
        },
        41,
    )
    .unwrap();
    let source = SampleSource::new(&spec, None, 57);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let partition = spec.partition();
    let p = 600;
    let targets = [BlockTarget::U(3), BlockTarget::Nu(0), BlockTarget::Lambda(1)];

    let multi = block_statistics(&state, &source, p, &partition, &targets, &stats).unwrap();
    assert_eq!(multi.len(), targets.len());
    for (stat, &target) in multi.iter().zip(targets.iter()) {
        let single = block_statistic(&state, &source, p, &partition, target, &stats).unwrap();
        assert_eq!(stat.sigma, single.sigma);
        assert_eq!(stat.z_mean, single.z_mean);
        assert_eq!(stat.z_var, single.z_var);
        assert_eq!(stat.z_abs3, single.z_abs3);
        assert_eq!(stat.totals, single.totals);
        assert_eq!(stat.remainder_ratio, single.remainder_ratio);
    }
}

#[test]
fn multi_triple_residuals_match_single_triple_calls() {
    let state = mk_state(48, 64, 2, 2, 12);
    let (spec, _) = draw_block_spec(
        &BlockMixtureParams {
            d: 64,
            m: 8,
            ..Default::default()
        },
        42,
    )
    .unwrap();
    let rec = fit_streaming_record(&spec, 2_000, 58).unwrap();
    let source = SampleSource::new(&spec, Some(&rec), 59);
    let stats = nonlinearity_stats(Act::Tanh, 80).unwrap();
    let triples = [(0usize, 5usize, 3usize), (7, 2, 40), (0, 2, 63)];

    let many = residuals_many(&state, &source, 10_000, &triples, &stats).unwrap();
    assert_eq!(many.len(), triples.len());
    for (pair, &(i, j, r)) in many.iter().zip(triples.iter()) {
        let single = residuals(&state, &source, 10_000, i, j, r, &stats).unwrap();
        assert_eq!(pair.r1, single.r1);
        assert_eq!(pair.r1_se, single.r1_se);
        assert_eq!(pair.r2, single.r2);
        assert_eq!(pair.r2_se, single.r2_se);
    }
}
