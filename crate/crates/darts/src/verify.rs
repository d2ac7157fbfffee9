//! Statistical verification harness: chi-square suites and unbiasedness
//! oracles for every sampler, shared by the `pdftest` command and the
//! integration tests.

use crate::distance::{gen_candidates, ris_resample, DistanceSampleContext};
use crate::eda::{build_table, eda_pdf, eda_sample, EdaTable, EdaTableConfig};
use crate::ellipse::{polar_distance, s_from_polar_distance};
use crate::elliptical::{pdf_s, sample_s};
use crate::math::{integrate_gl, Vec3};
use crate::medium::{hg_eval, hg_sample, Medium};
use crate::stats::{chi_square_p_value, mean_and_sem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const P_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub p_value: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn chi(name: &str, p: f64) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            p_value: Some(p),
            pass: p > P_THRESHOLD,
            detail: format!("p = {p:.4}"),
        }
    }
}

/// Distance-sampling context with the emitter `tmfp_distance` transport mean
/// free paths away and a residual budget that keeps the whole ray causal.
pub fn make_distance_context(tmfp_distance: f64) -> DistanceSampleContext {
    let emitter = Vec3::new(1.0, 0.5, 0.0);
    let separation = emitter.length();
    // g = 0.3, sigma_a = 0.1 sigma_s: sigma_tr = 0.1 s + 0.7 s = 0.8 s
    let sigma_s = tmfp_distance / separation / 0.8;
    let medium = Medium::new(sigma_s, 0.1 * sigma_s, 0.3, 1.0, 1.0).unwrap();
    let d_max = 2.0;
    // the farthest candidate-to-emitter distance bounds the causal budget
    let worst = (0..=64)
        .map(|i| {
            let d = d_max * i as f64 / 64.0;
            (Vec3::new(d, 0.0, 0.0) - emitter).length()
        })
        .fold(0.0f64, f64::max);
    DistanceSampleContext {
        ray_origin: Vec3::ZERO,
        ray_direction: Vec3::new(1.0, 0.0, 0.0),
        d_max,
        residual_time: medium.time_of(d_max + worst) + 1.0,
        emitter_position: emitter,
        medium,
    }
}

/// Chi-square of resampled distances against the quadrature-normalized
/// target density. Large candidate counts shrink the resampling bias.
pub fn ris_distribution_p(
    ctx: &DistanceSampleContext,
    n_ris: usize,
    trials: usize,
    bins: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = vec![0usize; bins];
    let mut kept = 0usize;
    for _ in 0..trials {
        let us: Vec<f64> = (0..n_ris).map(|_| rng.random()).collect();
        let cands = gen_candidates(ctx, &us);
        if let Some((d, _)) = ris_resample(&cands, rng.random()) {
            observed[((d / ctx.d_max * bins as f64) as usize).min(bins - 1)] += 1;
            kept += 1;
        }
    }
    let bin_mass: Vec<f64> = (0..bins)
        .map(|i| {
            let a = ctx.d_max * i as f64 / bins as f64;
            let b = ctx.d_max * (i + 1) as f64 / bins as f64;
            integrate_gl(|d| crate::distance::target_density(d, ctx), a, b, 64)
        })
        .collect();
    let total: f64 = bin_mass.iter().sum();
    let expected: Vec<f64> = bin_mass.iter().map(|m| m / total * kept as f64).collect();
    chi_square_p_value(&observed, &expected)
}

/// Verifies E[weight * g(d)] = integral of g over the target's support for
/// g = target and g = d * target (constant and linear test functions in the
/// target measure). Returns (pass, detail).
pub fn ris_unbiasedness(ctx: &DistanceSampleContext, trials: usize, seed: u64) -> (bool, String) {
    let target = |d: f64| crate::distance::target_density(d, ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut const_samples = Vec::with_capacity(trials);
    let mut linear_samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let us: Vec<f64> = (0..crate::distance::N_RIS).map(|_| rng.random()).collect();
        let cands = gen_candidates(ctx, &us);
        match ris_resample(&cands, rng.random()) {
            Some((d, w)) => {
                let t = target(d);
                const_samples.push(w * t);
                linear_samples.push(w * d * t);
            }
            None => {
                const_samples.push(0.0);
                linear_samples.push(0.0);
            }
        }
    }
    let expected_const = integrate_gl(target, 0.0, ctx.d_max, 2048);
    let expected_linear = integrate_gl(|d| d * target(d), 0.0, ctx.d_max, 2048);
    let (mc, sc) = mean_and_sem(&const_samples);
    let (ml, sl) = mean_and_sem(&linear_samples);
    let ok_c = (mc - expected_const).abs() < 3.0 * sc;
    let ok_l = (ml - expected_linear).abs() < 3.0 * sl;
    (
        ok_c && ok_l,
        format!(
            "const {mc:.4e} vs {expected_const:.4e} (sem {sc:.1e}); linear {ml:.4e} vs {expected_linear:.4e} (sem {sl:.1e})"
        ),
    )
}

pub fn hg_direction_check(g: f64, samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let incoming = Vec3::new(0.0, 0.0, 1.0);
    let bins = 64;
    let mut observed = vec![0usize; bins];
    for _ in 0..samples {
        let (dir, _) = hg_sample(incoming, g, rng.random(), rng.random());
        let c = incoming.dot(dir).clamp(-1.0, 1.0);
        observed[(((c + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected: Vec<f64> = (0..bins)
        .map(|i| {
            let a = -1.0 + 2.0 * i as f64 / bins as f64;
            let b = -1.0 + 2.0 * (i + 1) as f64 / bins as f64;
            2.0 * std::f64::consts::PI * integrate_gl(|c| hg_eval(c, g), a, b, 32) * samples as f64
        })
        .collect();
    CheckResult::chi(&format!("phase-direction g={g}"), chi_square_p_value(&observed, &expected))
}

fn verify_table_config() -> EdaTableConfig {
    EdaTableConfig {
        ratio_bins: 8,
        s_bins: 8,
        angular_bins: 64,
        s_min_mfp: 0.1,
        s_max_mfp: 20.0,
        mc_samples_per_bin: 512,
    }
}

pub fn eda_direction_check(samples: usize, seed: u64) -> CheckResult {
    let medium = Medium::new(1.0, 0.05, 0.3, 1.0, 1.0).unwrap();
    let table = build_table(&medium, &verify_table_config(), 7);
    eda_direction_check_with(&table, samples, seed)
}

/// Chi-square of tabulated elliptical direction samples against the table's
/// own interpolated density, on a fresh angular binning.
pub fn eda_direction_check_with(table: &EdaTable, samples: usize, seed: u64) -> CheckResult {
    let sigma_t = table.fingerprint[0] + table.fingerprint[1];
    let c_focal = 1.5 / sigma_t;
    let s_sum = 3.0 / sigma_t;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = table.config.angular_bins;
    let mut observed = vec![0usize; bins];
    for _ in 0..samples {
        let (cos_theta, _, _) = eda_sample(table, c_focal, s_sum, rng.random(), rng.random())
            .expect("query inside table range");
        observed[(((cos_theta + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let width = 2.0 / bins as f64;
    let expected: Vec<f64> = (0..bins)
        .map(|i| {
            let mid = -1.0 + (i as f64 + 0.5) * width;
            let pdf = eda_pdf(table, c_focal, s_sum, mid).unwrap();
            pdf * 2.0 * std::f64::consts::PI * width * samples as f64
        })
        .collect();
    CheckResult::chi("elliptical-direction-table", chi_square_p_value(&observed, &expected))
}

pub fn elliptical_length_check(samples: usize, seed: u64) -> CheckResult {
    let (s_m, s_max, sigma_t) = (1.2, 4.0, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = 32;
    let mut observed = vec![0usize; bins];
    for _ in 0..samples {
        let s = sample_s(s_m, s_max, sigma_t, rng.random());
        observed[(((s - s_m) / (s_max - s_m) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected: Vec<f64> = (0..bins)
        .map(|i| {
            let a = s_m + (s_max - s_m) * i as f64 / bins as f64;
            let b = s_m + (s_max - s_m) * (i + 1) as f64 / bins as f64;
            integrate_gl(|s| pdf_s(s, s_m, s_max, sigma_t), a, b, 16) * samples as f64
        })
        .collect();
    CheckResult::chi("elliptical-length-sum", chi_square_p_value(&observed, &expected))
}

/// Polar-distance samples against the analytic change-of-variables density.
pub fn elliptical_polar_check(samples: usize, seed: u64) -> CheckResult {
    let (c_focal, cos_theta, s_m, s_max, sigma_t) = (0.8, 0.4, 1.0, 3.5, 0.6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_of = |s: f64| polar_distance(c_focal, s, cos_theta).unwrap();
    let (t_lo, t_hi) = (t_of(s_m), t_of(s_max));
    let bins = 32;
    let mut observed = vec![0usize; bins];
    for _ in 0..samples {
        let s = sample_s(s_m, s_max, sigma_t, rng.random());
        let t = t_of(s);
        observed[(((t - t_lo) / (t_hi - t_lo) * bins as f64) as usize).min(bins - 1)] += 1;
    }
    // exact truncated-exponential CDF evaluated at the bin-edge S values
    let p_c = 1.0 - (-sigma_t * (s_max - s_m)).exp();
    let cdf = |s: f64| (1.0 - (-sigma_t * (s - s_m)).exp()) / p_c;
    let expected: Vec<f64> = (0..bins)
        .map(|i| {
            let ta = t_lo + (t_hi - t_lo) * i as f64 / bins as f64;
            let tb = t_lo + (t_hi - t_lo) * (i + 1) as f64 / bins as f64;
            let sa = s_from_polar_distance(ta, c_focal, cos_theta);
            let sb = s_from_polar_distance(tb, c_focal, cos_theta);
            (cdf(sb.min(s_max)) - cdf(sa.max(s_m))) * samples as f64
        })
        .collect();
    CheckResult::chi("elliptical-polar-distance", chi_square_p_value(&observed, &expected))
}

/// Rigged sampler (uniform draws) tested against an exponential target; the
/// harness passes when it correctly rejects with p below the threshold.
pub fn negative_control_check(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_max = 3.0;
    let bins = 32;
    let mut observed = vec![0usize; bins];
    for _ in 0..samples {
        let d: f64 = rng.random::<f64>() * d_max;
        observed[((d / d_max * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let p_c = 1.0 - (-d_max).exp();
    let expected: Vec<f64> = (0..bins)
        .map(|i| {
            let a = d_max * i as f64 / bins as f64;
            let b = d_max * (i + 1) as f64 / bins as f64;
            ((-a).exp() - (-b).exp()) / p_c * samples as f64
        })
        .collect();
    let p = chi_square_p_value(&observed, &expected);
    CheckResult {
        name: "negative-control (rigged sampler must fail)".into(),
        p_value: Some(p),
        pass: p < P_THRESHOLD,
        detail: format!("p = {p:.2e} (expected below {P_THRESHOLD})"),
    }
}

/// The full suite used by the `pdftest` command.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(hg_direction_check(0.0, 100_000, 1));
    out.push(hg_direction_check(0.6, 100_000, 2));
    for (i, tmfp) in [0.3, 1.0, 2.0, 3.5, 5.0].iter().enumerate() {
        let ctx = make_distance_context(*tmfp);
        let p = ris_distribution_p(&ctx, 256, 20_000, 32, 10 + i as u64);
        out.push(CheckResult::chi(&format!("distance-resampling {tmfp} tmfp"), p));
    }
    let ctx = make_distance_context(2.0);
    let (pass, detail) = ris_unbiasedness(&ctx, 200_000, 20);
    out.push(CheckResult { name: "distance-resampling unbiasedness".into(), p_value: None, pass, detail });
    out.push(eda_direction_check(100_000, 30));
    out.push(elliptical_length_check(100_000, 40));
    out.push(elliptical_polar_check(100_000, 41));
    out.push(negative_control_check(100_000, 50));
    out
}
