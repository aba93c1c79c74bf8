mod common;

use approx::assert_relative_eq;
use common::{amp_se_oracle, f_in_oracle, f_out_oracle, moments, wiener_fixed_point};
use dgamp::channel::{Channel, ChannelKind, SignalPrior};
use dgamp::denoiser::{f_in, f_out_clip, f_out_linear, f_out_prime};
use dgamp::quadrature::AdaptiveOptions;
use dgamp::se::{
    fixed_point, inner_moments, outer_moments, se_centralized, SeModel, SeOptions, ZCovariance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn oracle_reproduces_linear_posterior() {
    for &(theta, y, v, s2) in &[(0.3, -1.2, 0.5, 0.01), (-2.0, 1.0, 0.05, 0.3), (0.0, 0.0, 1.0, 1.0)] {
        let oracle = f_out_oracle(theta, y, v, s2, ChannelKind::Linear).unwrap();
        assert_relative_eq!(oracle, (theta - y) / (v + s2), max_relative = 1e-10);
        assert_relative_eq!(f_out_linear(theta, y, v, s2).unwrap(), oracle, max_relative = 1e-10);
    }
}

#[test]
fn f_out_clip_matches_oracle_on_all_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let threshold = rng.gen_range(0.5..3.0);
        let theta = rng.gen_range(-4.0..4.0);
        let v = rng.gen_range(0.05..2.0);
        let s2 = 10f64.powf(rng.gen_range(-3.0..-0.3));
        let y = match rng.gen_range(0..3) {
            0 => threshold,
            1 => -threshold,
            _ => rng.gen_range(-threshold..threshold),
        };
        let kind = ChannelKind::Clip { threshold };
        let oracle = f_out_oracle(theta, y, v, s2, kind).unwrap();
        let got = f_out_clip(theta, y, v, s2, threshold).unwrap();
        assert!(
            (got - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "theta={theta} y={y} v={v} s2={s2} A={threshold}: {got} vs {oracle}"
        );
    }
}

#[test]
fn f_out_clip_derivative_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let threshold = rng.gen_range(0.5..3.0);
        let theta = rng.gen_range(-4.0..4.0);
        let v = rng.gen_range(0.05..2.0);
        let s2 = 10f64.powf(rng.gen_range(-3.0..-0.3));
        let y = if rng.gen_bool(0.5) { threshold } else { -threshold };
        let h = 1e-6;
        let fd = (f_out_clip(theta + h, y, v, s2, threshold).unwrap()
            - f_out_clip(theta - h, y, v, s2, threshold).unwrap())
            / (2.0 * h);
        let an = f_out_prime(theta, y, v, s2, ChannelKind::Clip { threshold }).unwrap();
        assert_relative_eq!(fd, an, max_relative = 1e-5);
    }
}

#[test]
fn f_in_matches_trapezoid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let rho = rng.gen_range(0.02..1.0);
        let a = rng.gen_range(0.1..3.0);
        let s2 = 10f64.powf(rng.gen_range(-3.0..0.5));
        let u = rng.gen_range(-6.0..6.0);
        let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
        let got = f_in(u, a, s2, &prior).unwrap();
        let oracle = f_in_oracle(u, a, s2, rho);
        assert!(
            (got - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "u={u} a={a} s2={s2} rho={rho}: {got} vs {oracle}"
        );
    }
}

#[test]
fn centralized_linear_se_matches_scalar_amp_recursion() {
    let prior = SignalPrior::bernoulli_gaussian(0.1).unwrap();
    let sigma2 = Channel::noise_variance_from_snr_db(30.0);
    let channel = Channel::linear(sigma2).unwrap();
    let model = SeModel::homogeneous(prior, channel, 0.075, 4).unwrap();
    let se = se_centralized(&model, 40, &SeOptions::default()).unwrap();
    let oracle = amp_se_oracle(0.1, sigma2, 0.3, 40);
    for (t, (row, want)) in se.mse().iter().zip(&oracle).enumerate() {
        for &got in row {
            assert!((got - want).abs() <= 1e-8 * want, "t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn gaussian_prior_se_converges_to_closed_form() {
    let prior = SignalPrior::bernoulli_gaussian(1.0).unwrap();
    for &(snr, delta) in &[(10.0, 0.5), (20.0, 2.0), (5.0, 1.0)] {
        let sigma2 = Channel::noise_variance_from_snr_db(snr);
        let model = SeModel::homogeneous(prior, Channel::linear(sigma2).unwrap(), delta / 2.0, 2).unwrap();
        let se = se_centralized(&model, 400, &SeOptions::default()).unwrap();
        let fp = fixed_point(&se.mse(), 1, 1e-12).unwrap();
        assert_relative_eq!(fp.mse, wiener_fixed_point(sigma2, delta), max_relative = 1e-8);
    }
}

#[test]
fn inner_moments_match_dense_grid() {
    let rho = 0.1;
    let prior = SignalPrior::bernoulli_gaussian(rho).unwrap();
    let (alpha, sigma, a, s2) = (1.0, 0.1, 1.0, 0.1);
    let got = inner_moments(alpha, sigma, a, s2, &prior, &AdaptiveOptions::default()).unwrap();

    // Two-dimensional trapezoid over (x, noise) for the active component.
    let vx = 1.0 / rho;
    let (nx, nw) = (3000, 1200);
    let (xs, ws) = (12.0 * vx.sqrt(), 12.0 * sigma.sqrt());
    let (hx, hw) = (2.0 * xs / nx as f64, 2.0 * ws / nw as f64);
    let trap = |k: usize, n: usize| if k == 0 || k == n { 0.5 } else { 1.0 };
    let gauss = |x: f64, var: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    let mut active = 0.0;
    for i in 0..=nx {
        let x = -xs + hx * i as f64;
        let px = gauss(x, vx) * trap(i, nx) * hx;
        for j in 0..=nw {
            let w = -ws + hw * j as f64;
            let f = f_in(alpha * x + w, a, s2, &prior).unwrap();
            active += px * gauss(w, sigma) * trap(j, nw) * hw * (f - x).powi(2);
        }
    }
    let mut inactive = 0.0;
    for j in 0..=20 * nw {
        let w = -ws + hw / 20.0 * j as f64;
        inactive += gauss(w, sigma) * trap(j, 20 * nw) * hw / 20.0 * f_in(w, a, s2, &prior).unwrap().powi(2);
    }
    let oracle = rho * active + (1.0 - rho) * inactive;
    assert_relative_eq!(got.mse, oracle, max_relative = 1e-8);
    assert_relative_eq!(got.exf, got.ef2, max_relative = 1e-8);
}

#[test]
fn clip_outer_moments_at_start_match_monte_carlo() {
    let sigma2 = Channel::noise_variance_from_snr_db(30.0);
    let threshold = 2.0;
    let channel = Channel::clip(threshold, sigma2).unwrap();
    let cov = ZCovariance::initial(4, 0.2);
    let v = 1.0 / (4.0 * 0.2);
    let got = outer_moments(v, cov, &channel, &AdaptiveOptions::default()).unwrap();
    assert_relative_eq!(got.m2, got.xi_out, max_relative = 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 10_000_000;
    let (ez, sd) = (cov.ez2.sqrt(), sigma2.sqrt());
    let tau_s = cov.ez2 + sigma2;
    let (mut f2, mut sf) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let z = ez * rng.sample::<f64, _>(StandardNormal);
        let w = sd * rng.sample::<f64, _>(StandardNormal);
        let y = channel.measure(z, w);
        let f = f_out_clip(0.0, y, v, sigma2, threshold).unwrap();
        f2.push(f * f);
        sf.push(-(z + w) * f / tau_s);
    }
    for (samples, want, name) in [(&f2, got.m2, "m2"), (&sf, got.zeta, "zeta")] {
        let (mean, var, _) = moments(samples);
        let se = (var / n as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * se, "{name}: mc {mean} +- {se} vs {want}");
    }
}
