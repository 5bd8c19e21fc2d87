use ppt_ising::critical::{beta_critical, extrapolate_to_zero_field, growth_rate, sweep, write_sweep_csv};
use ppt_ising::ppt::{PptParams, DEFAULT_NODE_CAP};
use ppt_ising::rde::RdeConfig;

// 40-digit evaluations of the closed form, computed offline in multiprecision
const BETA_C_2_1: f64 = 0.045_908_078_819_332_782_369_130_172_690_436_375_05;
const R_2_1: f64 = 21.797_958_971_132_712_392_789_136_298_823_565_567_86;
const BETA_C_2_5: f64 = 0.102_049_049_593_061_635_609_789_209_140_381_831_988;
const R_2_5: f64 = 9.833_202_097_703_344_944_802_585_205_822_816_681_137;
const BETA_C_3_2: f64 = 0.035_205_473_978_940_048_277_633_167_570_036_935_283;

#[test]
fn closed_form_matches_multiprecision_values() {
    let c = beta_critical(2, 1.0).unwrap();
    assert!((c.beta_c - BETA_C_2_1).abs() < 1e-14);
    assert!((c.r_kappa - R_2_1).abs() < 1e-13);
    assert!((c.pi_c - 1.0 / R_2_1).abs() < 1e-15);
    assert!((c.r_kappa - (12.0 + 4.0 * 6f64.sqrt())).abs() < 1e-13);
    let c = beta_critical(2, 5.0).unwrap();
    assert!((c.beta_c - BETA_C_2_5).abs() < 1e-14);
    assert!((c.r_kappa - R_2_5).abs() < 1e-13);
    assert!((beta_critical(3, 2.0).unwrap().beta_c - BETA_C_3_2).abs() < 1e-14);
}

#[test]
fn tanh_of_beta_c_inverts_the_growth_rate() {
    for m in [2, 3, 5] {
        for delta in [0.5, 1.0, 2.0, 10.0] {
            let c = beta_critical(m, delta).unwrap();
            assert!((c.beta_c.tanh() * c.r_kappa - 1.0).abs() < 1e-14, "m={m} delta={delta}");
        }
    }
}

#[test]
fn nonpositive_delta_and_invalid_parameters() {
    for delta in [-1.0, -0.5, 0.0] {
        let c = beta_critical(2, delta).unwrap();
        assert_eq!(c.beta_c, 0.0);
        assert_eq!(c.pi_c, 0.0);
    }
    assert!(beta_critical(1, 1.0).is_err());
    assert!(beta_critical(2, -2.0).is_err());
    assert!(beta_critical(2, f64::NAN).is_err());
}

#[test]
fn large_delta_limit_and_monotonicity() {
    for m in [2usize, 3, 5] {
        let mf = m as f64;
        let limit = (1.0 / (2.0 * (mf + (mf * (mf - 1.0)).sqrt()))).atanh();
        assert!((beta_critical(m, 1e6).unwrap().beta_c - limit).abs() < 1e-5);
    }
    let deltas: Vec<f64> = (1..60).map(|i| 0.25 * i as f64).collect();
    for m in 2..6 {
        let betas: Vec<f64> = deltas.iter().map(|&d| beta_critical(m, d).unwrap().beta_c).collect();
        assert!(betas.windows(2).all(|w| w[1] > w[0]));
    }
    for &d in &deltas {
        let betas: Vec<f64> = (2..8).map(|m| beta_critical(m, d).unwrap().beta_c).collect();
        assert!(betas.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn growth_starts_at_two_m_and_stays_below_r_kappa() {
    let p = PptParams::new(2, 1.0).unwrap();
    let g = growth_rate(&p, 4, 2_000, 71, DEFAULT_NODE_CAP).unwrap();
    assert_eq!(g.mean_sizes[0].mean, 1.0);
    let first = g.mean_sizes[1];
    assert!((first.mean - 4.0).abs() <= 3.0 * first.err);
    for r in &g.ratios {
        assert!(r.mean <= g.r_kappa * 1.1, "{} vs {}", r.mean, g.r_kappa);
    }
    for w in g.ratios.windows(2) {
        assert!(w[1].mean >= w[0].mean - 3.0 * (w[0].err.powi(2) + w[1].err.powi(2)).sqrt());
    }
}

#[test]
fn sweep_is_monotone_and_writes_csv() {
    let p = PptParams::new(2, 1.0).unwrap();
    let base = RdeConfig::new(0.0, 0.0, 3, 1_000, 72);
    let betas = [0.05, 0.1, 0.2];
    let fields = [0.1, 0.3];
    let points = sweep(&p, &betas, &fields, &base).unwrap();
    assert_eq!(points.len(), 6);
    let m = |i: usize| points[i].estimates.magnetisation.pooled;
    for i in 0..3 {
        // shared trees make the comparisons tight, so no slack is needed
        assert!(m(2 * i + 1).mean > m(2 * i).mean);
        if i > 0 {
            assert!(m(2 * i).mean > m(2 * (i - 1)).mean);
        }
    }
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &points).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("beta,B,M,M_err,U,U_err,phi,phi_err\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn extrapolation_rejects_bad_fields() {
    let p = PptParams::new(2, 1.0).unwrap();
    let base = RdeConfig::new(0.1, 0.1, 2, 10, 73);
    assert!(extrapolate_to_zero_field(&p, 0.1, &[0.1], &base).is_err());
    assert!(extrapolate_to_zero_field(&p, 0.1, &[0.0, 0.1], &base).is_err());
    // without coupling the magnetisation is tanh B, which extrapolates to almost zero
    let e = extrapolate_to_zero_field(&p, 0.0, &[0.01, 0.001], &RdeConfig::new(0.0, 0.0, 2, 500, 73)).unwrap();
    assert!(e.magnetisation.mean.abs() < 1e-6, "{e:?}");
    // at finite depth the plus boundary leaves a residual above zero even well below beta_c
    let e = extrapolate_to_zero_field(&p, 0.01, &[0.01, 0.001], &RdeConfig::new(0.0, 0.0, 2, 500, 73)).unwrap();
    assert!(e.magnetisation.mean > 0.0);
}
