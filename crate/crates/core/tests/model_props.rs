use std::sync::Arc;

use proptest::prelude::*;
use sbdf_core::model::{
    prostate_initials, prostate_reactions, registration_check, PiecewiseLinear, ProstateModel,
    ProstateParams, Schedule, TumorSeed,
};
use sbdf_core::{ac_reaction, allen_cahn, Bounds, Field, NonlinearModel, ReactionSystem};

#[test]
fn allen_cahn_shifted_reaction_peaks_at_two() {
    let n = 200_001;
    let max = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .map(|u| (3.0 * u - u * u * u).abs())
        .fold(0.0, f64::max);
    assert!((max - 2.0).abs() <= 1e-12, "{max}");
    let m = allen_cahn(0.01, 2.0).unwrap();
    assert_eq!(m.nonlinear(1.0), 2.0);
    assert_eq!(m.nonlinear(-1.0), -2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn shifted_reaction_is_2b_lipschitz(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        prop_assume!(a != b);
        let m = allen_cahn(0.01, 2.0).unwrap();
        let q = (m.nonlinear(a) - m.nonlinear(b)).abs() / (a - b).abs();
        prop_assert!(q <= 2.0 * m.b() + 1e-12);
    }

    #[test]
    fn registration_accepts_exactly_the_admissible_b(b in 0.5f64..4.0) {
        let ok = registration_check("ac", &ac_reaction, b, Bounds::symmetric_unit()).is_ok();
        // max |f'| on [-1, 1] is 2, at the end points
        if b >= 2.0 {
            prop_assert!(ok);
        } else if b < 2.0 * (1.0 - 1e-5) {
            prop_assert!(!ok);
        }
    }

    #[test]
    fn prostate_reactions_match_transcription(
        phi in 0.0f64..=1.0,
        sigma in -1.0f64..3.0,
        p in 0.0f64..2.0,
        t in 0.0f64..40.0,
        lambda in 0.0f64..1000.0,
        mobility in 0.0f64..5.0,
        m_ref in 0.0f64..1.0,
        s_h in 0.0f64..5.0,
        s_c in 0.0f64..5.0,
        s in 0.0f64..5.0,
        gamma_h in 0.0f64..5.0,
        gamma_c in 0.0f64..20.0,
        gamma_p in 0.0f64..1.0,
        alpha_h in 0.0f64..1.0,
        alpha_c in 0.0f64..3.0,
        dose in 0.0f64..3.0,
    ) {
        let params = ProstateParams {
            lambda,
            mobility,
            m_ref,
            s_h,
            s_c,
            s,
            gamma_h,
            gamma_c,
            gamma_p,
            alpha_h,
            alpha_c,
            drug: Schedule::new(vec![(10.0, 20.0, dose), (25.0, 30.0, 2.0 * dose)]).unwrap(),
            ..ProstateParams::default()
        };
        let table = params.m_of_sigma.clone();
        let model = ProstateModel::new(params, (-1.0, 3.0)).unwrap();

        // direct transcription of the three rate laws
        let u = if (10.0..20.0).contains(&t) { dose } else if (25.0..30.0).contains(&t) { 2.0 * dose } else { 0.0 };
        let m = table.eval(sigma);
        let want_phi = -2.0 * mobility * phi * (1.0 - phi) * (1.0 - 2.0 * phi - 3.0 * (m - m_ref * u));
        let want_sigma = s_h * (1.0 - phi) + (s_c - s) * phi - (gamma_h * (1.0 - phi) + gamma_c * phi) * sigma;
        let want_p = -gamma_p * p + alpha_h * (1.0 - phi) + alpha_c * phi;

        let mut out = [0.0; 3];
        model.reaction(t, &[phi, sigma, p], &mut out);
        let scale = 1.0 + want_phi.abs() + want_sigma.abs() + want_p.abs();
        prop_assert!((out[0] - want_phi).abs() <= 1e-13 * scale);
        prop_assert!((out[1] - want_sigma).abs() <= 1e-13 * scale);
        prop_assert!((out[2] - want_p).abs() <= 1e-13 * scale);
    }

    #[test]
    fn table_text_round_trips(knots in prop::collection::btree_map(-1000i32..1000, -5.0f64..5.0, 1..8)) {
        let pts: Vec<(f64, f64)> = knots.into_iter().map(|(x, y)| (x as f64 / 7.0, y)).collect();
        let t = PiecewiseLinear::new(&pts).unwrap();
        prop_assert_eq!(t.to_string().parse::<PiecewiseLinear>().unwrap(), t.clone());
        for &(x, y) in &pts {
            prop_assert_eq!(t.eval(x), y);
        }
    }

    #[test]
    fn schedule_text_round_trips(starts in prop::collection::btree_set(0u32..100, 0..6), v in -3.0f64..3.0) {
        let windows: Vec<(f64, f64, f64)> =
            starts.iter().map(|&s| (s as f64, s as f64 + 0.5, v + s as f64)).collect();
        let s = Schedule::new(windows.clone()).unwrap();
        prop_assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s.clone());
        for (t0, t1, val) in windows {
            prop_assert_eq!(s.eval(t0), val);
            prop_assert_eq!(s.eval(t1), 0.0);
        }
    }
}

#[test]
fn prostate_field_reactions_agree_with_pointwise_ones() {
    let seed = TumorSeed::default();
    let [phi, sigma, p] = prostate_initials(33, &seed).unwrap();
    let model = ProstateModel::new(ProstateParams::default(), (0.0, 3.0)).unwrap();
    let (rp, rs, rq) = prostate_reactions(&phi, &sigma, &p, 1.0, &model).unwrap();
    let mut out = [0.0; 3];
    for k in 0..phi.values().len() {
        model.reaction(1.0, &[phi.values()[k], sigma.values()[k], p.values()[k]], &mut out);
        assert_eq!([rp.values()[k], rs.values()[k], rq.values()[k]], out);
    }
    // zero state
    let z = Field::zeros(*phi.grid());
    let (a, b, c) = prostate_reactions(&z, &z, &z, 0.0, &model).unwrap();
    let q = model.params();
    assert!(a.values().iter().all(|&v| v == 0.0));
    assert!(b.values().iter().all(|&v| v == q.s_h));
    assert!(c.values().iter().all(|&v| v == q.alpha_h));
}

#[test]
fn far_field_initial_values() {
    let seed = TumorSeed::default();
    let [phi, sigma, p] = prostate_initials(64, &seed).unwrap();
    // a node on the Neumann nutrient grid far from the tumor
    assert!(phi.get(3, 3) < 1e-12);
    assert!((sigma.get(3, 3) - 1.0).abs() < 1e-12);
    assert!((p.get(3, 3) - 0.0625).abs() < 1e-12);
}

#[test]
fn user_models_register_or_fail_loudly() {
    // logistic growth on [0, 1] with B = 1
    let f = Arc::new(|u: f64| u * (1.0 - u));
    assert!(NonlinearModel::new("logistic", f.clone(), 1.0, Bounds::unit(), 0.1).is_ok());
    assert!(NonlinearModel::new("logistic", f, 0.5, Bounds::unit(), 0.1).is_err());
}
