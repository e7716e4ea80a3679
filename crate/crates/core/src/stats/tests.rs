use proptest::prelude::*;

use super::*;

#[test]
fn welch_examples() {
    let w = welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((w.t - (-1.224_744_871_391_589)).abs() < 1e-12);
    assert!((w.df - 4.0).abs() < 1e-12);
    let same = welch_t(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap();
    assert_eq!((same.t, same.p), (0.0, 1.0));
    let flat = welch_t(&[3.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
    assert_eq!((flat.t, flat.p), (0.0, 1.0));
    assert!(welch_t(&[3.0, 3.0], &[4.0, 4.0]).is_err());
    assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn welch_p_matches_reference_library() {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let a = [2.1, 3.4, 1.9, 5.0, 4.4, 3.3];
    let b = [1.0, 0.4, 2.2, 1.7];
    let w = welch_t(&a, &b).unwrap();
    let want = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, w.df).unwrap().cdf(w.t.abs()));
    assert!((w.p - want).abs() < 1e-10);
}

#[test]
fn chi_square_examples() {
    let c = chi_square([[10, 10], [10, 10]]).unwrap();
    assert_eq!((c.chi2, c.cramers_v, c.label), (0.0, 0.0, EffectLabel::Trivial));
    assert_eq!(c.p, 1.0);
    let g = chi_square([[93, 422], [263, 252]]).unwrap();
    assert!((g.cramers_v - 0.34).abs() <= 0.02, "{}", g.cramers_v);
    assert_eq!(g.label, EffectLabel::Medium);
    assert_eq!(chi_square([[93, 263], [422, 252]]).unwrap().chi2, g.chi2);
    assert!(chi_square([[0, 0], [3, 4]]).is_err());
}

#[test]
fn chi_square_matches_hand_formula() {
    // N(ad − bc)² / ((a+b)(c+d)(a+c)(b+d)) for [[5, 15], [12, 8]].
    let want = 40.0 * (40.0f64 - 180.0).powi(2) / (20.0 * 20.0 * 17.0 * 23.0);
    assert!((chi_square([[5, 15], [12, 8]]).unwrap().chi2 - want).abs() < 1e-12);
}

#[test]
fn effect_labels() {
    assert_eq!(EffectLabel::from_v(0.05), EffectLabel::Trivial);
    assert_eq!(EffectLabel::from_v(0.24), EffectLabel::Small);
    assert_eq!(EffectLabel::from_v(0.34), EffectLabel::Medium);
    assert_eq!(EffectLabel::from_v(0.5), EffectLabel::Large);
}

#[test]
fn bh_examples() {
    let r = bh_fdr(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
    assert!(r.rejected.iter().all(|&x| x));
    assert!(r.q_values.iter().all(|&q| (q - 0.04).abs() < 1e-15));
    assert_eq!(bh_fdr(&[0.3], 0.05).unwrap().q_values, vec![0.3]);
    let ones = bh_fdr(&[1.0, 1.0, 1.0], 0.05).unwrap();
    assert!(ones.rejected.iter().all(|&x| !x) && ones.q_values.iter().all(|&q| q == 1.0));
    assert!(bh_fdr(&[0.5, 1.2], 0.05).is_err());
    assert!(bh_fdr(&[], 0.05).unwrap().q_values.is_empty());
}

#[test]
fn families_are_corrected_separately() {
    let mut rows = vec![
        StatTestResult::welch("t1", "x", &[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap(),
        StatTestResult::welch("t1", "y", &[1.0, 2.0, 3.0, 2.0], &[7.0, 8.0, 9.0, 8.0]).unwrap(),
        StatTestResult::proportions("t2", "z", 93, 515, 263, 515).unwrap(),
    ];
    let p_before: Vec<f64> = rows.iter().map(|r| r.p).collect();
    correct_families(&mut rows, 0.05).unwrap();
    assert_eq!(rows[2].q, p_before[2]);
    assert!(rows[2].significant);
    assert!(rows.iter().all(|r| r.q >= r.p));
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 2..12)
}

proptest! {
    #[test]
    fn welch_antisymmetry(a in sample(), b in sample()) {
        if let (Ok(x), Ok(y)) = (welch_t(&a, &b), welch_t(&b, &a)) {
            prop_assert_eq!(x.t, -y.t);
            prop_assert!((x.p - y.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x.p));
        }
    }

    #[test]
    fn welch_shift_and_scale_invariance(a in sample(), b in sample(), shift in -50.0..50.0f64, scale in 0.1..10.0f64) {
        if let Ok(base) = welch_t(&a, &b) {
            prop_assume!(base.t.abs() < 1e6);
            let shifted = welch_t(&a.iter().map(|x| x + shift).collect::<Vec<_>>(), &b.iter().map(|x| x + shift).collect::<Vec<_>>()).unwrap();
            let scaled = welch_t(&a.iter().map(|x| x * scale).collect::<Vec<_>>(), &b.iter().map(|x| x * scale).collect::<Vec<_>>()).unwrap();
            let tol = 1e-6 * (1.0 + base.t.abs());
            prop_assert!((shifted.t - base.t).abs() < tol);
            prop_assert!((scaled.t - base.t).abs() < tol);
        }
    }

    #[test]
    fn cramers_v_in_unit_interval(t in prop::array::uniform4(0u64..500)) {
        if let Ok(c) = chi_square([[t[0], t[1]], [t[2], t[3]]]) {
            prop_assert!((0.0..=1.0).contains(&c.cramers_v));
            prop_assert!((0.0..=1.0).contains(&c.p));
            let tr = chi_square([[t[0], t[2]], [t[1], t[3]]]).unwrap();
            prop_assert_eq!(tr.chi2, c.chi2);
        }
    }

    #[test]
    fn bh_bounds(ps in prop::collection::vec(0.0..=1.0f64, 1..30), q in 0.01..0.5f64) {
        let r = bh_fdr(&ps, q).unwrap();
        let m = ps.len() as f64;
        let mut order: Vec<usize> = (0..ps.len()).collect();
        order.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]).then(i.cmp(&j)));
        for w in order.windows(2) {
            prop_assert!(r.q_values[w[0]] <= r.q_values[w[1]]);
        }
        let n_bh = r.rejected.iter().filter(|&&x| x).count();
        let n_raw = ps.iter().filter(|&&p| p <= q).count();
        let n_bonf = ps.iter().filter(|&&p| p <= q / m).count();
        prop_assert!(n_bonf <= n_bh && n_bh <= n_raw);
        for i in 0..ps.len() {
            prop_assert!(r.q_values[i] >= ps[i] && r.q_values[i] <= 1.0);
            prop_assert_eq!(r.rejected[i], r.q_values[i] <= q);
        }
    }
}
