use std::sync::Arc;

use uilkit::error::Error;
use uilkit::kneading::{example35_q, nu_from_q, q_list, ClosedForm};
use uilkit::presets::slope_preset;
use uilkit::subcontinua::*;
use uilkit::{SlopeParam, Status};

fn alternating(k: usize) -> usize {
    if k.is_multiple_of(2) {
        k - 2
    } else {
        0
    }
}

#[test]
fn example35_chain() {
    let q = q_list(example35_q, 40);
    assert_eq!((q[2], q[5], q[7]), (1, 4, 5));
    let chains = find_qcond_chains(&q, 40, Variant::Eq3);
    let target: Vec<usize> = (3..=13).map(|i| 3 * i - 1).collect();
    assert!(chains.iter().any(|c| c.k.windows(target.len()).any(|w| w == target.as_slice())));
    for c in &chains {
        assert_eq!(check_chain(&q, &c.k, Variant::Eq3), Ok(()));
    }
    let main = chains.iter().find(|c| c.k.contains(&8)).unwrap();
    assert!(matches!(classify_chain(&main.k, &q, 40, None), ChainClass::DirectSpiral { .. }));
}

#[test]
fn greedy_recursion() {
    let q = q_list(|k| k.saturating_sub(2), 40);
    let chains = find_qcond_chains(&q, 40, Variant::Eq4);
    let g = chains.iter().find(|c| c.greedy).unwrap();
    assert!(g.k.len() >= 5);
    assert_eq!(check_chain(&q, &g.k, Variant::Eq4), Ok(()));
    for c in &chains {
        assert_eq!(check_chain(&q, &c.k, Variant::Eq4), Ok(()));
    }
}

#[test]
fn bounded_q_has_no_eq3_chains() {
    let q = q_list(|k| if k % 3 == 0 { 1 } else { 0 }, 60);
    assert!(find_qcond_chains(&q, 60, Variant::Eq3).iter().all(|c| c.k[0] <= 3));
}

#[test]
fn example35_construction() {
    let slope = slope_preset("ex35").unwrap();
    let chain = build_chain(&slope, &[2, 5, 8, 11], Variant::Eq3).unwrap();
    assert_eq!(chain.n_indices.len(), 4);
    for w in chain.n_indices.windows(2) {
        assert!(w[1] > w[0]);
    }
    for lvl in &chain.levels {
        assert!(lvl.image_ok);
        assert_ne!(lvl.l_clear, Some(false));
    }
    let q = q_list(example35_q, 40);
    assert!(matches!(classify_chain(&chain.k_indices, &q, 40, Some(&chain.d_levels)), ChainClass::DirectSpiral { .. }));
    let one = build_chain(&slope, &[5], Variant::Eq3).unwrap();
    assert_eq!(one.levels.len(), 1);
    assert!(matches!(build_chain(&slope, &[2, 5, 9], Variant::Eq3), Err(Error::ConditionViolated(2))));
}

#[test]
fn bounded_return_gives_sin_curve() {
    let q = q_list(alternating, 40);
    let chains = find_qcond_chains(&q, 40, Variant::Eq3);
    let k: Vec<usize> = chains[0].k.iter().copied().take(5).collect();
    let target = move |n: usize| nu_from_q(&ClosedForm::new(alternating, n + 2), n).unwrap().bits;
    let slope = SlopeParam::kneading("alternating", Arc::new(target));
    let chain = build_chain(&slope, &k, Variant::Eq3).unwrap();
    match classify_chain(&k, &q, 40, Some(&chain.d_levels)) {
        ChainClass::BasicSinCurve { bound, bar, .. } => {
            assert_eq!(bound, 0);
            let (lo, hi) = bar.unwrap();
            assert!(lo < 0.5 && 0.5 < hi);
        }
        other => panic!("{:?}", other),
    }
    assert!(matches!(classify_chain(&k[..2], &q, 40, None), ChainClass::Undetermined { .. }));
}

#[test]
fn cascade_rule() {
    let doubling = q_list(|k| k - 1, 30);
    let v = nasty_cascade_rule(&doubling, 30, CASCADE_MIN);
    assert_eq!(v.status, Status::Evidence);
    let periods: Vec<u64> = v.witness["periods"].as_array().unwrap().iter().map(|p| p.as_u64().unwrap()).collect();
    assert_eq!(&periods[..4], &[2, 4, 8, 16]);
    for q in [q_list(example35_q, 30), q_list(|k| k.saturating_sub(2), 30)] {
        assert!(nasty_cascade_rule(&q, 30, CASCADE_MIN).leans_false());
    }
}
