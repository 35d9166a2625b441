use std::cmp::Ordering;
use std::collections::BTreeSet;

use uilkit::arith::{critical_orbit, realize_prefix, tent, Scalar};
use uilkit::kneading::{admissible_disjoint, admissible_q_nu, cutting_times, parse_word, word_string, KneadingPrefix};
use uilkit::seqgen::*;
use uilkit::{SlopeParam, Status};

/// Nonemptiness of `T_w([c_2, c_1])` by direct interval iteration.
fn brute_admissible(s: &Scalar, w: &[u8]) -> bool {
    let c = Scalar::half();
    let c1 = tent(s, &c).unwrap();
    let mut lo = tent(s, &c1).unwrap();
    let mut hi = c1;
    for &b in w {
        if b == 0 {
            if lo.cmp_certified(&c) == Some(Ordering::Greater) {
                return false;
            }
            if hi.cmp_certified(&c) == Some(Ordering::Greater) {
                hi = c.clone();
            }
        } else {
            if hi.cmp_certified(&c) == Some(Ordering::Less) {
                return false;
            }
            if lo.cmp_certified(&c) == Some(Ordering::Less) {
                lo = c.clone();
            }
        }
        let (a, z) = (tent(s, &lo).unwrap(), tent(s, &hi).unwrap());
        if a.cmp_certified(&z) == Some(Ordering::Greater) {
            lo = z;
            hi = a;
        } else {
            lo = a;
            hi = z;
        }
    }
    true
}

fn words(set: &BTreeSet<Vec<u8>>) -> Vec<String> {
    set.iter().map(|w| word_string(w)).collect()
}

#[test]
fn seed_ledger_and_missing_pair() {
    let l = WordLedger::seed(DEFAULT_MAX_LEN);
    assert_eq!(l.k, SEED_K);
    let mut want = vec!["0", "1", "00", "01", "100", "101"];
    want.sort();
    assert_eq!(words(&l.w), want);
    let (v, vp) = shortest_missing_pair(&l).unwrap();
    assert_eq!((word_string(&v), word_string(&vp)), ("10".to_string(), "11".to_string()));
    assert!(l.is_sound().unwrap());
}

#[test]
fn degenerate_ledger_asks_for_length_two() {
    let l = WordLedger::new(KneadingPrefix::parse("1.0.0.0.101").unwrap(), 1).unwrap();
    assert_eq!(words(&l.w), vec!["0", "1"]);
    let mut two = l.clone();
    two.max_len = 2;
    two.w.clear();
    two.w.insert(vec![0]);
    two.w.insert(vec![1]);
    let (v, vp) = shortest_missing_pair(&two).unwrap();
    assert_eq!((word_string(&v), word_string(&vp)), ("00".to_string(), "01".to_string()));
}

#[test]
fn word_admissibility_matches_interval_iteration() {
    for prefix in ["1.0.0.0.101", "1.0.11", "1.0.0.11.0.11", "1.0.0.0.0.1"] {
        let r = realize_prefix(&KneadingPrefix::parse(prefix).unwrap().bits).unwrap();
        let orbit = critical_orbit(&SlopeParam::rational(r.clone()).unwrap(), 40).unwrap();
        let nu = KneadingPrefix::literal(orbit.symbols().unwrap()).unwrap();
        let s = Scalar::Exact(r);
        let mut decided = 0;
        for len in 1..=6usize {
            for code in 0..(1u32 << len) {
                let w: Vec<u8> = (0..len).map(|i| ((code >> i) & 1) as u8).collect();
                if let Some(a) = word_admissible(&w, &nu) {
                    assert_eq!(a, brute_admissible(&s, &w), "ν={} w={:?}", prefix, w);
                    decided += 1;
                }
            }
        }
        assert!(decided > 100, "{}", decided);
    }
}

#[test]
fn target_seven_is_the_seed() {
    let g = generate(7, true).unwrap();
    assert_eq!(g.nu.bits, SEED.to_vec());
    assert!(g.steps.is_empty());
    assert!(generate(6, true).is_err());
}

#[test]
fn first_extension_compatibility() {
    let golden = KneadingPrefix::parse(DISPLAYED_FIRST_EXTENSION).unwrap();
    let (next, plan) = extend_step(&WordLedger::seed(DEFAULT_MAX_LEN), true).unwrap();
    assert_eq!(next.nu.bits, golden.bits);
    assert!(plan.compat);
    assert_eq!(plan.new_q, vec![0, 2, 5]);
    let (v, vp) = shortest_missing_pair(&next).unwrap();
    assert!(v.len() >= 3 && vp.len() == v.len());
    let g = generate(25, true).unwrap();
    assert!(g.nu.bits.starts_with(&golden.bits));
    assert!(g.nu.len() >= 25);
}

#[test]
fn general_first_step_blocks() {
    let (next, plan) = extend_step(&WordLedger::seed(DEFAULT_MAX_LEN), false).unwrap();
    assert!(!plan.compat);
    assert_eq!((plan.v.as_str(), plan.v_prime.as_str()), ("11", "10"));
    assert_eq!((plan.w.as_str(), plan.u.as_str(), plan.u_prime.as_str()), ("1", "1", "0"));
    assert_eq!(plan.u_prime.matches('1').count() % 2, 0);
    assert_eq!(plan.n_prime, 2);
    let mut bits = SEED.to_vec();
    for b in [&plan.block_i, &plan.block_ii, &plan.block_iii, &plan.block_iv] {
        bits.extend(parse_word(b).unwrap());
    }
    assert_eq!(bits, next.nu.bits);
    // Block IV is everything before block III with its last symbol switched.
    let before_iii = SEED.len() + plan.block_i.len() + plan.block_ii.len();
    let iv = parse_word(&plan.block_iv).unwrap();
    assert_eq!(&iv[..before_iii - 1], &bits[..before_iii - 1]);
    assert_ne!(iv[before_iii - 1], bits[before_iii - 1]);
    assert!(next.ends.contains(&vec![1, 1]) && next.ends.contains(&vec![1, 0]));
}

/// Every clause of the certificate, recomputed here without the library's cutting data.
fn scan(nu: &[u8]) -> (bool, bool) {
    let s = cutting_times(nu);
    let mut ne1 = true;
    let mut le = true;
    for k in 1..s.len() {
        let q = s.iter().position(|&x| x == s[k] - s[k - 1]).expect("difference is a cutting time");
        if s[k] > SEED.len() {
            ne1 &= q != 1;
            le &= q + 2 <= k;
        }
    }
    (ne1, le)
}

#[test]
fn generated_prefixes_are_certified() {
    for (target, compat) in [(25, true), (200, true), (200, false), (500, true)] {
        let g = generate(target, compat).unwrap();
        assert!(g.nu.len() >= target);
        assert_eq!(cutting_times(&g.nu.bits).last(), Some(&g.nu.len()));
        assert_eq!(scan(&g.nu.bits), (true, true));
        assert_ne!(admissible_disjoint(&g.nu).status, Status::Refuted);
        assert_ne!(admissible_q_nu(&g.nu).status, Status::Refuted);
        let c = &g.certificate;
        assert!(c.q_ne_1 && c.q_le_k_minus_2 && c.checkers_accept && c.ledger_sound && c.u_cutting);
        assert!(c.coverage_len >= 2);
        assert!(g.ledger.is_sound().unwrap());
        for p in &g.steps {
            assert!(g.ledger.w.contains(&parse_word(&p.v).unwrap()));
        }
    }
}

#[test]
fn resume_matches_one_shot() {
    let half = generate(25, true).unwrap();
    let json = serde_json::to_string(&half.ledger).unwrap();
    let ledger: WordLedger = serde_json::from_str(&json).unwrap();
    let resumed = generate_from(ledger, 200, true).unwrap();
    assert_eq!(resumed.nu.bits, generate(200, true).unwrap().nu.bits);
}
