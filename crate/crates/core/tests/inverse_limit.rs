use std::cmp::Ordering;

use uilkit::arith::{critical_orbit, realize_prefix, tent, Scalar};
use uilkit::inverse_limit::*;
use uilkit::kneading::{cutting_data, fixture41_bits, parse_word, KneadingPrefix};
use uilkit::presets::slope_preset;
use uilkit::{SlopeParam, Status};

fn nu(text: &str) -> KneadingPrefix {
    KneadingPrefix::parse(text).unwrap()
}

/// Image of the core `[c_2, c_1]` under the branches named by `w`, by direct interval iteration.
fn brute_cylinder(s: &Scalar, w: &[u8]) -> Option<(Scalar, Scalar)> {
    let c = Scalar::half();
    let c1 = tent(s, &c).unwrap();
    let mut lo = tent(s, &c1).unwrap();
    let mut hi = c1;
    for &b in w {
        if b == 0 {
            if lo.cmp_certified(&c) == Some(Ordering::Greater) {
                return None;
            }
            if hi.cmp_certified(&c) == Some(Ordering::Greater) {
                hi = c.clone();
            }
        } else {
            if hi.cmp_certified(&c) == Some(Ordering::Less) {
                return None;
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
    Some((lo, hi))
}

#[test]
fn tau_data_small_words() {
    let v = nu("1.0.0.0.101");
    let td = tau_data(&parse_word("100").unwrap(), &v).unwrap();
    assert_eq!(td.nl, vec![4]);
    assert_eq!(td.nr, vec![1]);
    assert!(td.saturated_l && !td.saturated_r);
    let zeros = tau_data(&[0; 6], &v).unwrap();
    assert_eq!(zeros.nr, vec![1]);
    assert!(zeros.nl.is_empty());
}

#[test]
fn arc_matches_tower_level() {
    let v = nu("1.0.0.0.101");
    let cd = cutting_data(&v).unwrap();
    let orbit = critical_orbit(&SlopeParam::rational(realize_prefix(&v.bits).unwrap()).unwrap(), 12).unwrap();
    let td = tau_data(&parse_word("0100").unwrap(), &v).unwrap();
    assert_eq!((td.tau_l_lb, td.tau_r_lb), (4, 1));
    assert!(!td.saturated());
    let arc = basic_arc_interval(&td, &orbit, Some(&cd.beta)).unwrap();
    assert!(arc.exact);
    assert_eq!(arc.tower_level, Some(4));
    assert_eq!(arc.lower.as_ref(), Some(orbit.c(4)));
    assert_eq!(&arc.upper, orbit.c(1));
}

#[test]
fn cylinder_formula_against_brute_force() {
    for prefix in ["1.0.0.0.101", "1.0.11", "1.0.0.11.0.11", "1.0.0.0.0.1"] {
        let v = nu(prefix);
        let r = realize_prefix(&v.bits).unwrap();
        let slope = SlopeParam::rational(r.clone()).unwrap();
        let orbit = critical_orbit(&slope, 16).unwrap();
        let full = KneadingPrefix::literal(orbit.symbols().unwrap()).unwrap();
        let s = Scalar::Exact(r);
        for len in 0..=7usize {
            for code in 0..(1u32 << len) {
                let w: Vec<u8> = (0..len).map(|i| ((code >> i) & 1) as u8).collect();
                let got = cylinder_projection(&w, &full, &orbit).unwrap();
                let want = brute_cylinder(&s, &w);
                assert_eq!(got, want, "ν={} w={:?}", prefix, w);
            }
        }
    }
}

#[test]
fn itinerary_parsing() {
    let it = TwoSidedItinerary::parse("(1)^∞|1110.(1)^∞").unwrap();
    assert_eq!(it.backward.symbols, vec![1, 1, 1, 0]);
    assert_eq!(it.backward.period, Some(vec![1]));
    assert_eq!(it.forward_symbols(3), vec![1, 1, 1]);
    let e = TwoSidedItinerary::parse("…111.111…").unwrap();
    assert_eq!(e.backward.period, Some(vec![1]));
    assert_eq!(e.backward.symbols, vec![1, 1]);
    assert_eq!(e.forward_symbols(4), vec![1, 1, 1, 1]);
    let f = TwoSidedItinerary::parse("...10|0.0(01)*").unwrap();
    assert_eq!(f.backward.at(2), Some(0));
    assert_eq!(f.backward.at(3), Some(1));
    assert_eq!(f.forward_symbols(5), vec![0, 0, 1, 0, 1]);
    assert_eq!(TwoSidedItinerary::parse(&f.to_string()).unwrap().to_string(), f.to_string());
    assert!(TwoSidedItinerary::parse("1101").is_err());
}

#[test]
fn fixed_point_is_not_an_endpoint() {
    let it = TwoSidedItinerary::parse("(1)^∞|.(1)^∞").unwrap();
    for v in [nu("1.0.0.0.101.0.101.10001011"), KneadingPrefix::literal(fixture41_bits(200)).unwrap()] {
        let e = endpoint_verdict(&it, &v, 64).unwrap();
        assert_eq!(e.status, Status::Refuted, "{:?}", e);
    }
}

#[test]
fn fixture_classification() {
    let slope = slope_preset("fixture41").unwrap();
    let folding = ["(1)^∞|.(1)^∞", "(1)^∞|1110.(1)^∞", "(1)^∞|.0(1)^∞"];
    let other = ["(10)^∞|.(10)^∞", "(1)^∞|00.(1)^∞"];
    for text in folding.iter().chain(&other) {
        let it = TwoSidedItinerary::parse(text).unwrap();
        let pc = classification_report(&it, &slope, 64, 2f64.powi(-DEFAULT_EPS_BITS), 2048).unwrap();
        assert_eq!(pc.endpoint.status, Status::Refuted, "{} {:?}", text, pc.endpoint);
        if folding.contains(text) {
            assert!(pc.folding.is_evidence() && pc.folding.leans_true(), "{} {:?}", text, pc.folding);
            assert_eq!(pc.subclass_flags, vec![SubclassFlag::NonEndFolding]);
        } else {
            assert!(pc.folding.is_refuted(), "{} {:?}", text, pc.folding);
        }
    }
}

#[test]
fn endpoint_words() {
    let fib = KneadingPrefix::literal(uilkit::presets::nu_of(uilkit::kneading::fibonacci_q, 400)).unwrap();
    let words = endpoint_itinerary_gen(&fib, 8, 30).unwrap();
    assert!(words.len() >= 2);
    for (i, a) in words.iter().enumerate() {
        let td = tau_data(&a.symbols, &fib).unwrap();
        assert!(td.saturated());
        for b in &words[i + 1..] {
            assert_ne!(a.expand(30), b.expand(30));
        }
        let it = TwoSidedItinerary { backward: a.clone(), forward: vec![], forward_period: None, x0: None };
        assert!(endpoint_verdict(&it, &fib, 30).unwrap().leans_true());
    }
    let fixture = KneadingPrefix::literal(fixture41_bits(400)).unwrap();
    assert!(matches!(endpoint_itinerary_gen(&fixture, 8, 30), Err(uilkit::error::Error::NoRecurrenceWitness(_))));
    let ex35 = KneadingPrefix::literal(uilkit::presets::nu_of(uilkit::kneading::example35_q, 600)).unwrap();
    for w in endpoint_itinerary_gen(&ex35, 4, 40).unwrap() {
        assert!(tau_data(&w.symbols, &ex35).unwrap().saturated_l);
    }
}

#[test]
fn fibonacci_generator_point() {
    let slope = slope_preset("fibonacci").unwrap();
    let fib = KneadingPrefix::literal(uilkit::presets::nu_of(uilkit::kneading::fibonacci_q, 400)).unwrap();
    let w = endpoint_itinerary_gen(&fib, 1, 30).unwrap().remove(0);
    let it = TwoSidedItinerary { backward: w, forward: vec![], forward_period: None, x0: None };
    let pc = classification_report(&it, &slope, 30, 2f64.powi(-DEFAULT_EPS_BITS), 2048).unwrap();
    assert!(pc.folding.leans_true(), "{:?}", pc.folding);
    assert!(pc.endpoint.leans_true(), "{:?}", pc.endpoint);
    assert!(matches!(pc.basic_arc, BasicArcKind::DegenerateEvidence { .. }), "{:?}", pc.basic_arc);
}

#[test]
fn pull_back_basics() {
    let s = Scalar::exact(15, 8);
    let j = (Scalar::exact(1, 10), Scalar::exact(1, 5));
    let ch = pull_back(&s, j, &[0], false).unwrap();
    assert!(ch.monotone && recheck_monotone(&ch));
    let c1 = Scalar::exact(15, 16);
    let eps = Scalar::exact(1, 64);
    let ch = pull_back(&s, (c1.sub(&eps), c1.add(&eps).clamp_unit()), &[1], false).unwrap();
    assert!(!ch.monotone);
    assert_eq!(ch.first_critical, Some(1));
}

#[test]
fn persistence_dichotomy() {
    let grid: Vec<i32> = (6..=12).collect();
    let fib = reluctance_search(&slope_preset("fibonacci").unwrap(), &grid, 64, 1024).unwrap();
    assert!(matches!(fib.class, RecurrenceClass::PersistentEvidence { .. }), "{:?}", fib.per_eps);
    assert!(fib.q_limit.leans_true());
    let fx = reluctance_search(&slope_preset("fixture41").unwrap(), &grid, 64, 1024).unwrap();
    assert!(matches!(fx.class, RecurrenceClass::ReluctantEvidence { length, .. } if length >= 64));
}
