use num_rational::BigRational;
use uilkit::arith::{rat, Scalar};
use uilkit::hofbauer::*;
use uilkit::presets::slope_preset;
use uilkit::SlopeParam;

#[test]
fn tower_recursion_agrees() {
    for s in [SlopeParam::ratio(15, 8), SlopeParam::ratio(3, 2), slope_preset("fibonacci").unwrap()] {
        let g = Geometry::build(&s, 4, 120).unwrap();
        tower_crosscheck(&g, 120).unwrap();
    }
}

#[test]
fn zzz_at_rational_slopes() {
    for s in [SlopeParam::ratio(15, 8), SlopeParam::ratio(5, 3), SlopeParam::ratio(19, 10)] {
        let g = Geometry::build(&s, 20, 16).unwrap();
        for k in 0..19 {
            let v = verify_zzz_in(&g, k).unwrap();
            assert!(v.is_certified(), "{} k={} {:?}", s.label(), k, v);
            let f = f_orbit_identity_in(&g, k).unwrap();
            assert!(f.is_certified(), "{} k={} {:?}", s.label(), k, f);
        }
    }
}

#[test]
fn zzz_at_fibonacci() {
    let s = slope_preset("fibonacci").unwrap();
    for k in 0..10 {
        let v = verify_zzz(&s, k).unwrap();
        assert!(v.is_certified(), "k={} {:?}", k, v);
    }
}

#[test]
fn kappa_three_moves_only_the_left_point() {
    // s = 3/2: true z_0 = 1/3 lies left of c_2 = 3/8, while ẑ_0 = 2/3 is inside the core.
    let s = SlopeParam::ratio(3, 2);
    let p = closest_precriticals(&s, 3).unwrap();
    assert_eq!(p[1].k, 0);
    assert_eq!(p[1].z, Scalar::Exact(rat(3, 8)));
    assert_eq!(p[1].zhat, Scalar::Exact(rat(2, 3)));
    // c_{S_2} = c_4 = 21/32 sits in (ẑ_1, ẑ_0) and Q(3) = 1.
    let g = Geometry::build(&s, 16, 16).unwrap();
    assert_eq!(g.c(4), &Scalar::Exact(rat(21, 32)));
    for k in 0..=15 {
        assert!(verify_zzz_in(&g, k).unwrap().is_certified(), "k={}", k);
    }
}

#[test]
fn precriticals_certify() {
    let p = closest_precriticals(&SlopeParam::ratio(15, 8), 12).unwrap();
    assert_eq!(p.len(), 14);
    let p = closest_precriticals(&slope_preset("fibonacci").unwrap(), 8).unwrap();
    assert_eq!(p.len(), 10);
}

#[test]
fn long_branched_separates() {
    let th = BigRational::new(1.into(), 1024.into());
    let f = long_branched_evidence(&slope_preset("fibonacci").unwrap(), 256, &th).unwrap();
    eprintln!("{:?}", f.window_minima);
    assert!(f.verdict.leans_false(), "{:?}", f.verdict);
    let x = long_branched_evidence(&slope_preset("fixture41").unwrap(), 256, &th).unwrap();
    eprintln!("{:?}", x.window_minima);
    assert!(x.verdict.leans_true(), "{:?}", x.verdict);
}

#[test]
fn gaps_report() {
    let s = slope_preset("fibonacci").unwrap();
    let r = cutting_value_gaps(&s, 14, &rat(1, 10)).unwrap();
    eprintln!("{} {}", r.all.max_gap_lo, r.all.max_gap_hi);
    let _ = Scalar::half();
}
