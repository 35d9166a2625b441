//! Subcontinuum chains driven by kneading-map conditions: chain search,
//! construction of the critical projections, spiral / sin(1/x) classification
//! and the renormalisation-cascade rule for nasty endpoints.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arith::{f64_down, f64_up, inv_left, inv_right, sign_rel_c, Scalar, SignRelC, SlopeParam};
use crate::error::{Error, Result};
use crate::hofbauer::{escalate, Geometry};
use crate::kneading::{renorm_scan, KneadingMap};
use crate::verdict::Verdict;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `Q(k_i) = k_{i-1}` and `Q(Q(k_i - 1) + 1) < k_{i-1} - 1`.
    Eq3,
    /// `Q(Q(k_i - 1) + 1) < k_{i-1} - 1 < Q(k_i)`.
    Eq4,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QChain {
    pub variant: Variant,
    pub k: Vec<usize>,
    /// Produced by the recursion `k_i = min{k : Q(k) > k_{i-1} - 1}`.
    pub greedy: bool,
}

/// Whether `prev → next` is a valid step; `None` if some needed `Q` value is missing.
pub fn chain_step(q: &dyn KneadingMap, prev: usize, next: usize, variant: Variant) -> Option<bool> {
    if next <= prev || next < 2 {
        return Some(false);
    }
    let qn = q.q(next)?;
    let inner = q.q(q.q(next - 1)? + 1)?;
    let first = inner + 1 < prev;
    Some(match variant {
        Variant::Eq3 => qn == prev && first,
        Variant::Eq4 => first && qn >= prev,
    })
}

/// Re-check a chain against its variant's inequalities, written out directly.
/// Returns the first failing level.
pub fn check_chain(q: &dyn KneadingMap, k: &[usize], variant: Variant) -> std::result::Result<(), usize> {
    for i in 1..k.len() {
        let (a, b) = (k[i - 1] as i64, k[i] as i64);
        let get = |m: i64| -> Option<i64> { q.q(m as usize).map(|v| v as i64) };
        let ok = (|| {
            if b <= a {
                return Some(false);
            }
            let lhs = get(get(b - 1)? + 1)?;
            let qb = get(b)?;
            Some(match variant {
                Variant::Eq3 => qb == a && lhs < a - 1,
                Variant::Eq4 => lhs < a - 1 && a - 1 < qb,
            })
        })();
        if ok != Some(true) {
            return Err(i);
        }
    }
    Ok(())
}

/// `k_i = min{k : Q(k) > k_{i-1} - 1}` from `k0`, stopped at the horizon or
/// at the first step that fails the relaxed condition.
pub fn greedy_chain(q: &dyn KneadingMap, k0: usize, horizon: usize) -> Vec<usize> {
    let mut out = vec![k0];
    loop {
        let prev = *out.last().unwrap();
        let next = (prev + 1..=horizon).find(|&k| q.q(k).is_some_and(|v| v + 1 > prev));
        match next {
            Some(n) if chain_step(q, prev, n, Variant::Eq4) == Some(true) => out.push(n),
            _ => return out,
        }
    }
}

pub const MAX_CHAINS: usize = 32;

/// Maximal chains within the horizon, rooted at indices with no valid
/// predecessor, plus (for `Eq4`) the greedy chain from the smallest start.
pub fn find_qcond_chains(q: &dyn KneadingMap, horizon: usize, variant: Variant) -> Vec<QChain> {
    let ok = |a: usize, b: usize| chain_step(q, a, b, variant) == Some(true);
    let succ: Vec<Vec<usize>> =
        (0..=horizon).map(|a| (a + 1..=horizon).filter(|&b| a >= 1 && ok(a, b)).collect()).collect();
    let mut has_pred = vec![false; horizon + 1];
    for a in 1..=horizon {
        for &b in &succ[a] {
            has_pred[b] = true;
        }
    }
    let mut out = Vec::new();
    if variant == Variant::Eq4 {
        if let Some(k0) = (1..=horizon).find(|&a| !succ[a].is_empty()) {
            let g = greedy_chain(q, k0, horizon);
            if g.len() >= 2 {
                out.push(QChain { variant, k: g, greedy: true });
            }
        }
    }
    for root in 1..=horizon {
        if has_pred[root] || succ[root].is_empty() {
            continue;
        }
        let mut stack = vec![vec![root]];
        while let Some(path) = stack.pop() {
            if out.len() >= MAX_CHAINS {
                return out;
            }
            let last = *path.last().unwrap();
            if succ[last].is_empty() {
                if !out.iter().any(|c: &QChain| c.k == path) {
                    out.push(QChain { variant, k: path, greedy: false });
                }
                continue;
            }
            for &n in succ[last].iter().rev() {
                let mut p = path.clone();
                p.push(n);
                stack.push(p);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainLevel {
    pub k: usize,
    /// Critical projection `n_i`, with `n_0 = 0`.
    pub n: usize,
    #[serde(skip)]
    pub a: Option<Scalar>,
    pub a_enclosure: (f64, f64),
    pub side: Side,
    /// `T^{n_i - n_{i-1}}(a_i)` meets `a_{i-1}` (always true at level 0).
    pub image_ok: bool,
    /// `L_{n_i} = [c, c_{S_{k_{i+1}-1}}]` is free of precritical points of order `≤ S_{k_i - 1}`.
    pub l_clear: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalProjectionChain {
    pub variant: Variant,
    pub k_indices: Vec<usize>,
    pub n_indices: Vec<usize>,
    pub levels: Vec<ChainLevel>,
    /// `D_{S_{k_i}}` endpoints as `(lo, hi)`.
    pub d_levels: Vec<(f64, f64)>,
}

fn enclosure(x: &Scalar) -> (f64, f64) {
    (f64_down(&x.lo()), f64_up(&x.hi()))
}

/// `lo < x < hi` with certified comparisons; `None` if undecided.
fn strictly_between(x: &Scalar, a: &Scalar, b: &Scalar) -> Option<bool> {
    let (lo, hi) = match a.cmp_certified(b)? {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let left = x.cmp_certified(lo)?;
    let right = x.cmp_certified(hi)?;
    Some(left == Ordering::Greater && right == Ordering::Less)
}

/// Side of `c` on which `c_{S_{Q(k_next - 1)}}` lies: the next level's image.
fn image_side(g: &Geometry, k_next: usize) -> Result<Side> {
    let qk = g.cd.q_at(k_next - 1);
    let idx = g.cd.s[qk];
    match sign_rel_c(g.c(idx)) {
        SignRelC::Below => Ok(Side::Left),
        SignRelC::Above => Ok(Side::Right),
        SignRelC::AtC => Err(Error::Inconsistent(format!("c_{} = c", idx))),
        SignRelC::Unresolved => Err(Error::unresolved("side of cutting value", idx)),
    }
}

fn place(x: Scalar, side: Side) -> Scalar {
    match side {
        Side::Left => x,
        Side::Right => x.one_minus(),
    }
}

fn build_at(g: &Geometry, k_seq: &[usize], variant: Variant) -> Result<CriticalProjectionChain> {
    let c = Scalar::half();
    let mut levels: Vec<ChainLevel> = Vec::new();
    let mut n_indices = vec![0usize];
    let mut prev: Option<Scalar> = None;
    for (i, &ki) in k_seq.iter().enumerate() {
        if ki < 1 {
            return Err(Error::ConditionViolated(i));
        }
        let k = (ki - 1) as i64;
        let side = match k_seq.get(i + 1) {
            Some(&kn) => image_side(g, kn)?,
            None => Side::Left,
        };
        let (lo, hi) = (g.z(k - 1), g.z(k));
        let (a, image_ok) = match &prev {
            None => (lo.add(&hi).scale_pow2(-1), true),
            Some(target) => {
                let sk = g.cd.s[k as usize];
                let img_end = g.c(g.cd.s[g.cd.q_at(k as usize)]).clone();
                match strictly_between(target, &img_end, &c) {
                    Some(true) => {}
                    Some(false) => return Err(Error::ConditionViolated(i)),
                    None => return Err(Error::unresolved("target inside the level image", i)),
                }
                // Branch word of T^{S_k} on (z_{k-1}, z_k), read off the midpoint.
                let mid = lo.add(&hi).scale_pow2(-1);
                let mut branch = Vec::with_capacity(sk);
                let mut y = mid;
                for j in 0..sk {
                    match sign_rel_c(&y) {
                        SignRelC::Below => branch.push(0u8),
                        SignRelC::Above => branch.push(1u8),
                        _ => return Err(Error::unresolved("branch of the level map", j)),
                    }
                    y = g.iterate(&y, 1)?;
                }
                let mut a = target.clone();
                for &b in branch.iter().rev() {
                    a = if b == 0 { inv_left(&g.s, &a)? } else { inv_right(&g.s, &a)? };
                }
                match strictly_between(&a, &lo, &hi) {
                    Some(true) => {}
                    Some(false) => {
                        return Err(Error::ConstructionStuck {
                            stage: format!("level {}", i),
                            dump: format!("a = {} outside (z_{}, z_{})", a, k - 1, k),
                        })
                    }
                    None => return Err(Error::unresolved("a_i inside its cell", i)),
                }
                let back = g.iterate(&a, sk)?;
                let image_ok = back.lo() <= target.hi() && target.lo() <= back.hi();
                (a, image_ok)
            }
        };
        let a = place(a, side);
        if i > 0 {
            n_indices.push(n_indices[i - 1] + g.cd.s[k as usize]);
        }
        let l_clear = match k_seq.get(i + 1) {
            Some(&kn) => {
                let end = g.c(g.cd.s[kn - 1]);
                strictly_between(end, &g.z(k), &g.zhat(k))
            }
            None => None,
        };
        levels.push(ChainLevel {
            k: ki,
            n: n_indices[i],
            a_enclosure: enclosure(&a),
            a: Some(a.clone()),
            side,
            image_ok,
            l_clear,
        });
        prev = Some(a);
    }
    let d_levels = k_seq
        .iter()
        .map(|&k| {
            let sk = g.cd.s[k];
            let other = g.c(g.cd.beta[sk]);
            let (x, y) = (enclosure(g.c(sk)), enclosure(other));
            (x.0.min(y.0), x.1.max(y.1))
        })
        .collect();
    Ok(CriticalProjectionChain { variant, k_indices: k_seq.to_vec(), n_indices, levels, d_levels })
}

/// Construct `a_i ∈ Υ°_{k_i - 1}` with `T^{S_{k_i - 1}}(a_i) = a_{i-1}` level by level.
pub fn build_chain(slope: &SlopeParam, k_seq: &[usize], variant: Variant) -> Result<CriticalProjectionChain> {
    if k_seq.is_empty() {
        return Err(Error::Config("empty chain".into()));
    }
    let kmax = *k_seq.iter().max().unwrap();
    escalate(slope, 256, |bits| {
        let g = if slope.is_exact() {
            Geometry::build(slope, kmax + 1, 16)?
        } else {
            Geometry::at_bits(slope, kmax + 1, 16, bits)?
        };
        let q = &g.cd.q;
        if let Err(level) = check_chain(q, k_seq, variant) {
            return Err(Error::ConditionViolated(level));
        }
        build_at(&g, k_seq, variant)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ChainClass {
    DirectSpiral { q_next: Vec<usize> },
    BasicSinCurve { bound: usize, at: Vec<usize>, bar: Option<(f64, f64)> },
    Undetermined { horizon: usize },
}

/// Spiral when `Q(k_i + 1)` grows (and `|D_{S_{k_i}}|` shrinks, if given);
/// sin(1/x) when `Q(k_i + 1)` keeps returning to a fixed bound.
pub fn classify_chain(
    k_seq: &[usize],
    q: &dyn KneadingMap,
    horizon: usize,
    d_levels: Option<&[(f64, f64)]>,
) -> ChainClass {
    let vals: Vec<(usize, usize)> =
        k_seq.iter().enumerate().skip(1).filter_map(|(i, &k)| q.q(k + 1).map(|v| (i, v))).collect();
    if vals.len() < 3 {
        return ChainClass::Undetermined { horizon };
    }
    let half = vals.len() / 2;
    let (early, late) = vals.split_at(half);
    let early_max = early.iter().map(|p| p.1).max().unwrap();
    let late_min = late.iter().map(|p| p.1).min().unwrap();
    let nondecreasing = vals.windows(2).all(|w| w[0].1 <= w[1].1);
    let shrinking = match d_levels {
        None => true,
        Some(d) if d.len() >= 2 => {
            let w = |p: &(f64, f64)| p.1 - p.0;
            w(d.last().unwrap()) < 0.5 * w(&d[0])
        }
        Some(_) => false,
    };
    if late_min > early_max && nondecreasing && shrinking {
        return ChainClass::DirectSpiral { q_next: vals.iter().map(|p| p.1).collect() };
    }
    let bound = vals.iter().map(|p| p.1).min().unwrap();
    let at: Vec<usize> = vals.iter().filter(|p| p.1 <= bound).map(|p| p.0).collect();
    if at.iter().filter(|&&i| i > vals[half - 1].0).count() >= 2 {
        let bar = d_levels.and_then(|d| d.last().copied());
        return ChainClass::BasicSinCurve { bound, at, bar };
    }
    ChainClass::Undetermined { horizon }
}

pub const CASCADE_MIN: usize = 3;

/// Evidence for `F = E_N` from a nested cascade of renormalisation windows.
pub fn nasty_cascade_rule(q: &dyn KneadingMap, horizon: usize, cascade_min: usize) -> Verdict {
    let rule = "renormalisation-cascade";
    let scan = renorm_scan(q, horizon);
    // Windows near the horizon pass vacuously; only the first half counts.
    let tested: Vec<usize> = scan.cascade.iter().copied().filter(|&k| 2 * k <= horizon).collect();
    let mut s = vec![1usize];
    for k in 1..=horizon {
        match q.q(k) {
            Some(v) if v < s.len() => s.push(s[k - 1] + s[v]),
            _ => break,
        }
    }
    let periods: Vec<usize> = tested.iter().filter_map(|&k| s.get(k - 1).copied()).collect();
    let w = json!({"levels": tested, "periods": periods, "cascade_min": cascade_min, "horizon": horizon});
    if tested.len() >= cascade_min {
        Verdict::evidence(rule, horizon as u64, w)
    } else if tested.is_empty() {
        Verdict::refuted(rule, w).with_depth(horizon as u64)
    } else {
        Verdict::undetermined(rule, "fewer renormalisation levels than the cascade minimum", w)
    }
}
