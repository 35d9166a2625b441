//! Itinerary-level classification of points of the inverse limit: the sets
//! N_L, N_R and τ, basic-arc projections, endpoint and folding verdicts,
//! endpoint itineraries, pull-backs and the reluctant/persistent recurrence search.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arith::{
    critical_orbit, f64_down, f64_up, inv_left, inv_right, sign_rel_c, tent, ArithError, Orbit, Scalar, SignRelC,
    SlopeParam,
};
use crate::error::{Error, Result};
use crate::kneading::{cutting_data, ones, parse_word, q_asymptotics, word_string, KneadingPrefix};
use crate::verdict::{Status, Verdict};

/// Left-infinite word `…s_{-2}s_{-1}`, stored as its known suffix plus an
/// optional block repeated to the left.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackwardWord {
    /// `s_{-N} … s_{-1}` in reading order.
    pub symbols: Vec<u8>,
    pub period: Option<Vec<u8>>,
}

impl BackwardWord {
    pub fn finite(symbols: Vec<u8>) -> BackwardWord {
        BackwardWord { symbols, period: None }
    }

    pub fn periodic(block: Vec<u8>, symbols: Vec<u8>) -> BackwardWord {
        assert!(!block.is_empty(), "empty periodic block");
        BackwardWord { symbols, period: Some(block) }
    }

    /// The last `depth` symbols (all known symbols for a finite word shorter than `depth`).
    pub fn expand(&self, depth: usize) -> Vec<u8> {
        let mut out = self.symbols.clone();
        if let Some(b) = &self.period {
            let mut pre = Vec::new();
            while pre.len() + out.len() < depth {
                pre.splice(0..0, b.iter().copied());
            }
            pre.extend(out);
            out = pre;
        }
        if out.len() > depth {
            out.drain(..out.len() - depth);
        }
        out
    }

    /// `s_{-n}` for `n ≥ 1`, if known.
    pub fn at(&self, n: usize) -> Option<u8> {
        let len = self.symbols.len();
        if n <= len {
            return Some(self.symbols[len - n]);
        }
        let b = self.period.as_ref()?;
        let k = (n - len - 1) % b.len();
        Some(b[b.len() - 1 - k])
    }
}

impl fmt::Display for BackwardWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(b) = &self.period {
            write!(f, "({})^∞|", word_string(b))?;
        }
        write!(f, "{}", word_string(&self.symbols))
    }
}

/// `…s_{-2}s_{-1}.s_0s_1…`
#[derive(Clone, Debug)]
pub struct TwoSidedItinerary {
    pub backward: BackwardWord,
    pub forward: Vec<u8>,
    /// Block repeated forever after `forward`.
    pub forward_period: Option<Vec<u8>>,
    pub x0: Option<Scalar>,
}

fn strip_periodic(t: &str) -> Option<&str> {
    let t = t.strip_prefix('(')?;
    let close = t.find(')')?;
    let rest = &t[close + 1..];
    if matches!(rest, "^∞" | "^inf" | "*" | "^oo") {
        Some(&t[..close])
    } else {
        None
    }
}

fn split_ellipsis_prefix(t: &str) -> Option<&str> {
    t.strip_prefix('…').or_else(|| t.strip_prefix("..."))
}

fn split_ellipsis_suffix(t: &str) -> Option<&str> {
    t.strip_suffix('…').or_else(|| t.strip_suffix("..."))
}

impl TwoSidedItinerary {
    /// Parse `"(B)^∞|w.f(F)^∞"`. Also accepted: `"…B|w.f"`, a leading
    /// ellipsis without `|` (the first symbol after it repeats to the left,
    /// as in `"…111.111…"`), and a trailing ellipsis on the forward word
    /// (its last symbol repeats).
    pub fn parse(text: &str) -> Result<TwoSidedItinerary> {
        let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = |m: &str| Error::Config(format!("itinerary '{}': {}", text, m));
        // The dot separating s_{-1} from s_0 is the last '.' not part of an ellipsis.
        let masked = t.replace("...", "…");
        let dot = masked.rfind('.').ok_or_else(|| bad("missing '.' before s_0"))?;
        let (left, right) = (&masked[..dot], &masked[dot + 1..]);
        let backward = if let Some(bar) = left.find('|') {
            let (tail, word) = (&left[..bar], &left[bar + 1..]);
            let block = match strip_periodic(tail) {
                Some(b) => b,
                None => split_ellipsis_prefix(tail).ok_or_else(|| bad("tail must be (B)^∞ or …B"))?,
            };
            let block = parse_word(block).map_err(|e| bad(&e.to_string()))?;
            if block.is_empty() {
                return Err(bad("empty periodic block"));
            }
            BackwardWord::periodic(block, parse_word(word).map_err(|e| bad(&e.to_string()))?)
        } else if let Some(rest) = split_ellipsis_prefix(left) {
            let w = parse_word(rest).map_err(|e| bad(&e.to_string()))?;
            if w.is_empty() {
                return Err(bad("ellipsis needs a symbol to repeat"));
            }
            BackwardWord::periodic(vec![w[0]], w[1..].to_vec())
        } else {
            BackwardWord::finite(parse_word(left).map_err(|e| bad(&e.to_string()))?)
        };
        let (forward, forward_period) = if let Some(p) = right.find('(') {
            let block = strip_periodic(&right[p..]).ok_or_else(|| bad("forward period must be (F)^∞"))?;
            let block = parse_word(block).map_err(|e| bad(&e.to_string()))?;
            if block.is_empty() {
                return Err(bad("empty forward period"));
            }
            (parse_word(&right[..p]).map_err(|e| bad(&e.to_string()))?, Some(block))
        } else if let Some(f) = split_ellipsis_suffix(right) {
            let f = parse_word(f).map_err(|e| bad(&e.to_string()))?;
            let last = *f.last().ok_or_else(|| bad("ellipsis needs a symbol to repeat"))?;
            (f[..f.len() - 1].to_vec(), Some(vec![last]))
        } else {
            (parse_word(right).map_err(|e| bad(&e.to_string()))?, None)
        };
        Ok(TwoSidedItinerary { backward, forward, forward_period, x0: None })
    }

    pub fn with_x0(mut self, x0: Scalar) -> TwoSidedItinerary {
        self.x0 = Some(x0);
        self
    }

    /// `s_0 … s_{len-1}` (shorter when the forward word is finite).
    pub fn forward_symbols(&self, len: usize) -> Vec<u8> {
        let mut out: Vec<u8> = self.forward.iter().copied().take(len).collect();
        if let Some(p) = &self.forward_period {
            let mut i = 0;
            while out.len() < len {
                out.push(p[i % p.len()]);
                i += 1;
            }
        }
        out
    }

    /// `σ`: shift the dot one place to the right. Requires a known `s_0`.
    pub fn shift(&self) -> Option<TwoSidedItinerary> {
        let s0 = *self.forward_symbols(1).first()?;
        let mut bw = self.backward.clone();
        bw.symbols.push(s0);
        let (forward, forward_period) = if self.forward.is_empty() {
            let p = self.forward_period.clone().unwrap();
            let mut rot = p[1..].to_vec();
            rot.push(p[0]);
            (Vec::new(), Some(rot))
        } else {
            (self.forward[1..].to_vec(), self.forward_period.clone())
        };
        Some(TwoSidedItinerary { backward: bw, forward, forward_period, x0: None })
    }
}

impl fmt::Display for TwoSidedItinerary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.backward, word_string(&self.forward))?;
        if let Some(p) = &self.forward_period {
            write!(f, "({})^∞", word_string(p))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauData {
    pub nl: Vec<usize>,
    pub nr: Vec<usize>,
    /// `max N_L` within the word (0 when empty).
    pub tau_l_lb: usize,
    pub tau_r_lb: usize,
    /// The full word matches a prefix of ν, so the corresponding τ may be larger.
    pub saturated_l: bool,
    pub saturated_r: bool,
    pub word_len: usize,
}

impl TauData {
    pub fn saturated(&self) -> bool {
        self.saturated_l || self.saturated_r
    }
}

/// Lengths `m ≤ |w|` such that the last `m` symbols of `w` equal `ν_1…ν_m` (m = 0 included).
fn suffix_prefix_matches(w: &[u8], nu: &[u8]) -> Vec<usize> {
    // Prefix function of ν # w.
    let mut s: Vec<u8> = nu[..w.len().min(nu.len())].to_vec();
    s.push(2);
    s.extend_from_slice(w);
    let mut pi = vec![0usize; s.len()];
    for i in 1..s.len() {
        let mut k = pi[i - 1];
        while k > 0 && s[i] != s[k] {
            k = pi[k - 1];
        }
        if s[i] == s[k] {
            k += 1;
        }
        pi[i] = k;
    }
    let mut out = vec![0];
    if w.is_empty() {
        return out;
    }
    let mut k = pi[s.len() - 1];
    while k > 0 {
        out.push(k);
        k = pi[k - 1];
    }
    out.sort_unstable();
    out
}

/// `N_L`, `N_R` of the backward word `w` (read as the last `|w|` symbols of the tail).
pub fn tau_data(w: &[u8], nu: &KneadingPrefix) -> Result<TauData> {
    if nu.len() < w.len() {
        return Err(Error::Domain(format!("need |ν| ≥ {} for a word of that length", w.len())));
    }
    let mut nl = Vec::new();
    let mut nr = Vec::new();
    let mut parity = vec![0usize; nu.len() + 1];
    for i in 1..=nu.len() {
        parity[i] = parity[i - 1] + nu.bits[i - 1] as usize;
    }
    for m in suffix_prefix_matches(w, &nu.bits) {
        let n = m + 1;
        if parity[m] % 2 == 1 {
            nl.push(n);
        } else {
            nr.push(n);
        }
    }
    let full = w.len() + 1;
    Ok(TauData {
        tau_l_lb: nl.last().copied().unwrap_or(0),
        tau_r_lb: nr.last().copied().unwrap_or(0),
        saturated_l: nl.last() == Some(&full) && !w.is_empty(),
        saturated_r: nr.last() == Some(&full) && !w.is_empty(),
        nl,
        nr,
        word_len: w.len(),
    })
}

/// Projection bounds of a basic arc from finite N_L / N_R data.
#[derive(Clone, Debug)]
pub struct ArcProjection {
    /// `sup{c_n : n ∈ N_L}`; `None` when `N_L` is empty.
    pub lower: Option<Scalar>,
    pub lower_index: Option<usize>,
    /// `inf{c_n : n ∈ N_R}`.
    pub upper: Scalar,
    pub upper_index: usize,
    /// Both τ finite and unsaturated: the projection is exactly `[c_{τ_L}, c_{τ_R}]`.
    pub exact: bool,
    /// `D_n` with `n = max(τ_L, τ_R)` coincides with the projection (checked when `exact`).
    pub tower_level: Option<usize>,
}

impl ArcProjection {
    pub fn width(&self) -> Option<Scalar> {
        self.lower.as_ref().map(|l| self.upper.sub(l))
    }
}

fn extreme(orbit: &Orbit, idx: &[usize], want: Ordering) -> Result<Option<(Scalar, usize)>> {
    let mut best: Option<(Scalar, usize)> = None;
    for &n in idx {
        if n > orbit.len() {
            return Err(Error::Domain(format!("orbit too short for c_{}", n)));
        }
        let v = orbit.c(n).clone();
        best = match best {
            None => Some((v, n)),
            Some((b, bn)) => match v.cmp_certified(&b) {
                Some(o) if o == want => Some((v, n)),
                Some(_) => Some((b, bn)),
                None => {
                    if v == b {
                        Some((b, bn))
                    } else {
                        return Err(Error::unresolved("ordering of orbit points", n));
                    }
                }
            },
        };
    }
    Ok(best)
}

/// `inf π_0(A) = sup{c_n : n ∈ N_L}`, `sup π_0(A) = inf{c_n : n ∈ N_R}`.
pub fn basic_arc_interval(td: &TauData, orbit: &Orbit, beta: Option<&[usize]>) -> Result<ArcProjection> {
    let lower = extreme(orbit, &td.nl, Ordering::Greater)?;
    let (upper, upper_index) =
        extreme(orbit, &td.nr, Ordering::Less)?.ok_or_else(|| Error::Inconsistent("N_R is empty".into()))?;
    let exact = !td.saturated() && lower.is_some();
    let mut tower_level = None;
    if exact {
        let n = td.tau_l_lb.max(td.tau_r_lb);
        let lo_n = lower.as_ref().unwrap().1;
        if lo_n != td.tau_l_lb || upper_index != td.tau_r_lb {
            return Err(Error::Inconsistent(format!(
                "extremes at ({}, {}) but τ bounds ({}, {})",
                lo_n, upper_index, td.tau_l_lb, td.tau_r_lb
            )));
        }
        if let Some(beta) = beta {
            // D_n = [c_n, c_{β(n)}] up to order; the other τ must be β(n).
            let other = td.tau_l_lb.min(td.tau_r_lb);
            if n < beta.len() && beta[n] == other {
                tower_level = Some(n);
            }
        }
    }
    let (lower, lower_index) = match lower {
        Some((v, i)) => (Some(v), Some(i)),
        None => (None, None),
    };
    Ok(ArcProjection { lower, lower_index, upper, upper_index, exact, tower_level })
}

/// `T_w([c_2, c_1])`: the projection of all basic arcs whose tails end in `w`,
/// or `None` if no such point exists. The core is `T_1(D_1)`, so this equals
/// the arc formula for the word `1w`, applied after checking that each symbol
/// of `w` lands on a reachable side.
pub fn cylinder_projection(w: &[u8], nu: &KneadingPrefix, orbit: &Orbit) -> Result<Option<(Scalar, Scalar)>> {
    let c = Scalar::half();
    let mut ext = vec![1u8];
    for j in 0..=w.len() {
        let td = tau_data(&ext, nu)?;
        if td.nl.is_empty() {
            return Ok(None);
        }
        let arc = basic_arc_interval(&td, orbit, None)?;
        let lo = arc.lower.unwrap();
        let hi = arc.upper;
        match lo.cmp_certified(&hi) {
            Some(Ordering::Greater) => return Ok(None),
            None if lo != hi => return Err(Error::unresolved("cylinder bounds", j)),
            _ => {}
        }
        if j == w.len() {
            return Ok(Some((lo, hi)));
        }
        let reachable = if w[j] == 0 { lo.cmp_certified(&c) } else { c.cmp_certified(&hi) };
        match reachable {
            Some(Ordering::Greater) => return Ok(None),
            None => return Err(Error::unresolved("cylinder side", j)),
            _ => {}
        }
        ext.push(w[j]);
    }
    unreachable!()
}

/// Largest `L` such that `ν_1…ν_L` is a suffix of `B^∞`, or `None` when some
/// alignment agrees with all of the available ν.
fn periodic_compat(block: &[u8], nu: &[u8]) -> Option<usize> {
    let p = block.len();
    let mut best = 0;
    for shift in 0..p {
        let mut l = 0;
        while l < nu.len() && nu[l] == block[(shift + l) % p] {
            l += 1;
        }
        if l == nu.len() {
            return None;
        }
        // The suffix must end on a block boundary.
        let mut len = l;
        while len > 0 && (shift + len) % p != 0 {
            len -= 1;
        }
        best = best.max(len);
    }
    Some(best)
}

/// Certify τ bounds for a periodic tail. Returns exact τ data when every
/// possible match fits inside the available ν.
fn periodic_tau(bw: &BackwardWord, nu: &KneadingPrefix) -> Result<Option<(TauData, usize)>> {
    let block = bw.period.as_ref().unwrap();
    let Some(m) = periodic_compat(block, &nu.bits) else {
        return Ok(None);
    };
    let bound = m + bw.symbols.len();
    if bound >= nu.len() {
        return Ok(None);
    }
    let word = bw.expand(bound);
    Ok(Some((tau_data(&word, nu)?, m)))
}

/// Endpoint criterion: `τ_L = ∞` with `π_0(x)` the lower end of its arc, or the R-version.
pub fn endpoint_verdict(it: &TwoSidedItinerary, nu: &KneadingPrefix, depth: usize) -> Result<Verdict> {
    let rl = "endpoint-criterion";
    if it.backward.period.is_some() {
        if let Some((td, m)) = periodic_tau(&it.backward, nu)? {
            return Ok(Verdict::refuted(
                rl,
                json!({"tau_l": td.tau_l_lb, "tau_r": td.tau_r_lb, "periodic_compat": m, "reason": "both τ finite"}),
            )
            .with_depth(depth as u64));
        }
    }
    // A finite backward word is taken as the whole tail, so its N sets are exact.
    let word = match &it.backward.period {
        Some(_) => it.backward.expand(depth.min(nu.len())),
        None => it.backward.symbols.clone(),
    };
    if word.len() > nu.len() {
        return Ok(Verdict::undetermined(
            rl,
            "kneading prefix shorter than the backward word",
            json!({"word_len": word.len()}),
        ));
    }
    let td = tau_data(&word, nu)?;
    let w = json!({"tau_l_lb": td.tau_l_lb, "tau_r_lb": td.tau_r_lb, "word_len": td.word_len});
    if !td.saturated() {
        return Ok(match &it.backward.period {
            None => Verdict::refuted(rl, w).with_depth(depth as u64),
            Some(_) => Verdict::counter_evidence(rl, depth as u64, w),
        });
    }
    // The saturated side fixes the arc end the point must occupy; its forward
    // itinerary must then read ν_n ν_{n+1} … with n = |w| + 1. An empty forward
    // part places the point at that end.
    let n = td.word_len + 1;
    let side = if td.saturated_l { "L" } else { "R" };
    let positional = it.x0.is_none() && it.forward.is_empty() && it.forward_period.is_none();
    let need = 24.min(nu.len().saturating_sub(n - 1));
    let fwd = it.forward_symbols(need);
    let at_end = positional || (fwd.len() == need && fwd.iter().enumerate().all(|(i, &b)| b == nu.nu(n + i)));
    let w =
        json!({"side": side, "n": n, "forward_checked": if positional { 0 } else { need }, "position_match": at_end});
    if at_end {
        Ok(Verdict::evidence(rl, depth as u64, w))
    } else {
        Ok(Verdict::counter_evidence(rl, depth as u64, w))
    }
}

/// `x_0` from an eventually periodic forward itinerary: the point with
/// itinerary `F^∞` is the fixed point of the composed inverse branches.
pub fn reconstruct_x0(s: &Scalar, forward: &[u8], period: &[u8]) -> Result<Scalar> {
    let inv = |b: u8, y: &Scalar| -> std::result::Result<Scalar, ArithError> {
        if b == 0 {
            inv_left(s, y)
        } else {
            inv_right(s, y)
        }
    };
    // g(y) = a + b·y, composed from the right.
    let mut a = Scalar::exact(0, 1);
    let mut b = Scalar::exact(1, 1);
    for &sym in period.iter().rev() {
        // inv_0(y) = y/s, inv_1(y) = 1 - y/s.
        let a_s = a.div(s)?;
        let b_s = b.div(s)?;
        if sym == 0 {
            a = a_s;
            b = b_s;
        } else {
            a = a_s.one_minus();
            b = b_s.neg();
        }
    }
    let y = a.div(&b.one_minus())?;
    let mut x = y.clamp_unit();
    for &sym in forward.iter().rev() {
        x = inv(sym, &x)?;
    }
    Ok(x)
}

/// Check that `x` has forward itinerary `syms`.
pub fn verify_forward(s: &Scalar, x: &Scalar, syms: &[u8]) -> Result<()> {
    let mut y = x.clone();
    for (i, &b) in syms.iter().enumerate() {
        match sign_rel_c(&y) {
            SignRelC::Below if b == 0 => {}
            SignRelC::Above if b == 1 => {}
            SignRelC::Unresolved => return Err(Error::unresolved("forward itinerary sign", i)),
            _ => return Err(Error::Domain(format!("forward itinerary not realised at position {}", i))),
        }
        y = tent(s, &y)?.clamp_unit();
    }
    Ok(())
}

/// `π_n(x) = x_{-n}` for `0 ≤ n ≤ depth`.
pub fn backward_orbit(s: &Scalar, x0: &Scalar, bw: &BackwardWord, depth: usize) -> Result<Vec<Scalar>> {
    let top = tent(s, &Scalar::half())?;
    let mut out = vec![x0.clone()];
    let mut x = x0.clone();
    for n in 1..=depth {
        let sym = bw.at(n).ok_or_else(|| Error::Domain(format!("backward word unknown at -{}", n)))?;
        match x.cmp_certified(&top) {
            Some(Ordering::Greater) => {
                return Err(Error::Domain(format!("x_{{-{}}} has no preimage: backward word not admissible", n - 1)))
            }
            None if x.lo() > top.lo() => return Err(Error::unresolved("preimage existence", n)),
            _ => {}
        }
        x = if sym == 0 { inv_left(s, &x)? } else { inv_right(s, &x)? };
        out.push(x.clone());
    }
    Ok(out)
}

/// Trailing orbit segment `{c_j : J₀ ≤ j ≤ M}` standing in for `ω(c)`.
#[derive(Clone, Debug)]
pub struct OmegaProxy {
    pub burn_in: usize,
    pub horizon: usize,
    /// `(lo, hi)` outward-rounded, sorted by `lo`.
    pub points: Vec<(f64, f64)>,
    pub resolution: f64,
    pub nu: Vec<u8>,
}

impl OmegaProxy {
    pub fn new(orbit: &Orbit, burn_in: usize) -> OmegaProxy {
        let m = orbit.len();
        let mut points: Vec<(f64, f64)> =
            (burn_in.max(1)..=m).map(|j| (f64_down(&orbit.c(j).lo()), f64_up(&orbit.c(j).hi()))).collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let resolution = points.iter().map(|p| p.1 - p.0).fold(0.0, f64::max) + 1e-15;
        let nu = orbit.symbols().unwrap_or_default();
        OmegaProxy { burn_in, horizon: m, points, resolution, nu }
    }

    /// Certified `(lower, upper)` bounds on the distance from `[lo, hi]` to the proxy set.
    pub fn distance(&self, lo: f64, hi: f64) -> (f64, f64) {
        let i = self.points.partition_point(|p| p.0 < lo);
        let mut best_hi = f64::INFINITY;
        let mut best_lo = f64::INFINITY;
        let from = i.saturating_sub(3);
        let to = (i + 3).min(self.points.len());
        for p in &self.points[from..to] {
            let d_hi = (hi - p.0).abs().max((p.1 - lo).abs());
            let d_lo = (p.0 - hi).max(lo - p.1).max(0.0);
            best_hi = best_hi.min(d_hi);
            best_lo = best_lo.min(d_lo);
        }
        // Points further away in sorted order are further from [lo, hi] than the window edges.
        (best_lo, best_hi)
    }

    fn tail_contains(&self, word: &[u8]) -> bool {
        let from = self.burn_in.saturating_sub(1).min(self.nu.len());
        self.nu[from..].windows(word.len()).any(|w| w == word)
    }
}

pub const DEFAULT_EPS_BITS: i32 = 20;

/// Folding test: every projection `π_n(x)`, `n ≤ depth`, within `ε` of the `ω(c)` proxy.
pub fn folding_verdict(
    it: &TwoSidedItinerary,
    slope: &SlopeParam,
    depth: usize,
    eps: f64,
    horizon: usize,
) -> Result<Verdict> {
    let orbit = critical_orbit(slope, horizon)?;
    let s = slope.at(orbit.bits.unwrap_or(256).max(256))?;
    let proxy = OmegaProxy::new(&orbit, horizon / 4);
    folding_verdict_with(it, &s, &orbit, &proxy, depth, eps)
}

/// `x_0` as given, reconstructed from an eventually periodic forward word, or,
/// for a finite backward word `ν_1…ν_N` with nothing to its right, `c_{N+1}`.
pub fn point_x0(it: &TwoSidedItinerary, s: &Scalar, orbit: &Orbit) -> Result<Scalar> {
    if let Some(x) = &it.x0 {
        return Ok(x.clone());
    }
    let w = &it.backward.symbols;
    if it.forward.is_empty() && it.forward_period.is_none() && it.backward.period.is_none() {
        let on_nu = w.len() < orbit.len() && orbit.symbols()?.starts_with(w);
        if on_nu {
            return Ok(orbit.c(w.len() + 1).clone());
        }
    }
    let p = it
        .forward_period
        .as_ref()
        .ok_or_else(|| Error::Domain("x0 needs an eventually periodic forward itinerary".into()))?;
    let x = reconstruct_x0(s, &it.forward, p)?;
    verify_forward(s, &x, &it.forward_symbols(it.forward.len() + 2 * p.len()))?;
    Ok(x)
}

pub fn folding_verdict_with(
    it: &TwoSidedItinerary,
    s: &Scalar,
    orbit: &Orbit,
    proxy: &OmegaProxy,
    depth: usize,
    eps: f64,
) -> Result<Verdict> {
    let rl = "folding-omega-limit";
    let x0 = point_x0(it, s, orbit)?;
    let depth = match it.backward.period {
        Some(_) => depth,
        None => depth.min(it.backward.symbols.len()),
    };
    let pts = backward_orbit(s, &x0, &it.backward, depth)?;
    const WINDOW: usize = 12;
    let fwd = it.forward_symbols(WINDOW);
    let mut worst = (0usize, 0.0f64);
    for (n, p) in pts.iter().enumerate() {
        let (dlo, dhi) = proxy.distance(f64_down(&p.lo()), f64_up(&p.hi()));
        if dhi > worst.1 {
            worst = (n, dhi);
        }
        if dlo > eps + proxy.resolution {
            // Symbolic channel: the itinerary of π_n(x), s_{-n} … , should occur in ν's tail.
            let mut word: Vec<u8> = (1..=n).rev().map(|k| it.backward.at(k).unwrap()).collect();
            word.extend_from_slice(&fwd);
            word.truncate(WINDOW);
            let absent = word.len() == WINDOW && !proxy.tail_contains(&word);
            let w = json!({"n": n, "distance_lo": dlo, "eps": eps, "word": word_string(&word), "absent_in_nu": absent});
            return Ok(if absent {
                Verdict::refuted(rl, w).with_depth(depth as u64).with_epsilon(eps)
            } else {
                Verdict::undetermined(rl, "distance and symbolic channels disagree", w).with_epsilon(eps)
            });
        }
    }
    let w = json!({"max_distance_hi": worst.1, "at": worst.0, "proxy": [proxy.burn_in, proxy.horizon]});
    if worst.1 <= eps {
        Ok(Verdict::evidence(rl, depth as u64, w).with_epsilon(eps))
    } else {
        Ok(Verdict::undetermined(rl, "distance not resolved below eps", w).with_epsilon(eps))
    }
}

/// Backward words `lim_j ν_1…ν_{n_j}` with `ν_1…ν_{n_j}` a suffix of
/// `ν_1…ν_{n_{j+1}}`, branching over non-nested choices of `n_{j+1}`.
/// Each word is returned at the first `n_j ≥ depth`; all chains stay on the
/// left side, so the words saturate `N_L`.
pub fn endpoint_itinerary_gen(nu: &KneadingPrefix, count: usize, depth: usize) -> Result<Vec<BackwardWord>> {
    let bits = &nu.bits;
    let len = bits.len();
    // Prefix function of ν: borders of every prefix.
    let mut pi = vec![0usize; len];
    for i in 1..len {
        let mut k = pi[i - 1];
        while k > 0 && bits[i] != bits[k] {
            k = pi[k - 1];
        }
        if bits[i] == bits[k] {
            k += 1;
        }
        pi[i] = k;
    }
    let is_border = |n: usize, m: usize| -> bool {
        // ν_1…ν_n is a suffix of ν_1…ν_m.
        let mut k = pi[m - 1];
        while k > n {
            k = pi[k - 1];
        }
        k == n
    };
    let mut odd = vec![false; len + 1];
    for i in 1..=len {
        odd[i] = odd[i - 1] ^ (bits[i - 1] == 1);
    }
    // Staying on odd #_1(ν_1…ν_n) keeps every n_j + 1 in N_L, so τ_L = ∞ in the limit.
    let candidates =
        |n: usize| -> Vec<usize> { ((n + 1)..=len).filter(|&m| odd[m] && is_border(n, m)).take(64).collect() };
    let mut out: Vec<BackwardWord> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![1usize];
    while let Some(n) = stack.pop() {
        if out.len() >= count {
            break;
        }
        if n >= depth {
            let w = bits[..n].to_vec();
            let key = w[n - depth..].to_vec();
            if seen.insert(key) {
                out.push(BackwardWord::finite(w));
            }
            continue;
        }
        let cands = candidates(n);
        // Two branches whose words are not suffix-nested, smallest first.
        let mut chosen: Vec<usize> = Vec::new();
        for &m in &cands {
            if chosen.iter().all(|&a| !is_border(a, m)) {
                chosen.push(m);
            }
            if chosen.len() == 2 {
                break;
            }
        }
        if chosen.is_empty() {
            if let Some(&m) = cands.first() {
                chosen.push(m);
            }
        }
        for &m in chosen.iter().rev() {
            stack.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::NoRecurrenceWitness(len));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PullbackChain {
    pub intervals: Vec<(Scalar, Scalar)>,
    /// Sides `s_{-1}, s_{-2}, …` of the backward orbit points.
    pub along: Vec<u8>,
    pub monotone: bool,
    /// First `k ≥ 1` with `c ∈ J_k°`.
    pub first_critical: Option<usize>,
}

impl PullbackChain {
    /// Number of monotone steps.
    pub fn monotone_len(&self) -> usize {
        self.first_critical.map(|k| k - 1).unwrap_or(self.intervals.len() - 1)
    }
}

/// Pull `J` back along a backward orbit given by its sides. Each `J_{k+1}` is
/// the component of `T^{-1}(J_k)` on the given side, or the single component
/// around `c` when `J_k` reaches `c_1 = s/2`.
pub fn pull_back(s: &Scalar, j: (Scalar, Scalar), along: &[u8], stop_at_critical: bool) -> Result<PullbackChain> {
    let top = s.scale_pow2(-1);
    let zero = Scalar::exact(0, 1);
    let one = Scalar::exact(1, 1);
    let mut intervals = vec![j.clone()];
    let (mut a, mut b) = j;
    let mut first_critical = None;
    for (k, &side) in along.iter().enumerate() {
        let a0 = match a.cmp_certified(&zero) {
            Some(Ordering::Less) => zero.clone(),
            Some(_) => a.clone(),
            None => a.hull(&zero).meet(&Scalar::exact(1, 1)).clamp_unit(),
        };
        let merged = match b.cmp_certified(&top) {
            Some(Ordering::Less) => false,
            Some(_) => true,
            None => return Err(Error::unresolved("pull-back reaches c_1", k + 1)),
        };
        let (na, nb) = if merged {
            (a0.div(s)?, a0.div(s)?.one_minus())
        } else {
            let bb = b.meet(&one);
            if side == 0 {
                (a0.div(s)?, bb.div(s)?)
            } else {
                (bb.div(s)?.one_minus(), a0.div(s)?.one_minus())
            }
        };
        intervals.push((na.clone(), nb.clone()));
        if merged && first_critical.is_none() {
            first_critical = Some(k + 1);
            if stop_at_critical {
                break;
            }
        }
        a = na;
        b = nb;
    }
    let monotone = first_critical.is_none();
    Ok(PullbackChain { intervals, along: along.to_vec(), monotone, first_critical })
}

/// Re-check a chain: `c ∉ J_k°` for every `k ≥ 1` flagged monotone.
pub fn recheck_monotone(chain: &PullbackChain) -> bool {
    let c = Scalar::half();
    let upto = chain.first_critical.unwrap_or(chain.intervals.len());
    chain.intervals[1..upto].iter().all(|(a, b)| {
        let left = matches!(b.cmp_certified(&c), Some(Ordering::Less | Ordering::Equal));
        let right = matches!(a.cmp_certified(&c), Some(Ordering::Greater | Ordering::Equal));
        left || right
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PullbackWitness {
    pub eps_bits: i32,
    /// The pulled-back neighbourhood is centred at `c_end`.
    pub end: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RecurrenceClass {
    /// Every searched pull-back died before the target length.
    PersistentEvidence {
        horizon: usize,
    },
    ReluctantEvidence {
        eps_bits: i32,
        length: usize,
        end: usize,
    },
    /// No long pull-back and no sign of recurrence of `c`.
    NonRecurrent,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReluctanceReport {
    pub class: RecurrenceClass,
    pub verdict: Verdict,
    /// Longest monotone pull-back found for each `ε = 2^-bits`.
    pub per_eps: Vec<(i32, usize, usize)>,
    pub witness: Option<PullbackWitness>,
    pub q_limit: Verdict,
    pub recurrence: Verdict,
}

/// Finite-horizon recurrence check: `min_{j ∈ [M/2, M]} |c_j - c|` against the early returns.
fn recurrence_evidence(orbit: &Orbit) -> Verdict {
    let m = orbit.len();
    let dist = |j: usize| (orbit.c(j).mid_f64() - 0.5).abs();
    let early = (2..=m / 4).map(dist).fold(f64::INFINITY, f64::min);
    let late = (m / 2..=m).map(dist).fold(f64::INFINITY, f64::min);
    let w = json!({"early_min": early, "late_min": late, "horizon": m});
    if late < early {
        Verdict::evidence("critical-recurrence", m as u64, w)
    } else {
        Verdict::counter_evidence("critical-recurrence", m as u64, w)
    }
}

/// Search for monotone pull-backs of `ε`-neighbourhoods of `c_e` along `c_{e-1}, …, c_1`.
pub fn reluctance_search(
    slope: &SlopeParam,
    eps_bits: &[i32],
    length_target: usize,
    horizon: usize,
) -> Result<ReluctanceReport> {
    let orbit = critical_orbit(slope, horizon)?;
    let s = match orbit.bits {
        None => slope.at(0)?,
        Some(b) => slope.at(b)?,
    };
    let nu = KneadingPrefix::literal(orbit.symbols()?)?;
    let cd = cutting_data(&nu)?;
    let qa = q_asymptotics(&cd.q);
    let recurrence = recurrence_evidence(&orbit);
    let mut per_eps = Vec::new();
    let mut witness = None;
    for &p in eps_bits {
        let eps = Scalar::Exact(BigRational::new(1.into(), num_bigint::BigInt::from(1u8) << p as usize));
        let mut best = (0usize, 0usize);
        for e in 2..=horizon {
            let ce = orbit.c(e);
            let j = (ce.sub(&eps).clamp_unit(), ce.add(&eps).clamp_unit());
            let along: Vec<u8> = (1..e).rev().map(|i| nu.nu(i)).collect();
            let chain = pull_back(&s, j, &along, true)?;
            let l = chain.monotone_len();
            if l > best.0 {
                best = (l, e);
            }
            if l >= length_target && witness.is_none() {
                witness = Some(PullbackWitness { eps_bits: p, end: e, length: l });
                break;
            }
        }
        per_eps.push((p, best.0, best.1));
        if witness.is_some() {
            break;
        }
    }
    let w = json!({"per_eps": per_eps, "length_target": length_target, "horizon": horizon});
    let verdict = match &witness {
        Some(wt) => {
            Verdict::counter_evidence("persistent-recurrence", horizon as u64, json!({"reluctant": wt, "search": w}))
        }
        None => Verdict::evidence("persistent-recurrence", horizon as u64, w),
    };
    let class = match &witness {
        Some(wt) => RecurrenceClass::ReluctantEvidence { eps_bits: wt.eps_bits, length: wt.length, end: wt.end },
        None if recurrence.leans_false() && !qa.tends_to_infinity.leans_true() => RecurrenceClass::NonRecurrent,
        None => RecurrenceClass::PersistentEvidence { horizon },
    };
    Ok(ReluctanceReport { class, verdict, per_eps, witness, q_limit: qa.tends_to_infinity, recurrence })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum BasicArcKind {
    Nondegenerate { lo: f64, hi: f64 },
    DegenerateEvidence { width: f64 },
    Unknown,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub enum SubclassFlag {
    FlatCandidate,
    DegenerateEndpointCandidate,
    NonEndFolding,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointClassification {
    pub folding: Verdict,
    pub endpoint: Verdict,
    pub basic_arc: BasicArcKind,
    pub subclass_flags: Vec<SubclassFlag>,
    /// Global expectations from the kneading map (persistent recurrence, degenerate arcs).
    pub expectations: Vec<Verdict>,
}

/// Width threshold below which `∩_{l ∈ N_L} D_l` counts as degenerate evidence.
pub const DEGENERATE_WIDTH: f64 = 1e-9;

pub fn classification_report(
    it: &TwoSidedItinerary,
    slope: &SlopeParam,
    depth: usize,
    eps: f64,
    horizon: usize,
) -> Result<PointClassification> {
    let orbit = critical_orbit(slope, horizon)?;
    let s = slope.at(orbit.bits.unwrap_or(256).max(256))?;
    let nu = KneadingPrefix::literal(orbit.symbols()?)?;
    let cd = cutting_data(&nu)?;
    let proxy = OmegaProxy::new(&orbit, horizon / 4);
    let folding = folding_verdict_with(it, &s, &orbit, &proxy, depth, eps)?;
    let mut endpoint = endpoint_verdict(it, &nu, depth)?;
    if folding.is_refuted() && endpoint.leans_true() {
        // Endpoints are folding points.
        endpoint = Verdict::counter_evidence(
            "endpoint-criterion",
            depth as u64,
            json!({"reason": "not a folding point", "tau": endpoint.witness}),
        );
    }
    let word = match &it.backward.period {
        Some(_) => it.backward.expand(depth.min(nu.len())),
        None => it.backward.symbols.clone(),
    };
    let td = tau_data(&word, &nu)?;
    let arc = basic_arc_interval(&td, &orbit, Some(&cd.beta)).ok();
    // A(⃖x) ⊆ D_l for every l in N_L ∪ N_R.
    let min_dl = td
        .nl
        .iter()
        .chain(&td.nr)
        .filter(|&&l| l <= orbit.len())
        .map(|&l| f64_up(&d_len(&orbit, &cd.beta, l).hi()))
        .fold(f64::INFINITY, f64::min);
    let basic_arc = match &arc {
        Some(a) if a.exact => {
            BasicArcKind::Nondegenerate { lo: f64_down(&a.lower.as_ref().unwrap().lo()), hi: f64_up(&a.upper.hi()) }
        }
        _ if min_dl < DEGENERATE_WIDTH => BasicArcKind::DegenerateEvidence { width: min_dl },
        _ => BasicArcKind::Unknown,
    };
    let mut flags = Vec::new();
    if folding.leans_true() {
        if endpoint.leans_false() {
            flags.push(SubclassFlag::NonEndFolding);
        } else if endpoint.leans_true() {
            match basic_arc {
                BasicArcKind::DegenerateEvidence { .. } => flags.push(SubclassFlag::DegenerateEndpointCandidate),
                BasicArcKind::Nondegenerate { .. } => flags.push(SubclassFlag::FlatCandidate),
                BasicArcKind::Unknown => {}
            }
        }
    }
    let qa = q_asymptotics(&cd.q);
    let mut expectations = Vec::new();
    if qa.tends_to_infinity.leans_true() {
        expectations.push(Verdict::evidence(
            "all-folding-degenerate",
            cd.q.len() as u64,
            json!({"from": "kneading map tends to infinity"}),
        ));
        expectations.push(Verdict::evidence(
            "folding-equals-endpoints",
            cd.q.len() as u64,
            json!({"from": "persistent recurrence"}),
        ));
    } else {
        expectations.push(Verdict::evidence(
            "nondegenerate-folding-arc",
            cd.q.len() as u64,
            json!({"from": "kneading map does not tend to infinity", "witness_arc": nondegenerate_arc_witness(&orbit, &cd)}),
        ));
    }
    Ok(PointClassification { folding, endpoint, basic_arc, subclass_flags: flags, expectations })
}

/// `|D_n| = |c_n - c_{β(n)}|` with `c_0 = c`.
pub fn d_len(orbit: &Orbit, beta: &[usize], n: usize) -> Scalar {
    orbit.c(n).sub(orbit.c(beta[n])).abs()
}

/// A tower level of maximal length among the last half of the horizon: the
/// basic arc `…111ν_1…ν_{n-1}` projects onto `D_n`.
fn nondegenerate_arc_witness(orbit: &Orbit, cd: &crate::kneading::CuttingData) -> serde_json::Value {
    let top = cd.horizon.min(orbit.len());
    let mut best = (0usize, 0.0f64);
    for n in (top / 2).max(1)..=top {
        let len = d_len(orbit, &cd.beta, n).mid_f64();
        if len > best.1 {
            best = (n, len);
        }
    }
    json!({"n": best.0, "len": best.1})
}

/// Count of distinct words and the share that saturate.
pub fn saturation_profile(words: &[BackwardWord], nu: &KneadingPrefix) -> Result<(usize, usize)> {
    let mut sat = 0;
    for w in words {
        let td = tau_data(&w.symbols, nu)?;
        if td.saturated() {
            sat += 1;
        }
    }
    Ok((words.len(), sat))
}

/// Parity helper: `#_1(ν_1…ν_{n-1})` is odd.
pub fn left_parity(nu: &KneadingPrefix, n: usize) -> bool {
    ones(&nu.bits[..n - 1]) % 2 == 1
}

pub fn status_name(v: &Verdict) -> &'static str {
    match v.status {
        Status::Certified => "certified",
        Status::Refuted => "refuted",
        Status::Evidence => "evidence",
        Status::Undetermined => "undetermined",
    }
}
