//! Kneading sequences, cutting times, kneading maps and admissibility.
//!
//! Indices follow the usual convention: `nu[0]` holds `ν_1`, and cutting
//! times are 1-based positions in `ν`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::arith::{critical_orbit, ArithError, SlopeParam};
use crate::verdict::{Status, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KneadError {
    #[error("not admissible at position {0}")]
    NotAdmissible(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Arith(#[from] ArithError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    FromSlope(String),
    FromQ,
    Literal,
}

/// `ν_1..ν_N` over {0,1}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KneadingPrefix {
    pub bits: Vec<u8>,
    pub source: Source,
    /// Set for slopes whose exact critical orbit is eventually periodic (s = 2).
    pub finite_orbit: bool,
}

impl KneadingPrefix {
    pub fn literal(bits: Vec<u8>) -> Result<KneadingPrefix, KneadError> {
        if bits.first() != Some(&1) {
            return Err(KneadError::Invalid("kneading sequence must start with 1".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(KneadError::Invalid("symbols must be 0 or 1".into()));
        }
        Ok(KneadingPrefix { bits, source: Source::Literal, finite_orbit: false })
    }

    /// Parse `"1000101"` or the dotted form `"1.0.0.0.101"`. Dots must sit
    /// exactly at the cutting times before the end of the word; a trailing
    /// ellipsis is ignored.
    pub fn parse(text: &str) -> Result<KneadingPrefix, KneadError> {
        let t = text.trim().trim_end_matches('…').trim_end_matches("...").trim_end_matches('.');
        let mut bits = Vec::new();
        let mut dots = Vec::new();
        for ch in t.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                '.' => dots.push(bits.len()),
                c if c.is_whitespace() => {}
                c => return Err(KneadError::Invalid(format!("unexpected character '{}'", c))),
            }
        }
        let nu = KneadingPrefix::literal(bits)?;
        if !dots.is_empty() {
            let cuts: Vec<usize> = cutting_times(&nu.bits).into_iter().filter(|&s| s < nu.len()).collect();
            dots.dedup();
            if dots != cuts {
                return Err(KneadError::Invalid(format!("dots at {:?} do not match cutting times {:?}", dots, cuts)));
            }
        }
        Ok(nu)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// `ν_n` (1-based).
    pub fn nu(&self, n: usize) -> u8 {
        self.bits[n - 1]
    }

    /// Dotted notation with a dot after every cutting time below the length.
    pub fn dotted(&self) -> String {
        let cuts = cutting_times(&self.bits);
        let mut out = String::new();
        for (i, b) in self.bits.iter().enumerate() {
            out.push(if *b == 1 { '1' } else { '0' });
            if cuts.contains(&(i + 1)) && i + 1 < self.bits.len() {
                out.push('.');
            }
        }
        out
    }
}

impl fmt::Display for KneadingPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", word_string(&self.bits))
    }
}

pub fn word_string(w: &[u8]) -> String {
    w.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

pub fn parse_word(text: &str) -> Result<Vec<u8>, KneadError> {
    text.chars()
        .filter(|c| !c.is_whitespace() && *c != '.')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(KneadError::Invalid(format!("unexpected character '{}'", other))),
        })
        .collect()
}

/// `#_1` of a word.
pub fn ones(w: &[u8]) -> usize {
    w.iter().filter(|&&b| b == 1).count()
}

/// `ρ(j) = min{k > j : ν_k ≠ ν_{k−j}}`, or `None` when it leaves the prefix.
pub fn rho(nu: &[u8], j: usize) -> Option<usize> {
    ((j + 1)..=nu.len()).find(|&k| nu[k - 1] != nu[k - j - 1])
}

/// The ρ-orbit of `start` inside the prefix.
pub fn rho_orbit(nu: &[u8], start: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut j = Some(start);
    while let Some(v) = j {
        if v > nu.len() {
            break;
        }
        out.push(v);
        j = rho(nu, v);
    }
    out
}

/// Cutting times `S_0 = 1 < S_1 < ...` inside the prefix.
pub fn cutting_times(nu: &[u8]) -> Vec<usize> {
    if nu.is_empty() {
        return Vec::new();
    }
    rho_orbit(nu, 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cocut {
    pub times: Vec<usize>,
    /// The last element's ρ-image lies beyond the prefix.
    pub censored: bool,
}

pub fn cocutting_times(nu: &[u8]) -> Cocut {
    match (2..=nu.len()).find(|&j| nu[j - 1] == 1) {
        None => Cocut { times: Vec::new(), censored: false },
        Some(start) => {
            let times = rho_orbit(nu, start);
            Cocut { censored: !times.is_empty(), times }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuttingData {
    /// `S_0..S_m`.
    pub s: Vec<usize>,
    /// `Q(1)..Q(m)`, stored at index `k - 1`.
    pub q: Vec<usize>,
    /// `beta[n]` for `1 ≤ n ≤ N`; `beta[1] = 0` encodes `D_1 = [c, c_1]`.
    pub beta: Vec<usize>,
    pub cocut: Cocut,
    pub horizon: usize,
    /// `κ = min{i ≥ 2 : ν_i = 1}` when it occurs in the prefix.
    pub kappa: Option<usize>,
}

impl CuttingData {
    /// `Q(k)` with the convention `Q(0) = 0`.
    pub fn q_at(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.q[k - 1]
        }
    }

    pub fn is_cutting_time(&self, n: usize) -> bool {
        self.s.binary_search(&n).is_ok()
    }

    pub fn index_of_cutting_time(&self, n: usize) -> Option<usize> {
        self.s.binary_search(&n).ok()
    }
}

/// `S`, and `Q` when every difference of consecutive cutting times is itself a cutting time.
fn q_from_s(s: &[usize]) -> Result<Vec<usize>, usize> {
    let pos: HashMap<usize, usize> = s.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut q = Vec::with_capacity(s.len().saturating_sub(1));
    for k in 1..s.len() {
        match pos.get(&(s[k] - s[k - 1])) {
            Some(&i) => q.push(i),
            None => return Err(s[k]),
        }
    }
    Ok(q)
}

/// A prefix of length `N ≥ 2 S_m` (last cutting time `S_m`) cannot be admissible:
/// the next cutting time is at most `2 S_m` and would have been seen.
fn square_tail_violation(nu: &[u8], s: &[usize]) -> Option<usize> {
    let last = *s.last()?;
    if nu.len() >= 2 * last {
        Some(2 * last)
    } else {
        None
    }
}

pub fn cutting_data(nu: &KneadingPrefix) -> Result<CuttingData, KneadError> {
    let v = admissible_disjoint(nu);
    if v.status == Status::Refuted {
        let pos = v.witness["position"].as_u64().unwrap_or(0) as usize;
        return Err(KneadError::NotAdmissible(pos));
    }
    let s = cutting_times(&nu.bits);
    let q = q_from_s(&s).map_err(KneadError::NotAdmissible)?;
    let n = nu.len();
    let mut beta = vec![0usize; n + 1];
    let mut last = 0usize;
    let mut idx = 0usize;
    for m in 1..=n {
        // last = max{S_k < m}
        while idx < s.len() && s[idx] < m {
            last = s[idx];
            idx += 1;
        }
        beta[m] = if m == 1 { 0 } else { m - last };
    }
    let kappa = (2..=n).find(|&i| nu.bits[i - 1] == 1);
    Ok(CuttingData { s, q, beta, cocut: cocutting_times(&nu.bits), horizon: n, kappa })
}

/// A kneading map given as `Q(1), Q(2), ...` (index `k - 1`).
pub trait KneadingMap {
    fn q(&self, k: usize) -> Option<usize>;
}

impl KneadingMap for [usize] {
    fn q(&self, k: usize) -> Option<usize> {
        if k == 0 {
            Some(0)
        } else {
            self.get(k - 1).copied()
        }
    }
}

impl KneadingMap for Vec<usize> {
    fn q(&self, k: usize) -> Option<usize> {
        self.as_slice().q(k)
    }
}

/// A closed-form kneading map, defined for `k ≤ limit`.
#[derive(Clone, Copy)]
pub struct ClosedForm {
    pub f: fn(usize) -> usize,
    pub limit: usize,
}

impl ClosedForm {
    pub fn new(f: fn(usize) -> usize, limit: usize) -> ClosedForm {
        ClosedForm { f, limit }
    }
}

impl KneadingMap for ClosedForm {
    fn q(&self, k: usize) -> Option<usize> {
        if k == 0 {
            Some(0)
        } else if k <= self.limit {
            Some((self.f)(k))
        } else {
            None
        }
    }
}

pub fn fibonacci_q(k: usize) -> usize {
    k.saturating_sub(2)
}

pub fn cascade_q(k: usize) -> usize {
    k.saturating_sub(1)
}

/// The kneading map of the symmetric example with a direct spiral.
pub fn example35_q(k: usize) -> usize {
    assert!(k >= 1, "example35_q is defined for k ≥ 1");
    match k {
        1 | 2 | 4 => 0,
        3 => 1,
        // k = 3ℓ gives 3ℓ − 2; k = 3ℓ ± 1 gives 3ℓ − 4.
        _ => match k % 3 {
            0 => k - 2,
            2 => k - 3,
            _ => k - 5,
        },
    }
}

/// `Q(1..=m)` from a closed form.
pub fn q_list(f: impl Fn(usize) -> usize, m: usize) -> Vec<usize> {
    (1..=m).map(f).collect()
}

/// ν of the non-recurrent example `1.0.0.11.0.11.11.0.11.11.11.0…`.
pub fn fixture41_bits(n: usize) -> Vec<u8> {
    let mut v = vec![1u8, 0, 0];
    let mut i = 1;
    while v.len() < n {
        for _ in 0..i {
            v.extend_from_slice(&[1, 1]);
        }
        v.push(0);
        i += 1;
    }
    v.truncate(n);
    v
}

/// Lexicographic part of the admissibility condition for one `k`:
/// `Ok(Some(j))` resolved strictly at `j`, `Ok(None)` ran out of data,
/// `Err(j)` strict violation at `j`.
fn lex_check(q: &dyn KneadingMap, k: usize) -> Result<Option<usize>, usize> {
    let qk = q.q(k).unwrap_or(0);
    let a0 = q.q(qk).unwrap_or(0);
    let mut j = 1;
    loop {
        let (Some(a), Some(b)) = (q.q(a0 + j), q.q(k + j)) else {
            return Ok(None);
        };
        if a < b {
            return Ok(Some(j));
        }
        if a > b {
            return Err(j);
        }
        j += 1;
    }
}

/// Admissibility of a kneading map up to `horizon`: `Q(k) < k` and the
/// lexicographic condition, with comparisons reading every available value.
pub fn admissible_q(q: &dyn KneadingMap, horizon: usize) -> Verdict {
    let rule = "lex-admissibility";
    let mut unresolved = Vec::new();
    for k in 1..=horizon {
        let Some(qk) = q.q(k) else {
            return Verdict::evidence(
                rule,
                (k - 1) as u64,
                json!({"checked_to": k - 1, "reason": "map shorter than horizon"}),
            );
        };
        if qk >= k {
            return Verdict::refuted(rule, json!({"k": k, "q": qk, "violation": "Q(k) >= k"}));
        }
        match lex_check(q, k) {
            Err(j) => return Verdict::refuted(rule, json!({"k": k, "j": j, "violation": "lexicographic"})),
            Ok(None) => unresolved.push(k),
            Ok(Some(_)) => {}
        }
    }
    if unresolved.is_empty() {
        Verdict::certified(rule, json!({"horizon": horizon})).with_depth(horizon as u64)
    } else {
        Verdict::evidence(rule, horizon as u64, json!({"horizon": horizon, "unresolved_k": unresolved}))
    }
}

/// Cutting times and co-cutting times are disjoint (plus the square-tail rule).
pub fn admissible_disjoint(nu: &KneadingPrefix) -> Verdict {
    let rule = "cut-cocut-disjointness";
    let bits = &nu.bits;
    if bits.is_empty() || bits[0] != 1 {
        return Verdict::refuted(rule, json!({"position": 1, "reason": "nu_1 must be 1"}));
    }
    let cut = cutting_times(bits);
    let co = cocutting_times(bits);
    let first = co.times.iter().copied().find(|t| cut.binary_search(t).is_ok());
    if let Some(t) = first {
        return Verdict::refuted(rule, json!({"position": t, "cutting": cut, "cocutting": co.times}));
    }
    if let Some(p) = square_tail_violation(bits, &cut) {
        return Verdict::refuted(rule, json!({"position": p, "reason": "square tail", "cutting": cut}));
    }
    Verdict::evidence(rule, bits.len() as u64, json!({"cutting": cut, "cocutting": co.times}))
}

/// The lexicographic checker applied to a kneading prefix (Q derived from its cutting times).
pub fn admissible_q_nu(nu: &KneadingPrefix) -> Verdict {
    let rule = "lex-admissibility";
    let bits = &nu.bits;
    if bits.is_empty() || bits[0] != 1 {
        return Verdict::refuted(rule, json!({"position": 1, "reason": "nu_1 must be 1"}));
    }
    let s = cutting_times(bits);
    let q = match q_from_s(&s) {
        Ok(q) => q,
        Err(p) => return Verdict::refuted(rule, json!({"position": p, "reason": "difference is not a cutting time"})),
    };
    if let Some(p) = square_tail_violation(bits, &s) {
        return Verdict::refuted(rule, json!({"position": p, "reason": "square tail"}));
    }
    let v = admissible_q(&q, q.len());
    match v.status {
        Status::Refuted => {
            let k = v.witness["k"].as_u64().unwrap_or(0) as usize;
            Verdict::refuted(rule, json!({"position": s.get(k).copied().unwrap_or(0), "k": k, "detail": v.witness}))
        }
        // Symbols beyond the prefix are unknown, so a prefix is never certified.
        _ => Verdict::evidence(rule, bits.len() as u64, json!({"q": q})),
    }
}

/// Reconstruct ν from a kneading map up to `horizon` symbols.
pub fn nu_from_q(q: &dyn KneadingMap, horizon: usize) -> Result<KneadingPrefix, KneadError> {
    if horizon == 0 {
        return Err(KneadError::Invalid("horizon must be positive".into()));
    }
    let mut nu = vec![1u8];
    let mut s = vec![1usize];
    let mut k = 1;
    while nu.len() < horizon {
        let qk = q.q(k).ok_or_else(|| KneadError::Invalid(format!("kneading map undefined at k = {}", k)))?;
        if qk >= k {
            return Err(KneadError::NotAdmissible(k));
        }
        let prev = *s.last().unwrap();
        let next = prev + s[qk];
        for n in (prev + 1)..next {
            nu.push(nu[n - prev - 1]);
        }
        nu.push(1 - nu[s[qk] - 1]);
        s.push(next);
        k += 1;
    }
    nu.truncate(horizon);
    // Lex condition for every k whose cutting time is inside the prefix.
    let kmax = s.iter().filter(|&&v| v <= horizon).count().saturating_sub(1);
    let v = admissible_q(q, kmax);
    if v.is_refuted() {
        let kk = v.witness["k"].as_u64().unwrap_or(0) as usize;
        return Err(KneadError::NotAdmissible(kk));
    }
    Ok(KneadingPrefix { bits: nu, source: Source::FromQ, finite_orbit: false })
}

/// Certified kneading symbols of a slope.
pub fn nu_from_orbit(s: &SlopeParam, n: usize) -> Result<KneadingPrefix, KneadError> {
    let orbit = critical_orbit(s, n)?;
    let bits = orbit.symbols()?;
    Ok(KneadingPrefix { bits, source: Source::FromSlope(s.label()), finite_orbit: orbit.finite })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormEntry {
    pub k: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormScan {
    pub entries: Vec<RenormEntry>,
    /// Every k passing at the horizon, increasing.
    pub cascade: Vec<usize>,
}

/// For each `k ≥ 2`: does `Q(k+j) ≥ k−1` hold for all `j` with `k + j ≤ horizon`?
pub fn renorm_scan(q: &dyn KneadingMap, horizon: usize) -> RenormScan {
    let rule = "renormalisation-window";
    let mut entries = Vec::new();
    let mut cascade = Vec::new();
    for k in 2..=horizon {
        let mut fail = None;
        let mut checked = 0;
        for m in k..=horizon {
            let Some(v) = q.q(m) else { break };
            checked += 1;
            if v + 1 < k {
                fail = Some((m - k, v));
                break;
            }
        }
        let verdict = match fail {
            Some((j, v)) => Verdict::refuted(rule, json!({"k": k, "j": j, "q": v})),
            None => {
                cascade.push(k);
                Verdict::evidence(rule, checked as u64, json!({"k": k, "checked": checked}))
            }
        };
        entries.push(RenormEntry { k, verdict });
    }
    RenormScan { entries, cascade }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAsymptotics {
    pub tends_to_infinity: Verdict,
    pub bounded: Verdict,
    pub unbounded: Verdict,
    pub eventually_le_k_minus_2: Verdict,
    pub eventually_ne_1: Verdict,
}

/// Finite-horizon asymptotics of `Q(1..=m)` from dyadic windows `[2^i, 2^{i+1})`.
pub fn q_asymptotics(q: &[usize]) -> QAsymptotics {
    let m = q.len();
    let at = |k: usize| q[k - 1];
    let mut windows: Vec<(usize, usize, usize, usize)> = Vec::new(); // (start, end, min, max)
    let mut a = 1;
    while a <= m {
        let b = (2 * a - 1).min(m);
        let vals: Vec<usize> = (a..=b).map(at).collect();
        windows.push((a, b, *vals.iter().min().unwrap(), *vals.iter().max().unwrap()));
        a *= 2;
    }
    let wjson: Vec<_> = windows.iter().map(|w| json!({"from": w.0, "to": w.1, "min": w.2, "max": w.3})).collect();
    let depth = m as u64;
    let rule_inf = "kneading-map-limit";
    let rule_bd = "kneading-map-bounded";
    if windows.len() < 4 {
        let u = |r: &str| Verdict::undetermined(r, "too few values", json!({"windows": wjson}));
        return QAsymptotics {
            tends_to_infinity: u(rule_inf),
            bounded: u(rule_bd),
            unbounded: u(rule_bd),
            eventually_le_k_minus_2: u("kneading-map-le-k-minus-2"),
            eventually_ne_1: u("kneading-map-ne-1"),
        };
    }
    let tail = &windows[windows.len() - 3..];
    let mins_increase = tail.windows(2).all(|p| p[1].2 > p[0].2);
    let tends = if mins_increase {
        Verdict::evidence(
            rule_inf,
            depth,
            json!({"windows": wjson, "tail_minima": tail.iter().map(|w| w.2).collect::<Vec<_>>()}),
        )
    } else {
        Verdict::counter_evidence(rule_inf, depth, json!({"windows": wjson}))
    };
    let last = windows.last().unwrap();
    let earlier_max = windows[..windows.len() - 1].iter().map(|w| w.3).max().unwrap();
    let record_in_last = last.3 > earlier_max;
    let max_all = q.iter().copied().max().unwrap();
    let bounded = if !record_in_last && !mins_increase {
        Verdict::evidence(rule_bd, depth, json!({"max": max_all, "windows": wjson}))
    } else {
        Verdict::counter_evidence(rule_bd, depth, json!({"max": max_all, "record_in_last_window": record_in_last}))
    };
    let unbounded = if record_in_last {
        Verdict::evidence(rule_bd, depth, json!({"max": max_all}))
    } else {
        Verdict::counter_evidence(rule_bd, depth, json!({"max": max_all}))
    };
    let half = m / 2;
    let bad_le: Vec<usize> = (1..=m).filter(|&k| at(k) + 2 > k).collect();
    let le = if bad_le.iter().all(|&k| k <= half) {
        Verdict::evidence("kneading-map-le-k-minus-2", depth, json!({"violations": bad_le}))
    } else {
        Verdict::counter_evidence("kneading-map-le-k-minus-2", depth, json!({"violations": bad_le}))
    };
    let ones_at: Vec<usize> = (1..=m).filter(|&k| at(k) == 1).collect();
    let ne1 = if ones_at.iter().all(|&k| k <= half) {
        Verdict::evidence("kneading-map-ne-1", depth, json!({"positions": ones_at}))
    } else {
        Verdict::counter_evidence("kneading-map-ne-1", depth, json!({"positions": ones_at}))
    };
    QAsymptotics { tends_to_infinity: tends, bounded, unbounded, eventually_le_k_minus_2: le, eventually_ne_1: ne1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_cutting_data() {
        let nu = KneadingPrefix::parse("1.0.0.0.101").unwrap();
        let cd = cutting_data(&nu).unwrap();
        assert_eq!(cd.s, vec![1, 2, 3, 4, 7]);
        assert_eq!(cd.q, vec![0, 0, 0, 2]);
        assert_eq!(cd.cocut.times, vec![5, 6]);
        assert!(cd.cocut.censored);
        assert_eq!(cd.beta[7], 3);
        assert_eq!(nu.dotted(), "1.0.0.0.101");
    }

    #[test]
    fn wrong_dots_rejected() {
        assert!(KneadingPrefix::parse("10.00101").is_err());
    }

    #[test]
    fn example35_values() {
        let expect = [(1, 0), (2, 0), (3, 1), (4, 0), (5, 2), (6, 4), (7, 2), (8, 5), (9, 7), (10, 5)];
        for (k, v) in expect {
            assert_eq!(example35_q(k), v, "k = {}", k);
        }
    }

    #[test]
    fn eleven_is_refuted() {
        let nu = KneadingPrefix::literal(vec![1, 1]).unwrap();
        assert!(admissible_disjoint(&nu).is_refuted());
        assert!(admissible_q_nu(&nu).is_refuted());
        assert_eq!(admissible_disjoint(&nu).witness["position"], 2);
    }
}
