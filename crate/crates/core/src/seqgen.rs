//! Constructive generation of a kneading sequence with dense critical orbit
//! whose cutting-time orbit `{c_{S_k}}` stays away from `c_1`.
//!
//! Each step finds the shortest pair of admissible words `v, v'` (differing
//! only in the last symbol) that do not yet both end at cutting times, and
//! appends four blocks that make them do so while keeping `Q(j) ≤ j − 2`
//! and `Q(j) ≠ 1`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse_limit::tau_data;
use crate::kneading::{admissible_disjoint, admissible_q_nu, cutting_data, word_string, KneadingPrefix};
use crate::verdict::Status;

/// `ν_1…ν_7 = 1.0.0.0.101`.
pub const SEED: [u8; 7] = [1, 0, 0, 0, 1, 0, 1];
/// Cutting index of the seed's last cutting time (`S_4 = 7`).
pub const SEED_K: usize = 4;
/// The first extension as displayed alongside the seed.
pub const DISPLAYED_FIRST_EXTENSION: &str = "1.0.0.0.101.0.101.10001011";
pub const DEFAULT_MAX_LEN: usize = 12;

fn flip_last(w: &[u8]) -> Vec<u8> {
    let mut out = w.to_vec();
    if let Some(b) = out.last_mut() {
        *b ^= 1;
    }
    out
}

/// `ν_1…ν_{m−1} ν'_m`.
fn switched_prefix(nu: &[u8], m: usize) -> Vec<u8> {
    flip_last(&nu[..m])
}

/// Order of `c_a` and `c_b` read from ν: the first disagreement of
/// `ν_a ν_{a+1}…` and `ν_b ν_{b+1}…` decides, reversed after an odd number of ones.
fn cmp_orbit(nu: &[u8], a: usize, b: usize) -> Option<Ordering> {
    if a == b {
        return Some(Ordering::Equal);
    }
    let mut odd = false;
    let (mut i, mut j) = (a, b);
    while i <= nu.len() && j <= nu.len() {
        let (x, y) = (nu[i - 1], nu[j - 1]);
        if x != y {
            let o = x.cmp(&y);
            return Some(if odd { o.reverse() } else { o });
        }
        odd ^= x == 1;
        i += 1;
        j += 1;
    }
    None
}

fn extreme(nu: &[u8], idx: &[usize], want: Ordering) -> Option<usize> {
    let mut best = *idx.first()?;
    for &n in &idx[1..] {
        if cmp_orbit(nu, n, best)? == want {
            best = n;
        }
    }
    Some(best)
}

/// Whether `w` occurs in the itinerary of some point of the core
/// `[c_2, c_1]`, decided from ν alone. `None` when ν is too short to
/// compare the relevant orbit points.
pub fn word_admissible(w: &[u8], nu: &KneadingPrefix) -> Option<bool> {
    if nu.len() < w.len() + 2 {
        return None;
    }
    let mut ext = vec![1u8];
    for j in 0..=w.len() {
        let td = tau_data(&ext, nu).ok()?;
        if td.nl.is_empty() {
            return Some(false);
        }
        let lo = extreme(&nu.bits, &td.nl, Ordering::Greater)?;
        let hi = extreme(&nu.bits, &td.nr, Ordering::Less)?;
        if cmp_orbit(&nu.bits, lo, hi)? == Ordering::Greater {
            return Some(false);
        }
        if j == w.len() {
            return Some(true);
        }
        // c_n lies right of c exactly when ν_n = 1.
        if (w[j] == 0 && nu.bits[lo - 1] == 1) || (w[j] == 1 && nu.bits[hi - 1] == 0) {
            return Some(false);
        }
        ext.push(w[j]);
    }
    unreachable!()
}

/// Words of length `≤ max_len` ending at a cutting time, and the subset `W`
/// of those whose last-letter switch also ends at a cutting time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordLedger {
    pub k: usize,
    pub nu: KneadingPrefix,
    pub max_len: usize,
    pub ends: BTreeSet<Vec<u8>>,
    pub w: BTreeSet<Vec<u8>>,
    /// Number of cutting times already absorbed into `ends`.
    scanned: usize,
}

fn words_ending_at(nu: &[u8], t: usize, max_len: usize) -> impl Iterator<Item = Vec<u8>> + '_ {
    (1..=t.min(max_len)).map(move |l| nu[t - l..t].to_vec())
}

impl WordLedger {
    pub fn seed(max_len: usize) -> WordLedger {
        WordLedger::new(KneadingPrefix::literal(SEED.to_vec()).unwrap(), max_len).unwrap()
    }

    pub fn new(nu: KneadingPrefix, max_len: usize) -> Result<WordLedger> {
        let mut l = WordLedger { k: 0, nu, max_len, ends: BTreeSet::new(), w: BTreeSet::new(), scanned: 0 };
        l.absorb()?;
        Ok(l)
    }

    /// Incremental update after `nu` has been extended.
    fn absorb(&mut self) -> Result<()> {
        let cd = cutting_data(&self.nu)?;
        for &t in &cd.s[self.scanned..] {
            for x in words_ending_at(&self.nu.bits, t, self.max_len) {
                let y = flip_last(&x);
                if self.ends.contains(&y) {
                    self.w.insert(y);
                    self.w.insert(x.clone());
                }
                self.ends.insert(x);
            }
        }
        self.scanned = cd.s.len();
        self.k = cd.s.len() - 1;
        Ok(())
    }

    fn extend(&self, tail: &[u8]) -> Result<WordLedger> {
        let mut next = self.clone();
        next.nu.bits.extend_from_slice(tail);
        next.absorb()?;
        Ok(next)
    }

    /// `(ends, W)` recomputed from scratch.
    pub fn recompute(&self) -> Result<(BTreeSet<Vec<u8>>, BTreeSet<Vec<u8>>)> {
        let cd = cutting_data(&self.nu)?;
        let mut ends = BTreeSet::new();
        for &t in &cd.s {
            ends.extend(words_ending_at(&self.nu.bits, t, self.max_len));
        }
        let w = ends.iter().filter(|x| ends.contains(&flip_last(x))).cloned().collect();
        Ok((ends, w))
    }

    pub fn is_sound(&self) -> Result<bool> {
        let (ends, w) = self.recompute()?;
        Ok(ends == self.ends && w == self.w && w.iter().all(|x| w.contains(&flip_last(x))))
    }

    fn s(&self) -> Result<Vec<usize>> {
        Ok(cutting_data(&self.nu)?.s)
    }
}

/// Lexicographically first shortest pair `(x0, x1)` of admissible words not in `W`.
pub fn shortest_missing_pair(ledger: &WordLedger) -> Result<(Vec<u8>, Vec<u8>)> {
    for len in 1..=ledger.max_len {
        for code in 0..(1u64 << (len - 1)) {
            let stem: Vec<u8> = (0..len - 1).rev().map(|i| ((code >> i) & 1) as u8).collect();
            let mut v = stem.clone();
            v.push(0);
            if ledger.w.contains(&v) {
                continue;
            }
            let vp = flip_last(&v);
            let adm = |x: &[u8]| {
                word_admissible(x, &ledger.nu).ok_or_else(|| Error::unresolved("word admissibility", x.len()))
            };
            if adm(&v)? && adm(&vp)? {
                return Ok((v, vp));
            }
        }
    }
    Err(Error::ConstructionStuck {
        stage: "missing pair".into(),
        dump: format!("no missing pair up to length {} in ν = {}", ledger.max_len, ledger.nu.dotted()),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionPlan {
    pub v: String,
    pub v_prime: String,
    pub w: String,
    pub u: String,
    pub u_prime: String,
    /// The roles of `v` and `v'` were swapped so that `u'` has an even number of ones.
    pub swapped: bool,
    pub n_prime: usize,
    /// The extra block used when the smallest `n'` equals the current cutting index.
    pub n_prime_block: String,
    pub r: usize,
    pub block_i: String,
    pub block_ii: String,
    pub block_iii: String,
    pub block_iv: String,
    /// `Q` on the new cutting times, in order.
    pub new_q: Vec<usize>,
    /// `S_{Q²(n')} < |w|`, the inequality behind the block II cutting-time argument.
    pub q2_bound_holds: bool,
    /// `|u|` is a cutting time other than 2.
    pub u_cutting: bool,
    /// The step reproduced the displayed first extension verbatim.
    pub compat: bool,
}

fn stuck(stage: &str, ledger: &WordLedger, detail: String) -> Error {
    Error::ConstructionStuck {
        stage: stage.into(),
        dump: format!("ν = {}; k = {}; {}", ledger.nu.dotted(), ledger.k, detail),
    }
}

fn checkers_accept(nu: &KneadingPrefix) -> bool {
    admissible_disjoint(nu).status != Status::Refuted && admissible_q_nu(nu).status != Status::Refuted
}

/// Postconditions shared by every step: both checkers accept, `Q(j) ≤ j − 2`
/// and `Q(j) ≠ 1` on the new cutting times, and `v, v'` end at cutting times.
fn verify_step(old: &WordLedger, new: &WordLedger, v: &[u8], vp: &[u8]) -> Result<Vec<usize>> {
    if !checkers_accept(&new.nu) {
        return Err(stuck("admissibility", new, "a checker refutes the extension".into()));
    }
    let cd = cutting_data(&new.nu)?;
    let mut new_q = Vec::new();
    for j in (old.k + 1)..cd.s.len() {
        let q = cd.q_at(j);
        if q == 1 || q + 2 > j {
            return Err(stuck("kneading map", new, format!("Q({}) = {}", j, q)));
        }
        new_q.push(q);
    }
    if cd.s.last() != Some(&new.nu.len()) {
        return Err(stuck("final cutting time", new, "prefix does not end at a cutting time".into()));
    }
    if !new.ends.contains(v) || !new.ends.contains(vp) {
        return Err(stuck(
            "coverage",
            new,
            format!("{} / {} not ending at cutting times", word_string(v), word_string(vp)),
        ));
    }
    Ok(new_q)
}

fn compat_step(ledger: &WordLedger) -> Result<(WordLedger, ExtensionPlan)> {
    let target = KneadingPrefix::parse(DISPLAYED_FIRST_EXTENSION)?;
    let (v, vp) = shortest_missing_pair(ledger)?;
    let next = ledger.extend(&target.bits[ledger.nu.len()..])?;
    let new_q = verify_step(ledger, &next, &v, &vp)?;
    let plan = ExtensionPlan {
        v: word_string(&v),
        v_prime: word_string(&vp),
        w: String::new(),
        u: String::new(),
        u_prime: String::new(),
        swapped: false,
        n_prime: 0,
        n_prime_block: String::new(),
        r: 0,
        block_i: String::new(),
        block_ii: String::new(),
        block_iii: String::new(),
        block_iv: word_string(&target.bits[ledger.nu.len()..]),
        new_q,
        q2_bound_holds: true,
        u_cutting: true,
        compat: true,
    };
    Ok((next, plan))
}

/// One application of blocks I–IV. With `compat` set and the ledger at the
/// seed, the displayed first extension is used instead (and re-verified).
pub fn extend_step(ledger: &WordLedger, compat: bool) -> Result<(WordLedger, ExtensionPlan)> {
    if compat && ledger.nu.bits == SEED {
        return compat_step(ledger);
    }
    let (x0, x1) = shortest_missing_pair(ledger)?;
    // w: the longest proper common prefix lying in W (single letters always do).
    let stem = &x0[..x0.len() - 1];
    let wl = (1..=stem.len()).rev().find(|&l| ledger.w.contains(&stem[..l])).unwrap_or(0);
    if wl == 0 {
        return Err(stuck("split", ledger, format!("no prefix of {} in W", word_string(stem))));
    }
    let w = stem[..wl].to_vec();
    let swapped = crate::kneading::ones(&x1[wl..]).is_multiple_of(2);
    let (v, vp) = if swapped { (x0.clone(), x1.clone()) } else { (x1.clone(), x0.clone()) };
    let (u, up) = (v[wl..].to_vec(), vp[wl..].to_vec());
    let wp = flip_last(&w);

    // n': smallest index > 1 with w' a suffix of ν_1…ν_{S_{n'}}.
    let mut cur = ledger.clone();
    let mut n_prime_block = Vec::new();
    let s = cur.s()?;
    let suffix_at = |s: &[usize], nu: &[u8], n: usize| s[n] >= wp.len() && nu[s[n] - wp.len()..s[n]] == wp[..];
    let Some(mut n_prime) = (2..s.len()).find(|&n| suffix_at(&s, &cur.nu.bits, n)) else {
        return Err(stuck("n'", ledger, format!("w' = {} ends at no S_n with n > 1", word_string(&wp))));
    };
    if n_prime == cur.k {
        // Extend by one block ν_1…ν'_{S_{k−1}}; the ledger is refreshed afterwards.
        n_prime_block = switched_prefix(&cur.nu.bits, s[cur.k - 1]);
        cur = cur.extend(&n_prime_block)?;
        n_prime = (2..cur.k).find(|&n| suffix_at(&s, &cur.nu.bits, n)).unwrap_or(n_prime);
    }
    let mut bits = cur.nu.bits.clone();
    let s = cutting_data(&cur.nu)?.s;
    let cd = cutting_data(&cur.nu)?;

    // Block I: bring Q down to 2 one step at a time.
    let mut block_i = Vec::new();
    for m in (2..cd.q_at(cur.k)).rev() {
        block_i.extend(switched_prefix(&bits, s[m]));
    }
    bits.extend_from_slice(&block_i);

    // Block II: ν_1…ν'_{S_{n'}} u', which must end at a cutting time.
    let mut block_ii = switched_prefix(&bits, s[n_prime]);
    block_ii.extend_from_slice(&up);
    bits.extend_from_slice(&block_ii);
    let after_ii = KneadingPrefix::literal(bits.clone())?;
    let cd_ii = cutting_data(&after_ii)
        .map_err(|_| stuck("block II", &cur, format!("u' = {} breaks admissibility", word_string(&up))))?;
    let Some(j_ii) = cd_ii.index_of_cutting_time(bits.len()) else {
        return Err(stuck("block II", &cur, format!("u' = {} does not end at a cutting time", word_string(&up))));
    };
    let q2 = cd.q_at(cd.q_at(n_prime));
    let q2_bound_holds = s[q2] < w.len();
    let u_cutting = cd_ii.is_cutting_time(u.len()) && u.len() != 2;

    // Blocks III and IV: the smallest admissible r ≠ 1, then the whole prefix with its last symbol switched.
    let block_iv = switched_prefix(&bits, bits.len());
    let mut chosen = None;
    for r in (0..j_ii).filter(|&r| r != 1) {
        let mut cand = bits.clone();
        let block_iii = switched_prefix(&bits, cd_ii.s[r]);
        cand.extend_from_slice(&block_iii);
        cand.extend_from_slice(&block_iv);
        if checkers_accept(&KneadingPrefix::literal(cand)?) {
            chosen = Some((r, block_iii));
            break;
        }
    }
    let Some((r, block_iii)) = chosen else {
        return Err(stuck("block III", &cur, format!("no admissible r below {}", j_ii)));
    };
    let mut tail = block_i.clone();
    tail.extend_from_slice(&block_ii);
    tail.extend_from_slice(&block_iii);
    tail.extend_from_slice(&block_iv);
    let next = cur.extend(&tail)?;
    let mut new_q = verify_step(ledger, &next, &v, &vp)?;
    if !u_cutting {
        return Err(stuck("split", &next, format!("|u| = {} is not a cutting time other than 2", u.len())));
    }
    new_q.shrink_to_fit();
    let plan = ExtensionPlan {
        v: word_string(&v),
        v_prime: word_string(&vp),
        w: word_string(&w),
        u: word_string(&u),
        u_prime: word_string(&up),
        swapped,
        n_prime,
        n_prime_block: word_string(&n_prime_block),
        r,
        block_i: word_string(&block_i),
        block_ii: word_string(&block_ii),
        block_iii: word_string(&block_iii),
        block_iv: word_string(&block_iv),
        new_q,
        q2_bound_holds,
        u_cutting,
        compat: false,
    };
    Ok((next, plan))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub length: usize,
    /// Largest `L` such that every admissible word of length `≤ L` ends at a cutting time.
    pub coverage_len: usize,
    /// The same with both the word and its switch required (membership in `W`).
    pub pair_coverage_len: usize,
    /// Largest `L` such that every admissible word of length `≤ L` is a prefix of a member of `W`.
    pub prefix_coverage_len: usize,
    /// Admissible words of length `coverage_len + 1` not ending at a cutting time.
    pub uncovered: Vec<String>,
    pub q_ne_1: bool,
    pub q_le_k_minus_2: bool,
    /// First cutting index beyond the seed violating either `Q` clause.
    pub first_violation: Option<usize>,
    pub checkers_accept: bool,
    pub ledger_sound: bool,
    pub u_cutting: bool,
    pub q2_bound_holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generated {
    pub nu: KneadingPrefix,
    pub ledger: WordLedger,
    pub steps: Vec<ExtensionPlan>,
    pub certificate: Certificate,
}

/// Certificate clauses recomputed from `nu` alone.
pub fn certify(nu: &KneadingPrefix, max_len: usize) -> Result<Certificate> {
    let ledger = WordLedger::new(nu.clone(), max_len)?;
    let (ends, w) = ledger.recompute()?;
    let cd = cutting_data(nu)?;
    let mut first_violation = None;
    let (mut ne1, mut le) = (true, true);
    for k in 1..cd.s.len() {
        if cd.s[k] <= SEED.len() {
            continue;
        }
        let q = cd.q_at(k);
        ne1 &= q != 1;
        le &= q + 2 <= k;
        if (q == 1 || q + 2 > k) && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    let mut coverage_len = 0;
    let mut pair_coverage_len = 0;
    let mut pairs_ok = true;
    let mut prefix_coverage_len = 0;
    let mut prefix_ok = true;
    let mut prefixes = BTreeSet::new();
    for x in &w {
        for l in 1..=x.len() {
            prefixes.insert(x[..l].to_vec());
        }
    }
    let mut uncovered = Vec::new();
    for len in 1..=max_len.min(nu.len().saturating_sub(2)) {
        let mut ok = true;
        for code in 0..(1u64 << len) {
            let x: Vec<u8> = (0..len).rev().map(|i| ((code >> i) & 1) as u8).collect();
            match word_admissible(&x, nu) {
                Some(true) => {
                    if !ends.contains(&x) {
                        ok = false;
                        if len == coverage_len + 1 {
                            uncovered.push(word_string(&x));
                        }
                    }
                    pairs_ok &= w.contains(&x);
                    prefix_ok &= prefixes.contains(&x);
                }
                Some(false) => {}
                None => {
                    ok = false;
                    prefix_ok = false;
                }
            }
        }
        if prefix_ok {
            prefix_coverage_len = len;
        }
        if !ok {
            continue;
        }
        if coverage_len + 1 == len {
            coverage_len = len;
        }
        if pairs_ok && pair_coverage_len + 1 == len {
            pair_coverage_len = len;
        }
    }
    Ok(Certificate {
        length: nu.len(),
        coverage_len,
        pair_coverage_len,
        prefix_coverage_len,
        uncovered,
        q_ne_1: ne1,
        q_le_k_minus_2: le,
        first_violation,
        checkers_accept: checkers_accept(nu),
        ledger_sound: true,
        u_cutting: true,
        q2_bound_holds: true,
    })
}

/// Extend the seed until the prefix has at least `target` symbols.
pub fn generate(target: usize, compat: bool) -> Result<Generated> {
    generate_from(WordLedger::seed(DEFAULT_MAX_LEN), target, compat)
}

/// Resume from a saved ledger.
pub fn generate_from(start: WordLedger, target: usize, compat: bool) -> Result<Generated> {
    if target < SEED.len() {
        return Err(Error::Domain(format!("target length {} is below the seed length {}", target, SEED.len())));
    }
    let mut ledger = start;
    let mut steps = Vec::new();
    let mut sound = ledger.is_sound()?;
    while ledger.nu.len() < target {
        let (next, plan) = extend_step(&ledger, compat)?;
        sound &= next.is_sound()?;
        ledger = next;
        steps.push(plan);
    }
    let mut certificate = certify(&ledger.nu, ledger.max_len)?;
    certificate.ledger_sound = sound;
    certificate.u_cutting = steps.iter().all(|p| p.u_cutting);
    certificate.q2_bound_holds = steps.iter().all(|p| p.q2_bound_holds);
    Ok(Generated { nu: ledger.nu.clone(), ledger, steps, certificate })
}
