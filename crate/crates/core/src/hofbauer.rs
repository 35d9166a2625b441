//! Hofbauer tower levels, closest precritical points, the cells Υ_k and the
//! first-return-type map F.

use std::cmp::Ordering;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arith::{
    critical_orbit_at, f64_down, f64_up, half, initial_bits, sign_rel_c, tent, to_f64, ArithError, Orbit, Scalar,
    SignRelC, SlopeParam,
};
use crate::error::{Error, Result};
use crate::kneading::{cutting_data, q_asymptotics, CuttingData, KneadingPrefix, Source};
use crate::verdict::Verdict;

const MAX_ORBIT: usize = 1 << 20;

/// Run `f` at increasing precision until it stops reporting unresolved decisions.
pub fn escalate<T>(slope: &SlopeParam, start: u32, mut f: impl FnMut(u32) -> Result<T>) -> Result<T> {
    if slope.is_exact() {
        return f(0);
    }
    let cap = slope.prec_cap();
    let mut bits = start.clamp(64, cap);
    loop {
        match f(bits) {
            Err(e) if e.is_precision() => {
                if bits >= cap {
                    let index = match e {
                        Error::Unresolved { index, .. } => index,
                        Error::Arith(ArithError::PrecisionExhausted { index, .. }) => index,
                        _ => 0,
                    };
                    return Err(Error::Arith(ArithError::PrecisionExhausted { index, cap }));
                }
                bits = (bits * 2).min(cap);
            }
            other => return other,
        }
    }
}

/// Orbit, kneading data and closest precritical points of one slope at one precision.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub slope: SlopeParam,
    pub bits: Option<u32>,
    pub s: Scalar,
    pub orbit: Orbit,
    pub nu: KneadingPrefix,
    pub cd: CuttingData,
    z: Vec<Scalar>,
    // ẑ_0 keeps its true value when z_0 is moved to c_2.
    zhat0: Option<Scalar>,
    pub kappa3: bool,
}

impl Geometry {
    /// Geometry containing at least `cuts + 1` cutting times and `min_len` orbit points.
    pub fn at_bits(slope: &SlopeParam, cuts: usize, min_len: usize, bits: u32) -> Result<Geometry> {
        let mut len = min_len.max(16);
        loop {
            let orbit = critical_orbit_at(slope, len, bits)?;
            let mut sym = Vec::with_capacity(len);
            let mut stop = None;
            for n in 1..=len {
                match orbit.signs[n] {
                    SignRelC::Below => sym.push(0),
                    SignRelC::Above => sym.push(1),
                    SignRelC::AtC => return Err(ArithError::CriticalHit(n).into()),
                    SignRelC::Unresolved => {
                        stop = Some(n);
                        break;
                    }
                }
            }
            let nu = KneadingPrefix { bits: sym, source: Source::FromSlope(slope.label()), finite_orbit: orbit.finite };
            let cd = cutting_data(&nu)
                .map_err(|e| Error::Inconsistent(format!("kneading prefix of a slope is not admissible: {}", e)))?;
            let enough = cd.s.len() > cuts && nu.len() >= min_len.min(len);
            if enough {
                return Geometry::finish(slope, bits, orbit, nu, cd, cuts);
            }
            if let Some(n) = stop {
                return Err(Error::unresolved("orbit sign", n));
            }
            if len >= MAX_ORBIT {
                return Err(Error::Domain("orbit length limit reached".into()));
            }
            len *= 2;
        }
    }

    fn finish(
        slope: &SlopeParam,
        bits: u32,
        orbit: Orbit,
        nu: KneadingPrefix,
        cd: CuttingData,
        cuts: usize,
    ) -> Result<Geometry> {
        let s = slope.at(bits.max(64))?;
        let s = if slope.is_exact() { s } else { s.to_interval(bits).into() };
        let kappa3 = cd.kappa == Some(3);
        let c = Scalar::half();
        let mut z = Vec::with_capacity(cuts + 1);
        let mut zhat0 = None;
        for k in 0..=cuts {
            let sk = cd.s[k];
            let d = orbit.values[sk].sub(&c).abs();
            let zk = c.sub(&d.div(&s.pow(sk))?);
            if k == 0 && kappa3 {
                zhat0 = Some(zk.one_minus());
                z.push(orbit.values[2].clone());
            } else {
                z.push(zk);
            }
        }
        let bits = if slope.is_exact() { None } else { Some(bits) };
        Ok(Geometry { slope: slope.clone(), bits, s, orbit, nu, cd, z, zhat0, kappa3 })
    }

    /// Geometry with escalation over precision.
    pub fn build(slope: &SlopeParam, cuts: usize, min_len: usize) -> Result<Geometry> {
        let start = initial_bits(slope, min_len.max(64));
        escalate(slope, start, |bits| Geometry::at_bits(slope, cuts, min_len, bits))
    }

    pub fn c(&self, n: usize) -> &Scalar {
        &self.orbit.values[n]
    }

    pub fn orbit_len(&self) -> usize {
        self.orbit.len()
    }

    /// Number of precritical indices available (`z_0..z_{K-1}`).
    pub fn num_z(&self) -> usize {
        self.z.len()
    }

    /// `z_k`, with `z_{-1} = c_2`.
    pub fn z(&self, k: i64) -> Scalar {
        if k < 0 {
            self.c(2).clone()
        } else {
            self.z[k as usize].clone()
        }
    }

    /// `ẑ_k = 1 − z_k`, with `ẑ_{-1} = c_1`. When κ = 3 only `z_0` is moved to `c_2`;
    /// `ẑ_0` stays the true closest precritical point, which lies in `(c, c_1)`.
    pub fn zhat(&self, k: i64) -> Scalar {
        if k < 0 {
            self.c(1).clone()
        } else if let (0, Some(h)) = (k, &self.zhat0) {
            h.clone()
        } else {
            self.z[k as usize].one_minus()
        }
    }

    /// `T^n(x)` using this geometry's slope enclosure.
    pub fn iterate(&self, x: &Scalar, n: usize) -> Result<Scalar> {
        let mut y = x.clone();
        for _ in 0..n {
            y = tent(&self.s, &y)?.clamp_unit();
        }
        Ok(y)
    }

    fn in_core(&self, x: &Scalar) -> Result<()> {
        let lo_ok = matches!(x.cmp_certified(self.c(2)), Some(Ordering::Greater | Ordering::Equal));
        let hi_ok = matches!(x.cmp_certified(self.c(1)), Some(Ordering::Less | Ordering::Equal));
        if lo_ok && hi_ok {
            return Ok(());
        }
        let outside = matches!(x.cmp_certified(self.c(2)), Some(Ordering::Less))
            || matches!(x.cmp_certified(self.c(1)), Some(Ordering::Greater));
        if outside {
            Err(Error::Domain(format!("{} is outside the core [c_2, c_1]", x)))
        } else {
            Err(Error::unresolved("core membership", 0))
        }
    }

    /// The unique `k` with `x ∈ Υ_k`; `Ok(None)` when more precritical points are needed.
    pub fn upsilon(&self, x: &Scalar) -> Result<Option<usize>> {
        self.in_core(x)?;
        match sign_rel_c(x) {
            SignRelC::AtC => Err(Error::Domain("Υ cells exclude c".into())),
            SignRelC::Unresolved => Err(Error::unresolved("side of c", 0)),
            SignRelC::Below => {
                for k in 0..self.z.len() {
                    match x.cmp_certified(&self.z[k]) {
                        Some(Ordering::Less) => return Ok(Some(k)),
                        Some(_) => {}
                        None => return Err(Error::unresolved("comparison with z_k", k)),
                    }
                }
                Ok(None)
            }
            SignRelC::Above => {
                for k in 0..self.z.len() {
                    match x.cmp_certified(&self.zhat(k as i64)) {
                        Some(Ordering::Greater) => return Ok(Some(k)),
                        Some(_) => {}
                        None => return Err(Error::unresolved("comparison with zhat_k", k)),
                    }
                }
                Ok(None)
            }
        }
    }

    /// Cell of the orbit point `c_n`, using the convention `z_0 = c_2` when κ = 3.
    pub fn upsilon_of_orbit_point(&self, n: usize) -> Result<Option<usize>> {
        if n == 2 && self.kappa3 {
            // c_2 = z_0 by convention, so c_2 ∈ [z_0, z_1).
            return match self.c(2).cmp_certified(&self.z[1.min(self.z.len() - 1)]) {
                Some(Ordering::Less) if self.z.len() > 1 => Ok(Some(1)),
                _ if self.z.len() <= 1 => Ok(None),
                Some(_) => Err(Error::Inconsistent("c_2 not below z_1".into())),
                None => Err(Error::unresolved("comparison with z_1", 1)),
            };
        }
        self.upsilon(self.c(n))
    }

    /// `F(y) = T^{S_k}(y)` for `y ∈ Υ_k`.
    pub fn f_apply(&self, y: &Scalar) -> Result<Option<FValue>> {
        match self.upsilon(y)? {
            None => Ok(None),
            Some(k) => Ok(Some(FValue { k, value: self.iterate(y, self.cd.s[k])? })),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FValue {
    pub k: usize,
    pub value: Scalar,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TowerLevel {
    pub n: usize,
    /// `(n, β(n))`; index 0 stands for `c` itself.
    pub endpoint_indices: (usize, usize),
    #[serde(skip)]
    pub numeric: Option<(Scalar, Scalar)>,
    #[serde(skip)]
    pub length: Option<Scalar>,
    pub contains_c: bool,
}

/// Index form of `D_n = [c_n, c_{β(n)}]`.
pub fn tower_level_nu(cd: &CuttingData, n: usize) -> Result<TowerLevel> {
    if n == 0 || n > cd.horizon {
        return Err(Error::Domain(format!("level {} outside 1..={}", n, cd.horizon)));
    }
    Ok(TowerLevel {
        n,
        endpoint_indices: (n, cd.beta[n]),
        numeric: None,
        length: None,
        contains_c: cd.is_cutting_time(n),
    })
}

fn level_in(geom: &Geometry, n: usize) -> Result<TowerLevel> {
    let mut lvl = tower_level_nu(&geom.cd, n)?;
    let a = geom.c(n).clone();
    let b = geom.c(lvl.endpoint_indices.1).clone();
    let ordered = match a.cmp_certified(&b) {
        Some(Ordering::Less) | Some(Ordering::Equal) => (a.clone(), b.clone()),
        Some(Ordering::Greater) => (b.clone(), a.clone()),
        None => return Err(Error::unresolved("tower endpoint order", n)),
    };
    lvl.length = Some(a.sub(&b).abs());
    lvl.numeric = Some(ordered);
    Ok(lvl)
}

/// `D_n` with certified numeric endpoints.
pub fn tower_level(slope: &SlopeParam, n: usize) -> Result<TowerLevel> {
    let start = initial_bits(slope, n);
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, 0, n, bits)?;
        level_in(&geom, n)
    })
}

/// Levels `D_1..D_N`.
pub fn tower_levels(geom: &Geometry, upto: usize) -> Result<Vec<TowerLevel>> {
    (1..=upto.min(geom.nu.len())).map(|n| level_in(geom, n)).collect()
}

pub fn tower(slope: &SlopeParam, upto: usize) -> Result<Vec<TowerLevel>> {
    let start = initial_bits(slope, upto);
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, 0, upto, bits)?;
        tower_levels(&geom, upto)
    })
}

/// Check the index form against the inductive definition
/// `D_{n+1} = [c_{n+1}, c_1]` if `c ∈ D_n`, else `T(D_n)`, and that `c ∈ D_n`
/// exactly at cutting times.
pub fn tower_crosscheck(geom: &Geometry, upto: usize) -> Result<()> {
    let c = Scalar::half();
    let mut d = (c.clone(), geom.c(1).clone());
    for n in 1..=upto.min(geom.nu.len()) {
        let lvl = level_in(geom, n)?;
        let (lo, hi) = lvl.numeric.clone().unwrap();
        let (dl, dh) = (&d.0, &d.1);
        let agree = |x: &Scalar, y: &Scalar| x.lo() <= y.hi() && y.lo() <= x.hi();
        if !(agree(&lo, dl) && agree(&hi, dh)) {
            return Err(Error::Inconsistent(format!("tower level {} disagrees with the recursion", n)));
        }
        let contains = if n == 1 {
            true
        } else {
            match (sign_rel_c(&lo), sign_rel_c(&hi)) {
                (SignRelC::Below, SignRelC::Above) => true,
                (SignRelC::Below, SignRelC::Below) | (SignRelC::Above, SignRelC::Above) => false,
                _ => return Err(Error::unresolved("c ∈ D_n", n)),
            }
        };
        if contains != geom.cd.is_cutting_time(n) {
            return Err(Error::Inconsistent(format!("c ∈ D_{} disagrees with cutting times", n)));
        }
        if n == geom.nu.len() {
            break;
        }
        d = if contains {
            (geom.c(n + 1).clone(), geom.c(1).clone())
        } else {
            let a = tent(&geom.s, dl)?;
            let b = tent(&geom.s, dh)?;
            match a.cmp_certified(&b) {
                Some(Ordering::Greater) => (b, a),
                Some(_) => (a, b),
                None => return Err(Error::unresolved("image order", n)),
            }
        };
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PrecriticalPair {
    pub k: i64,
    pub z: Scalar,
    pub zhat: Scalar,
    pub flags: Vec<String>,
}

fn certify_precritical(geom: &Geometry, k: usize) -> Result<()> {
    let sk = geom.cd.s[k];
    let zk = geom.z(k as i64);
    let mut y = zk.clone();
    for j in 1..sk {
        y = tent(&geom.s, &y)?.clamp_unit();
        let want = geom.orbit.signs[j];
        let got = sign_rel_c(&y);
        if got == SignRelC::Unresolved {
            return Err(Error::unresolved("precritical itinerary", j));
        }
        if got != want {
            return Err(Error::Inconsistent(format!("T^{}([z_{}, c]) contains c", j, k)));
        }
    }
    let last = tent(&geom.s, &y)?;
    let ok = match &last {
        Scalar::Exact(v) => *v == half(),
        Scalar::Interval(i) => i.contains(&half()),
    };
    if !ok {
        return Err(Error::Inconsistent(format!("T^S_{}(z_{}) does not enclose c", k, k)));
    }
    if k > 0 || !geom.kappa3 {
        let prev = geom.z(k as i64 - 1);
        match prev.cmp_certified(&zk) {
            Some(Ordering::Less) => {}
            Some(_) => return Err(Error::Inconsistent(format!("z_{} not increasing", k))),
            None => return Err(Error::unresolved("z order", k)),
        }
    }
    Ok(())
}

/// `z_k, ẑ_k` for `-1 ≤ k ≤ upto_k`, each certified: `T^{S_k}(z_k) = c` and
/// `T^j([z_k, ẑ_k])` avoids `c` for `0 < j < S_k`.
pub fn closest_precriticals(slope: &SlopeParam, upto_k: usize) -> Result<Vec<PrecriticalPair>> {
    let geom0 = Geometry::build(slope, upto_k, 16)?;
    let need = geom0.cd.s[upto_k];
    let start = initial_bits(slope, need + 32);
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, upto_k, 16, bits)?;
        let mut out = vec![PrecriticalPair {
            k: -1,
            z: geom.z(-1),
            zhat: geom.zhat(-1),
            flags: vec!["z_{-1}=c_2".into(), "zhat_{-1}=c_1".into()],
        }];
        for k in 0..=upto_k {
            let mut flags = Vec::new();
            if k == 0 && geom.kappa3 {
                flags.push("kappa=3: z_0 set to c_2".into());
                flags.push("empty left piece of Υ_0".into());
                flags.push("zhat_0 kept at its true value".into());
            } else {
                certify_precritical(&geom, k)?;
            }
            out.push(PrecriticalPair { k: k as i64, z: geom.z(k as i64), zhat: geom.zhat(k as i64), flags });
        }
        Ok(out)
    })
}

/// Smallest geometry containing the cell of `x`.
pub fn upsilon_index(slope: &SlopeParam, x: &Scalar) -> Result<usize> {
    let mut cuts = 16;
    loop {
        let start = x.bits().unwrap_or(64).max(initial_bits(slope, 64));
        let found = escalate(slope, start, |bits| {
            let geom = Geometry::at_bits(slope, cuts, 16, bits)?;
            geom.upsilon(x)
        })?;
        if let Some(k) = found {
            return Ok(k);
        }
        cuts *= 2;
        if cuts > 4096 {
            return Err(Error::unresolved("Υ index beyond available precritical points", cuts));
        }
    }
}

/// Cell membership of `c_{S_k}`: interior of `Υ_{Q(k+1)}` for `k ≥ 2`, boundary for `k ∈ {0, 1}`.
pub fn verify_zzz_in(geom: &Geometry, k: usize) -> Result<Verdict> {
    let rule = "cutting-value-cell";
    if geom.cd.s.len() < k + 2 {
        return Err(Error::Domain(format!("need cutting times up to S_{}", k + 1)));
    }
    let j = geom.cd.q_at(k + 1);
    let sk = geom.cd.s[k];
    let x = geom.c(sk);
    let lt = |a: &Scalar, b: &Scalar, what: &str| -> Result<bool> {
        match a.cmp_certified(b) {
            Some(Ordering::Less) => Ok(true),
            Some(_) => Ok(false),
            None => Err(Error::unresolved(what.to_string(), k)),
        }
    };
    match k {
        0 => {
            // c_1 = ẑ_{-1} closes the right piece (ẑ_0, ẑ_{-1}] of Υ_0.
            if j != 0 {
                return Ok(Verdict::refuted(rule, json!({"k": 0, "q": j})));
            }
            if lt(&geom.zhat(0), x, "zhat_0 < c_1")? {
                Ok(Verdict::certified(rule, json!({"k": 0, "cell": 0, "boundary": "c_1 = zhat_{-1}"})))
            } else {
                Ok(Verdict::refuted(rule, json!({"k": 0, "reason": "c_1 <= zhat_0"})))
            }
        }
        1 => {
            if sk != 2 {
                return Err(Error::Inconsistent("S_1 must be 2".into()));
            }
            let (cell, label) = if geom.kappa3 { (1, "c_2 = z_0 (kappa = 3)") } else { (0, "c_2 = z_{-1}") };
            if j != cell {
                return Ok(Verdict::refuted(rule, json!({"k": 1, "q": j, "expected": cell})));
            }
            if lt(x, &geom.z(cell as i64), "c_2 < z_cell")? {
                Ok(Verdict::certified(rule, json!({"k": 1, "cell": cell, "boundary": label})))
            } else {
                Ok(Verdict::refuted(rule, json!({"k": 1, "reason": "left piece empty"})))
            }
        }
        _ => {
            if geom.num_z() <= j {
                return Err(Error::Domain("not enough precritical points".into()));
            }
            let ji = j as i64;
            let inside = match sign_rel_c(x) {
                SignRelC::Below => lt(&geom.z(ji - 1), x, "z_{j-1} < c_Sk")? && lt(x, &geom.z(ji), "c_Sk < z_j")?,
                SignRelC::Above => {
                    lt(&geom.zhat(ji), x, "zhat_j < c_Sk")? && lt(x, &geom.zhat(ji - 1), "c_Sk < zhat_{j-1}")?
                }
                SignRelC::AtC => return Err(ArithError::CriticalHit(sk).into()),
                SignRelC::Unresolved => return Err(Error::unresolved("side of c_Sk", sk)),
            };
            if inside {
                Ok(Verdict::certified(rule, json!({"k": k, "cell": j, "interior": true})))
            } else {
                Ok(Verdict::refuted(rule, json!({"k": k, "cell": j, "interior": false})))
            }
        }
    }
}

pub fn verify_zzz(slope: &SlopeParam, k: usize) -> Result<Verdict> {
    let g0 = Geometry::build(slope, k + 1, 16)?;
    let start = initial_bits(slope, g0.cd.s[k + 1] + 32);
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, k + 1, 16, bits)?;
        verify_zzz_in(&geom, k)
    })
}

/// `F(c_{S_k}) = c_{S_{k+1}}`, with the cell of `c_{S_k}` certified to be `Υ_{Q(k+1)}`.
pub fn f_orbit_identity_in(geom: &Geometry, k: usize) -> Result<Verdict> {
    let rule = "f-orbit-identity";
    let sk = geom.cd.s[k];
    let Some(cell) = geom.upsilon_of_orbit_point(sk)? else {
        return Err(Error::Domain("not enough precritical points".into()));
    };
    let j = geom.cd.q_at(k + 1);
    if cell != j {
        return Ok(Verdict::refuted(rule, json!({"k": k, "cell": cell, "q": j})));
    }
    let image = geom.iterate(geom.c(sk), geom.cd.s[cell])?;
    let target = geom.c(geom.cd.s[k + 1]);
    let agree = match (&image, target) {
        (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
        _ => image.lo() <= target.hi() && target.lo() <= image.hi(),
    };
    if agree {
        Ok(Verdict::certified(rule, json!({"k": k, "cell": cell})))
    } else {
        Ok(Verdict::refuted(rule, json!({"k": k, "cell": cell, "reason": "image mismatch"})))
    }
}

pub fn f_apply(slope: &SlopeParam, y: &Scalar) -> Result<FValue> {
    let k = upsilon_index(slope, y)?;
    let start = y.bits().unwrap_or(64).max(initial_bits(slope, 64));
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, k + 1, 16, bits)?;
        geom.f_apply(y)?.ok_or_else(|| Error::Inconsistent("cell vanished after refinement".into()))
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FGraphRow {
    pub x_lo: f64,
    pub x_hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub cell_k: usize,
}

/// Sample `F` on a uniform grid of the core plus three points inside every
/// non-empty piece of `Υ_0..Υ_kmax`. Rows are sorted by `x`.
pub fn f_graph(geom: &Geometry, grid: usize, kmax: usize) -> Result<Vec<FGraphRow>> {
    let c2 = geom.c(2).clone();
    let c1 = geom.c(1).clone();
    let mut xs: Vec<Scalar> = Vec::new();
    let span = c1.sub(&c2);
    for i in 0..grid {
        let t = Scalar::Exact(BigRational::new((2 * i + 1).into(), (2 * grid).into()));
        xs.push(c2.add(&span.mul(&t)));
    }
    let kmax = kmax.min(geom.num_z().saturating_sub(1));
    for k in 0..=kmax {
        let ki = k as i64;
        for (a, b) in [(geom.z(ki - 1), geom.z(ki)), (geom.zhat(ki), geom.zhat(ki - 1))] {
            if a.cmp_certified(&b) != Some(Ordering::Less) {
                continue;
            }
            for t in [(1, 4), (1, 2), (3, 4)] {
                let f = Scalar::Exact(BigRational::new(t.0.into(), t.1.into()));
                xs.push(a.add(&b.sub(&a).mul(&f)));
            }
        }
    }
    let mut rows = Vec::new();
    for x in xs {
        if sign_rel_c(&x) == SignRelC::AtC {
            continue;
        }
        match geom.f_apply(&x) {
            Ok(Some(fv)) => rows.push(FGraphRow {
                x_lo: f64_down(&x.lo()),
                x_hi: f64_up(&x.hi()),
                f_lo: f64_down(&fv.value.lo()),
                f_hi: f64_up(&fv.value.hi()),
                cell_k: fv.k,
            }),
            Ok(None) => {}
            Err(e) if e.is_precision() => {}
            Err(e) => return Err(e),
        }
    }
    rows.sort_by(|a, b| a.x_lo.partial_cmp(&b.x_lo).unwrap().then(a.cell_k.cmp(&b.cell_k)));
    rows.dedup_by(|a, b| a.x_lo == b.x_lo && a.x_hi == b.x_hi);
    Ok(rows)
}

/// Check that `F` is affine with slope `±s^{S_k}` on the piece of `Υ_k`
/// containing the given points (exact slopes only).
pub fn affine_on_piece(geom: &Geometry, pts: &[Scalar]) -> Result<bool> {
    let mut cell = None;
    let mut vals = Vec::new();
    for p in pts {
        let fv = geom.f_apply(p)?.ok_or_else(|| Error::Domain("cell not available".into()))?;
        if *cell.get_or_insert(fv.k) != fv.k {
            return Ok(false);
        }
        vals.push(fv.value);
    }
    let k = cell.unwrap_or(0);
    let mag = geom.s.pow(geom.cd.s[k]);
    for i in 1..pts.len() {
        let (Some(x0), Some(x1), Some(y0), Some(y1)) =
            (pts[0].as_exact(), pts[i].as_exact(), vals[0].as_exact(), vals[i].as_exact())
        else {
            return Err(Error::Domain("affine check needs exact values".into()));
        };
        let slope = (y1 - y0) / (x1 - x0);
        let m = mag.as_exact().unwrap();
        if slope != *m && slope != -m.clone() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug)]
pub struct LongBranched {
    pub verdict: Verdict,
    pub min_len: Scalar,
    pub argmin: usize,
    /// Running minimum of `|D_n|` at the end of each dyadic window `[2^i, 2^{i+1})`.
    pub window_minima: Vec<(usize, f64)>,
    pub symbolic: Verdict,
}

/// `min_{n ≤ N} |D_n|` against `threshold`, plus the bounded-kneading-map test.
pub fn long_branched_evidence(slope: &SlopeParam, horizon: usize, threshold: &BigRational) -> Result<LongBranched> {
    let levels = tower(slope, horizon)?;
    let mut best: Option<(Scalar, usize)> = None;
    let mut window_minima = Vec::new();
    let mut running = f64::INFINITY;
    let mut next_window = 2;
    for lvl in &levels {
        let len = lvl.length.clone().unwrap();
        running = running.min(to_f64(&len.hi()));
        let better = match &best {
            None => true,
            Some((b, _)) => len.hi() < b.hi(),
        };
        if better {
            best = Some((len, lvl.n));
        }
        if lvl.n + 1 == next_window {
            window_minima.push((lvl.n, running));
            next_window *= 2;
        } else if lvl.n == levels.len() {
            // A short trailing window is folded into the previous one.
            let full = next_window / 2;
            match window_minima.last_mut() {
                Some(last) if lvl.n + 1 - full < full / 2 => *last = (lvl.n, running),
                _ => window_minima.push((lvl.n, running)),
            }
        }
    }
    let (min_len, argmin) = best.ok_or_else(|| Error::Domain("empty tower".into()))?;
    let rule = "long-branched";
    let tail: Vec<f64> = window_minima.iter().rev().take(3).map(|w| w.1).collect();
    let decreasing = tail.len() == 3 && tail[0] < tail[1] && tail[1] < tail[2];
    let below = min_len.hi() < *threshold;
    let witness = json!({
        "min_len_hi": to_f64(&min_len.hi()),
        "argmin": argmin,
        "window_minima": window_minima,
        "threshold": threshold.to_string(),
    });
    let verdict = if below && decreasing {
        Verdict::counter_evidence(rule, horizon as u64, witness)
    } else {
        Verdict::evidence(rule, horizon as u64, witness)
    };
    let geom = Geometry::build(slope, 0, horizon)?;
    let symbolic = long_branched_symbolic(&geom.cd.q);
    Ok(LongBranched { verdict, min_len, argmin, window_minima, symbolic })
}

/// Long-branchedness is equivalent to a bounded kneading map.
pub fn long_branched_symbolic(q: &[usize]) -> Verdict {
    let qa = q_asymptotics(q);
    let mut v = qa.bounded.clone();
    v.rule = "long-branched-bounded-q".into();
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub gap_after_lo: Option<f64>,
    pub gap_after_hi: Option<f64>,
    pub max_gap: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapSummary {
    pub rows: Vec<GapRow>,
    pub max_gap_lo: f64,
    pub max_gap_hi: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub k_max: usize,
    pub epsilon: String,
    pub all: GapSummary,
    /// Restricted to `k` with `Q(k) ≤ 1` (`k = 0` included via `Q(0) = 0`).
    pub small_q: GapSummary,
    pub verdict: Verdict,
    pub small_q_verdict: Verdict,
}

fn gap_summary(points: Vec<(String, Scalar)>) -> Result<GapSummary> {
    let mut pts = points;
    let mut err = None;
    pts.sort_by(|a, b| match a.1.cmp_certified(&b.1) {
        Some(o) => o,
        None => {
            if a.1 != b.1 {
                err = Some(Error::unresolved("order of cutting values", 0));
            }
            Ordering::Equal
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    pts.dedup_by(|a, b| a.1 == b.1);
    let mut rows: Vec<GapRow> = pts
        .iter()
        .map(|(l, v)| GapRow {
            label: l.clone(),
            lo: f64_down(&v.lo()),
            hi: f64_up(&v.hi()),
            gap_after_lo: None,
            gap_after_hi: None,
            max_gap: false,
        })
        .collect();
    let mut best: Option<(usize, BigRational, BigRational)> = None;
    for i in 0..pts.len().saturating_sub(1) {
        let glo = pts[i + 1].1.lo() - pts[i].1.hi();
        let ghi = pts[i + 1].1.hi() - pts[i].1.lo();
        rows[i].gap_after_lo = Some(f64_down(&glo));
        rows[i].gap_after_hi = Some(f64_up(&ghi));
        if best.as_ref().is_none_or(|b| ghi > b.2) {
            best = Some((i, glo, ghi));
        }
    }
    let (mlo, mhi) = match best {
        Some((i, lo, hi)) => {
            rows[i].max_gap = true;
            (f64_down(&lo), f64_up(&hi))
        }
        None => (0.0, 0.0),
    };
    Ok(GapSummary { rows, max_gap_lo: mlo, max_gap_hi: mhi })
}

/// Largest gap of `{c_{S_k} : k ≤ K} ∪ {c_2, c_1}` and of the `Q(k) ≤ 1` subfamily.
pub fn cutting_value_gaps(slope: &SlopeParam, kmax: usize, eps: &BigRational) -> Result<GapReport> {
    let g0 = Geometry::build(slope, kmax, 16)?;
    let start = initial_bits(slope, g0.cd.s[kmax] + 32);
    escalate(slope, start, |bits| {
        let geom = Geometry::at_bits(slope, kmax, 16, bits)?;
        let ends = || vec![("c_2".to_string(), geom.c(2).clone()), ("c_1".to_string(), geom.c(1).clone())];
        let mut all = ends();
        let mut small = ends();
        for k in 0..=kmax {
            let item = (format!("c_S{}", k), geom.c(geom.cd.s[k]).clone());
            if geom.cd.q_at(k) <= 1 {
                small.push(item.clone());
            }
            all.push(item);
        }
        let all = gap_summary(all)?;
        let small_q = gap_summary(small)?;
        let epsf = to_f64(eps);
        let judge = |g: &GapSummary| {
            let w = json!({"max_gap_lo": g.max_gap_lo, "max_gap_hi": g.max_gap_hi, "k_max": kmax});
            if g.max_gap_hi <= epsf {
                Verdict::evidence("cutting-value-density", kmax as u64, w).with_epsilon(eps)
            } else if g.max_gap_lo > epsf {
                Verdict::counter_evidence("cutting-value-density", kmax as u64, w).with_epsilon(eps)
            } else {
                Verdict::undetermined("cutting-value-density", "gap straddles epsilon", w).with_epsilon(eps)
            }
        };
        let verdict = judge(&all);
        let small_q_verdict = judge(&small_q);
        Ok(GapReport { k_max: kmax, epsilon: eps.to_string(), all, small_q, verdict, small_q_verdict })
    })
}
