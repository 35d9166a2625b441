//! Named slopes and kneading maps used by the CLI and the test corpus.

use std::sync::Arc;

use crate::arith::{rat, SlopeParam};
use crate::kneading::{cascade_q, example35_q, fibonacci_q, fixture41_bits, nu_from_q, ClosedForm};

/// Kneading symbols `ν_1..ν_n` generated from a closed-form kneading map.
pub fn nu_of(f: fn(usize) -> usize, n: usize) -> Vec<u8> {
    // S_k ≥ k + 1, so n values of Q always suffice.
    nu_from_q(&ClosedForm::new(f, n + 2), n).expect("preset kneading map is admissible").bits
}

/// Named kneading maps: `fib`, `ex35`, `cascade`.
pub fn q_preset(name: &str) -> Option<fn(usize) -> usize> {
    match name {
        "fib" | "fibonacci" => Some(fibonacci_q),
        "ex35" | "example35" => Some(example35_q),
        "cascade" | "feigenbaum" => Some(cascade_q),
        _ => None,
    }
}

/// Named slopes. `golden` and `tribonacci` are polynomial roots (both have a
/// periodic critical orbit); `fibonacci`, `ex35` and `fixture41` are defined
/// by their kneading sequences.
pub fn slope_preset(name: &str) -> Option<SlopeParam> {
    match name {
        "golden" => SlopeParam::root("golden", vec![-1, -1, 1], rat(3, 2), rat(17, 10)).ok(),
        "tribonacci" => SlopeParam::root("tribonacci", vec![-1, -1, -1, 1], rat(18, 10), rat(19, 10)).ok(),
        "fibonacci" | "fib" => Some(SlopeParam::kneading("fibonacci", Arc::new(|n| nu_of(fibonacci_q, n)))),
        "ex35" | "example35" => Some(SlopeParam::kneading("ex35", Arc::new(|n| nu_of(example35_q, n)))),
        "fixture41" => Some(SlopeParam::kneading("fixture41", Arc::new(fixture41_bits))),
        _ => None,
    }
}

/// Parse a slope: preset name, `p/q`, or decimal literal.
pub fn parse_slope(text: &str) -> Result<SlopeParam, crate::arith::ArithError> {
    match slope_preset(text.trim()) {
        Some(s) => Ok(s),
        None => SlopeParam::parse_rational(text),
    }
}
