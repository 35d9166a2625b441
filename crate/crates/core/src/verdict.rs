//! Four-valued results for properties of infinite objects checked on finite data.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Refuted,
    Evidence,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    /// For `Evidence`: whether the finite data supports (true) or leans against (false) the property.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supports: Option<bool>,
    pub rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<String>,
    pub witness: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    fn base(status: Status, rule: &str, witness: Value) -> Verdict {
        Verdict { status, supports: None, rule: rule.to_string(), depth: None, epsilon: None, witness, reason: None }
    }

    pub fn certified(rule: &str, witness: Value) -> Verdict {
        Verdict::base(Status::Certified, rule, witness)
    }

    pub fn refuted(rule: &str, witness: Value) -> Verdict {
        Verdict::base(Status::Refuted, rule, witness)
    }

    pub fn evidence(rule: &str, depth: u64, witness: Value) -> Verdict {
        let mut v = Verdict::base(Status::Evidence, rule, witness);
        v.depth = Some(depth);
        v.supports = Some(true);
        v
    }

    /// Evidence that leans against the property.
    pub fn counter_evidence(rule: &str, depth: u64, witness: Value) -> Verdict {
        let mut v = Verdict::evidence(rule, depth, witness);
        v.supports = Some(false);
        v
    }

    pub fn undetermined(rule: &str, reason: &str, witness: Value) -> Verdict {
        let mut v = Verdict::base(Status::Undetermined, rule, witness);
        v.reason = Some(reason.to_string());
        v
    }

    pub fn with_depth(mut self, depth: u64) -> Verdict {
        self.depth = Some(depth);
        self
    }

    pub fn with_epsilon(mut self, eps: impl ToString) -> Verdict {
        self.epsilon = Some(eps.to_string());
        self
    }

    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    pub fn is_refuted(&self) -> bool {
        self.status == Status::Refuted
    }

    pub fn is_evidence(&self) -> bool {
        self.status == Status::Evidence
    }

    /// Certified, or evidence in favour.
    pub fn leans_true(&self) -> bool {
        match self.status {
            Status::Certified => true,
            Status::Evidence => self.supports != Some(false),
            _ => false,
        }
    }

    /// Refuted, or evidence against.
    pub fn leans_false(&self) -> bool {
        match self.status {
            Status::Refuted => true,
            Status::Evidence => self.supports == Some(false),
            _ => false,
        }
    }
}
