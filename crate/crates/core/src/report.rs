use serde::Serialize;

/// One failed check. `rule` is a stable snake_case name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: String,
    pub subject: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerificationReport {
    pub violations: Vec<Violation>,
    /// Informational remarks that are not failures (e.g. merges stopped at the cap).
    pub notes: Vec<String>,
    /// Number of individual checks evaluated.
    pub checks: u64,
}

impl VerificationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// Records one check; files a violation when `ok` is false.
    pub fn check(&mut self, ok: bool, rule: &str, subject: impl FnOnce() -> String, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(Violation { rule: rule.to_string(), subject: subject(), detail: detail() });
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn merge(&mut self, other: VerificationReport) {
        self.violations.extend(other.violations);
        self.notes.extend(other.notes);
        self.checks += other.checks;
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}
