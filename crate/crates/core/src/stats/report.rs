//! Rows of the verification report.

use std::fmt;

pub const REPORT_HEADER: &str = "check,location,statistic,value,stderr,tolerance,pass";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Not enough data to decide; never counted as a failure.
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail dominates, then Inconclusive.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }

    pub fn all(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
        vs.into_iter().fold(Verdict::Pass, Verdict::and)
    }

    pub fn is_fail(self) -> bool {
        self == Verdict::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "true",
            Verdict::Fail => "false",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub location: String,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl CheckRow {
    pub fn new(
        check: &str,
        location: impl Into<String>,
        statistic: impl Into<String>,
        value: f64,
        stderr: f64,
        tolerance: f64,
        verdict: Verdict,
    ) -> Self {
        Self {
            check: check.to_string(),
            location: location.into(),
            statistic: statistic.into(),
            value,
            stderr,
            tolerance,
            verdict,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.check, self.location, self.statistic, self.value, self.stderr, self.tolerance, self.verdict
        )
    }
}

pub fn to_csv(rows: &[CheckRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}
