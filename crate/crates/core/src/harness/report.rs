//! Pass/fail verdicts shared by every experiment report.

use serde::{Deserialize, Serialize};

/// One checked claim.  `criterion` is the stable id of the acceptance
/// criterion or module invariant the check belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: &str, passed: bool, detail: String) -> Self {
        Verdict {
            criterion: criterion.to_string(),
            passed,
            detail,
        }
    }
}

pub fn all_passed(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.passed)
}

/// One line per verdict, `PASS`/`FAIL` first so summaries grep cleanly.
pub fn render(verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    for v in verdicts {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{tag} {}: {}\n", v.criterion, v.detail));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_aggregate() {
        let vs = vec![
            Verdict::new("X1", true, "ok".into()),
            Verdict::new("X2", false, "bad".into()),
        ];
        assert!(!all_passed(&vs));
        let text = render(&vs);
        assert!(text.contains("PASS X1: ok"));
        assert!(text.contains("FAIL X2: bad"));
        assert!(all_passed(&vs[..1]));
    }
}
