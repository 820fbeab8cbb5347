use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{accuracy_binary, accuracy_frontend, round1};

use super::cases::{CaseKind, Judgement, Verdict};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n_yes: u64,
    pub n_partial: u64,
    pub n_total: u64,
}

impl Tally {
    fn add(&mut self, j: Judgement) {
        self.n_total += 1;
        match j {
            Judgement::Yes => self.n_yes += 1,
            Judgement::Partial => self.n_partial += 1,
            Judgement::No => {}
        }
    }

    pub fn frontend_accuracy(&self) -> Option<f64> {
        accuracy_frontend(self.n_yes, self.n_partial, self.n_total).ok()
    }

    /// PARTIAL counts as a miss.
    pub fn binary_accuracy(&self) -> Option<f64> {
        accuracy_binary(self.n_yes, self.n_total).ok()
    }
}

/// Percentages are unrounded; `None` when a kind has no cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frontend_gated: Tally,
    pub frontend_ungated: Tally,
    pub backend_gated: Tally,
    pub backend_ungated: Tally,
    pub database: Tally,
    pub fe_accuracy: Option<f64>,
    pub fe_accuracy_ungated: Option<f64>,
    pub be_accuracy: Option<f64>,
    pub be_accuracy_ungated: Option<f64>,
    pub db_accuracy: Option<f64>,
    pub appearance_mean: Option<f64>,
    pub sites: usize,
}

impl BenchReport {
    /// One-decimal table row, `-` for empty columns.
    pub fn table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", round1(x)));
        let head = ["FE Acc.", "FE Acc. w/ DB", "BE Acc.", "BE Acc. w/ DB", "DB Acc.", "Appearance"];
        let row = [
            cell(self.fe_accuracy_ungated),
            cell(self.fe_accuracy),
            cell(self.be_accuracy_ungated),
            cell(self.be_accuracy),
            cell(self.db_accuracy),
            self.appearance_mean.map_or("-".to_string(), |x| format!("{x:.2}")),
        ];
        let widths: Vec<usize> = head.iter().map(|h| h.len().max(6)).collect();
        let fmt = |cells: Vec<String>| {
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
        };
        format!("{}\n{}", fmt(head.iter().map(|s| s.to_string()).collect()), fmt(row.to_vec()))
    }
}

/// Tallies verdicts by kind and averages appearance over sites. A verdict's
/// PARTIAL only matters for frontend cases.
pub fn compute_report(verdicts: &[Verdict], appearance: &BTreeMap<String, u8>) -> BenchReport {
    let mut t: BTreeMap<(CaseKind, bool), Tally> = BTreeMap::new();
    for v in verdicts {
        t.entry((v.kind, true)).or_default().add(v.gated);
        t.entry((v.kind, false)).or_default().add(v.raw);
    }
    let get = |k: CaseKind, gated: bool| t.get(&(k, gated)).copied().unwrap_or_default();
    let (fe_g, fe_u) = (get(CaseKind::Frontend, true), get(CaseKind::Frontend, false));
    let (be_g, be_u) = (get(CaseKind::Backend, true), get(CaseKind::Backend, false));
    let db = get(CaseKind::Database, true);
    let appearance_mean = (!appearance.is_empty())
        .then(|| appearance.values().map(|&g| f64::from(g)).sum::<f64>() / appearance.len() as f64);
    BenchReport {
        fe_accuracy: fe_g.frontend_accuracy(),
        fe_accuracy_ungated: fe_u.frontend_accuracy(),
        be_accuracy: be_g.binary_accuracy(),
        be_accuracy_ungated: be_u.binary_accuracy(),
        db_accuracy: db.binary_accuracy(),
        frontend_gated: fe_g,
        frontend_ungated: fe_u,
        backend_gated: be_g,
        backend_ungated: be_u,
        database: db,
        appearance_mean,
        sites: appearance.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::cases::TestCase;
    use proptest::prelude::*;

    fn verdict(kind: CaseKind, raw: Judgement, db_ok: Option<bool>) -> Verdict {
        let case = TestCase { id: "c".into(), kind, task: None, expected_result: None, data_description: None };
        Verdict::new("s", &case, raw, db_ok)
    }

    #[test]
    fn gated_frontend_tally() {
        use Judgement::*;
        let vs = vec![
            verdict(CaseKind::Frontend, Yes, Some(true)),
            verdict(CaseKind::Frontend, Yes, Some(true)),
            verdict(CaseKind::Frontend, Partial, Some(true)),
            verdict(CaseKind::Frontend, No, Some(true)),
        ];
        let r = compute_report(&vs, &BTreeMap::new());
        assert_eq!(r.fe_accuracy, Some(62.5));
        assert_eq!(r.fe_accuracy, r.fe_accuracy_ungated);
        assert_eq!(r.be_accuracy, None);
        assert_eq!(r.appearance_mean, None);
    }

    #[test]
    fn one_flip_lowers_gated_only() {
        use Judgement::*;
        let vs = vec![
            verdict(CaseKind::Backend, Yes, Some(true)),
            verdict(CaseKind::Backend, Yes, Some(false)),
            verdict(CaseKind::Database, Yes, None),
            verdict(CaseKind::Database, No, None),
        ];
        let app = BTreeMap::from([("a".to_string(), 4u8), ("b".to_string(), 0u8)]);
        let r = compute_report(&vs, &app);
        assert_eq!(r.be_accuracy, Some(50.0));
        assert_eq!(r.be_accuracy_ungated, Some(100.0));
        assert_eq!(r.db_accuracy, Some(50.0));
        assert_eq!(r.appearance_mean, Some(2.0));
        assert!(r.table().contains("50.0"));
    }

    fn judgement() -> impl Strategy<Value = Judgement> {
        prop_oneof![Just(Judgement::Yes), Just(Judgement::Partial), Just(Judgement::No)]
    }

    proptest! {
        #[test]
        fn gating_never_raises_accuracy(
            raw in prop::collection::vec((judgement(), any::<bool>(), any::<bool>()), 1..40),
        ) {
            let vs: Vec<Verdict> = raw
                .iter()
                .map(|&(j, ok, fe)| {
                    let kind = if fe { CaseKind::Frontend } else { CaseKind::Backend };
                    let j = if kind == CaseKind::Backend && j == Judgement::Partial { Judgement::Yes } else { j };
                    verdict(kind, j, Some(ok))
                })
                .collect();
            let r = compute_report(&vs, &BTreeMap::new());
            if let (Some(g), Some(u)) = (r.fe_accuracy, r.fe_accuracy_ungated) {
                prop_assert!(g <= u);
            }
            if let (Some(g), Some(u)) = (r.be_accuracy, r.be_accuracy_ungated) {
                prop_assert!(g <= u);
            }
        }
    }
}
