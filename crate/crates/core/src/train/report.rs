use std::fmt::Write as _;

use crate::metrics::ConfusionMatrix;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy over the epoch's samples.
    pub epoch_loss: Vec<f64>,
    /// Fraction of samples classified correctly during the epoch's passes.
    pub epoch_train_oa: Vec<f64>,
    pub test_confusion: Option<ConfusionMatrix>,
    pub stopped_early: bool,
    pub train_seconds: f64,
    pub test_seconds: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_loss.len()
    }

    /// Equality ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        self.epoch_loss == other.epoch_loss
            && self.epoch_train_oa == other.epoch_train_oa
            && self.test_confusion == other.test_confusion
            && self.stopped_early == other.stopped_early
    }

    /// Plain-text table, one `epoch loss train_oa` row per epoch, preceded by
    /// `# ` provenance lines. Timings are left out so the text is reproducible.
    pub fn to_table(&self, provenance: &[String]) -> String {
        let mut out = String::from("# ssnl train report\n");
        for line in provenance {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("epoch loss train_oa\n");
        for (i, (loss, oa)) in self.epoch_loss.iter().zip(&self.epoch_train_oa).enumerate() {
            let _ = writeln!(out, "{} {:.8} {:.6}", i + 1, loss, oa);
        }
        if self.stopped_early {
            out.push_str("# stopped early\n");
        }
        if let Some(cm) = &self.test_confusion {
            let fmt = |r: Result<f64, _>| r.map_or("-".to_string(), |v: f64| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "# test samples={} OA={} AA={} kappa={}",
                cm.total(),
                fmt(cm.overall_accuracy()),
                fmt(cm.average_accuracy()),
                cm.kappa().map_or("-".to_string(), |v| format!("{v:.4}"))
            );
        }
        out
    }
}
