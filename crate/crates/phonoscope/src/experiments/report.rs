//! CSV renderings of study artifacts. Writers emit header plus rows; the
//! pipeline prepends a provenance comment line when writing files.

use super::{EpochStats, RunStats, StatComparison};

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// `runstats.csv`: model,n_runs,mean_acc,sd,ci_lo,ci_hi
pub fn runstats_csv(stats: &[RunStats]) -> String {
    let mut out = String::from("model,n_runs,mean_acc,sd,ci_lo,ci_hi\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.kind,
            s.n_runs,
            fmt(s.mean),
            fmt(s.sd),
            fmt(s.ci95.0),
            fmt(s.ci95.1)
        ));
    }
    out
}

/// `comparisons.csv`: model_a,model_b,t_stat,p_value,cohens_d
pub fn comparisons_csv(pairs: &[StatComparison]) -> String {
    let mut out = String::from("model_a,model_b,t_stat,p_value,cohens_d\n");
    for p in pairs {
        let t = p.t_stat.map(fmt).unwrap_or_default();
        let pv = p.p_value.map(fmt).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", p.a, p.b, t, pv, fmt(p.cohens_d)));
    }
    out
}

/// `history.csv`: epoch,train_loss,val_loss,val_acc
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch,
            fmt(h.train_loss),
            fmt(h.val_loss),
            fmt(h.val_acc)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn csv_headers_match_contracts() {
        let stats = vec![RunStats {
            kind: ModelKind::Cnn,
            n_runs: 5,
            accuracies: vec![0.9; 5],
            mean: 0.9,
            sd: 0.0,
            ci95: (0.9, 0.9),
            failures: vec![],
        }];
        let csv = runstats_csv(&stats);
        assert!(csv.starts_with("model,n_runs,mean_acc,sd,ci_lo,ci_hi\n"));
        assert!(csv.contains("cnn,5,0.9,0,0.9,0.9\n"));

        let pairs = vec![StatComparison {
            a: ModelKind::Cnn,
            b: ModelKind::Svm,
            t_stat: Some(2.5),
            p_value: Some(0.03),
            cohens_d: 1.25,
        }];
        let csv = comparisons_csv(&pairs);
        assert!(csv.starts_with("model_a,model_b,t_stat,p_value,cohens_d\n"));
        assert!(csv.contains("cnn,svm,2.5,0.03,1.25\n"));

        let history = vec![EpochStats { epoch: 1, train_loss: 0.6, val_loss: 0.5, val_acc: 0.8 }];
        let csv = history_csv(&history);
        assert!(csv.starts_with("epoch,train_loss,val_loss,val_acc\n"));
        assert!(csv.contains("1,0.6,0.5,0.8\n"));
    }
}
