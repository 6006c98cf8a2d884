use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scm::Coupling;
use crate::scoring::{compare, PairwiseOutcome};

use super::PairedSampleSet;

/// Win, loss and tie rates of `model_a` against `model_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinRateReport {
    pub model_a: usize,
    pub model_b: usize,
    pub coupling: Coupling,
    pub win_rate: f64,
    pub loss_rate: f64,
    pub tie_rate: f64,
    pub n: usize,
}

impl WinRateReport {
    /// Report from known rates; the tie rate is the remainder.
    pub fn from_rates(
        model_a: usize,
        model_b: usize,
        coupling: Coupling,
        win_rate: f64,
        loss_rate: f64,
        n: usize,
    ) -> Result<Self> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(win_rate) || !ok(loss_rate) || win_rate + loss_rate > 1.0 + 1e-12 || n == 0 {
            return Err(Error::Domain(format!(
                "invalid rates win={win_rate}, loss={loss_rate}, n={n}"
            )));
        }
        Ok(Self {
            model_a,
            model_b,
            coupling,
            win_rate,
            loss_rate,
            tie_rate: (1.0 - win_rate - loss_rate).max(0.0),
            n,
        })
    }

    /// The same comparison seen from `model_b`.
    pub fn reversed(&self) -> Self {
        Self {
            model_a: self.model_b,
            model_b: self.model_a,
            win_rate: self.loss_rate,
            loss_rate: self.win_rate,
            ..*self
        }
    }
}

/// Fractions of strict wins, strict losses and ties under tolerance `tol`.
pub fn win_tie_rates(samples: &PairedSampleSet, tol: f64) -> Result<WinRateReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no paired samples".into()));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Domain(format!("tolerance {tol} must be non-negative")));
    }
    let (model_a, model_b, coupling) = samples.pair()?;
    let (mut wins, mut losses, mut ties) = (0usize, 0usize, 0usize);
    for r in samples.records() {
        match compare(r.score_a, r.score_b, tol) {
            PairwiseOutcome::Win => wins += 1,
            PairwiseOutcome::Loss => losses += 1,
            PairwiseOutcome::Tie => ties += 1,
        }
    }
    let n = samples.len();
    let nf = n as f64;
    Ok(WinRateReport {
        model_a,
        model_b,
        coupling,
        win_rate: wins as f64 / nf,
        loss_rate: losses as f64 / nf,
        tie_rate: ties as f64 / nf,
        n,
    })
}

/// Unweighted mean, over all opponents, of `model`'s win rate.
///
/// Opponents are every other model appearing in `reports`. Several reports
/// for the same ordered pair (e.g. one per prompt) are averaged first; a
/// pair reported only as `(opponent, model)` contributes its loss rate.
pub fn average_win_rate(reports: &[WinRateReport], model: usize) -> Result<f64> {
    let universe: BTreeSet<usize> = reports
        .iter()
        .flat_map(|r| [r.model_a, r.model_b])
        .collect();
    if !universe.contains(&model) {
        return Err(Error::Config(format!("model {model} appears in no report")));
    }
    let opponents: Vec<usize> = universe.into_iter().filter(|&j| j != model).collect();
    if opponents.is_empty() {
        return Err(Error::Config(format!("model {model} has no opponents")));
    }
    let mut total = 0.0;
    for &j in &opponents {
        let direct: Vec<f64> = reports
            .iter()
            .filter(|r| r.model_a == model && r.model_b == j)
            .map(|r| r.win_rate)
            .collect();
        let rates = if direct.is_empty() {
            reports
                .iter()
                .filter(|r| r.model_a == j && r.model_b == model)
                .map(|r| r.loss_rate)
                .collect()
        } else {
            direct
        };
        if rates.is_empty() {
            return Err(Error::Config(format!(
                "no report compares model {model} with model {j}"
            )));
        }
        total += rates.iter().sum::<f64>() / rates.len() as f64;
    }
    Ok(total / opponents.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::PairedRecord;
    use crate::scm::PromptId;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_scores_all_ties() {
        let s = PairedSampleSet::from_pairs(&[(1.0, 1.0), (0.0, 0.0), (0.3, 0.3)], Coupling::Coupled);
        let r = win_tie_rates(&s, 0.0).unwrap();
        assert_eq!((r.win_rate, r.loss_rate, r.tie_rate, r.n), (0.0, 0.0, 1.0, 3));
    }

    #[test]
    fn all_wins() {
        let s = PairedSampleSet::from_pairs(&[(1.0, 0.0); 7], Coupling::Independent);
        assert_eq!(win_tie_rates(&s, 0.0).unwrap().win_rate, 1.0);
    }

    #[test]
    fn rates_sum_to_one() {
        let pairs: Vec<(f64, f64)> = (0..997).map(|i| ((i % 3) as f64, (i % 5) as f64 / 2.0)).collect();
        let r = win_tie_rates(&PairedSampleSet::from_pairs(&pairs, Coupling::Coupled), 0.0).unwrap();
        assert!((r.win_rate + r.loss_rate + r.tie_rate - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(matches!(
            win_tie_rates(&PairedSampleSet::default(), 0.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn mixed_pairs_rejected() {
        let mut recs = PairedSampleSet::from_pairs(&[(1.0, 0.0); 2], Coupling::Coupled).records().to_vec();
        recs[1] = PairedRecord { model_b: 3, ..recs[1] };
        let set = PairedSampleSet::new(recs).unwrap();
        assert!(matches!(win_tie_rates(&set, 0.0), Err(Error::Config(_))));
        let _ = PromptId(0);
    }

    #[test]
    fn single_opponent_average_is_its_win_rate() {
        let r = WinRateReport::from_rates(0, 1, Coupling::Coupled, 0.3, 0.2, 10).unwrap();
        assert_eq!(average_win_rate(&[r], 0).unwrap(), 0.3);
        assert_eq!(average_win_rate(&[r], 1).unwrap(), 0.2);
        assert!(matches!(average_win_rate(&[r], 5), Err(Error::Config(_))));
    }

    #[test]
    fn missing_opponent_rejected() {
        let r01 = WinRateReport::from_rates(0, 1, Coupling::Coupled, 0.3, 0.2, 10).unwrap();
        let r12 = WinRateReport::from_rates(1, 2, Coupling::Coupled, 0.3, 0.2, 10).unwrap();
        assert!(matches!(average_win_rate(&[r01, r12], 0), Err(Error::Config(_))));
    }

    // Three models, two equally likely prompts, single-token binary answers:
    // per prompt, the independent win rate of k over j is p_k (1 - p_j) and the
    // coupled one is (p_k - p_j)^+. These are averaged over prompts and opponents.
    const P: [[f64; 3]; 2] = [[0.4, 0.48, 0.5], [1.0, 0.9, 0.89]];

    fn reports(coupling: Coupling) -> Vec<WinRateReport> {
        let mut out = Vec::new();
        for row in P {
            for k in 0..3 {
                for j in 0..3 {
                    if j == k {
                        continue;
                    }
                    let (win, loss) = match coupling {
                        Coupling::Independent => (row[k] * (1.0 - row[j]), row[j] * (1.0 - row[k])),
                        Coupling::Coupled => ((row[k] - row[j]).max(0.0), (row[j] - row[k]).max(0.0)),
                    };
                    out.push(WinRateReport::from_rates(k, j, coupling, win, loss, 1).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn three_model_example_averages() {
        let ind = reports(Coupling::Independent);
        let cpl = reports(Coupling::Coupled);
        assert_abs_diff_eq!(average_win_rate(&ind, 0).unwrap(), 0.1545, epsilon = 1e-12);
        assert_abs_diff_eq!(average_win_rate(&ind, 1).unwrap(), 0.15675, epsilon = 1e-12);
        assert_abs_diff_eq!(average_win_rate(&ind, 2).unwrap(), 0.16225, epsilon = 1e-12);
        assert_abs_diff_eq!(average_win_rate(&cpl, 0).unwrap(), 0.0525, epsilon = 1e-12);
        assert_abs_diff_eq!(average_win_rate(&cpl, 1).unwrap(), 0.0225, epsilon = 1e-12);
        assert_abs_diff_eq!(average_win_rate(&cpl, 2).unwrap(), 0.03, epsilon = 1e-12);
    }
}
