/// A model's average win rate with its confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub label: String,
    pub average: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub label: String,
    pub average: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rank: usize,
}

/// Rows in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankTable {
    pub rows: Vec<RankedRow>,
}

impl RankTable {
    pub fn rank_of(&self, label: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.rank)
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.rank).collect()
    }
}

/// Rank = 1 + number of models whose interval lies strictly above this
/// model's interval. Overlapping intervals share a rank.
pub fn rank_from_cis(entries: &[RankEntry]) -> RankTable {
    let rows = entries
        .iter()
        .map(|e| {
            let above = entries.iter().filter(|o| o.ci_low > e.ci_high).count();
            RankedRow {
                label: e.label.clone(),
                average: e.average,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                rank: 1 + above,
            }
        })
        .collect();
    RankTable { rows }
}
