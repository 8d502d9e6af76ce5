//! Evaluation reports: per-episode rows plus aggregates derived from them.

use std::path::Path;

use dynfold_learn::train::EpisodeOutcome;
use serde::{Deserialize, Serialize};

use crate::Result;

/// Marker written in place of an aggregate over zero episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Undefined {
    Undefined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Stat {
    Value(f64),
    Undefined(Undefined),
}

impl Stat {
    fn mean(values: impl ExactSizeIterator<Item = f64>) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat::Undefined(Undefined::Undefined);
        }
        Stat::Value(values.sum::<f64>() / n as f64)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Stat::Value(v) => Some(*v),
            Stat::Undefined(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub fabric: usize,
    pub d0: f64,
    pub d1: f64,
    pub d_sum: f64,
    pub success: bool,
    pub steps: usize,
}

impl From<&EpisodeOutcome> for EpisodeRow {
    fn from(o: &EpisodeOutcome) -> Self {
        Self { fabric: o.fabric, d0: o.d0, d1: o.d1, d_sum: o.d_sum, success: o.success, steps: o.steps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub episodes: usize,
    pub success_rate: Stat,
    pub mean_d0: Stat,
    pub mean_d1: Stat,
    pub mean_d_sum: Stat,
    /// Population standard deviation.
    pub std_d_sum: Stat,
}

impl Aggregates {
    pub fn from_rows(rows: &[EpisodeRow]) -> Self {
        let mean_d_sum = Stat::mean(rows.iter().map(|r| r.d_sum));
        let std_d_sum = match mean_d_sum {
            Stat::Value(m) => Stat::mean(rows.iter().map(|r| (r.d_sum - m).powi(2))).value().map_or(mean_d_sum, |v| Stat::Value(v.sqrt())),
            undefined => undefined,
        };
        Self {
            episodes: rows.len(),
            success_rate: Stat::mean(rows.iter().map(|r| if r.success { 1.0 } else { 0.0 })),
            mean_d0: Stat::mean(rows.iter().map(|r| r.d0)),
            mean_d1: Stat::mean(rows.iter().map(|r| r.d1)),
            mean_d_sum,
            std_d_sum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricGroup {
    pub fabric: usize,
    pub aggregates: Aggregates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeRow>,
    pub aggregates: Aggregates,
    /// One group per fabric index, ascending.
    pub per_fabric: Vec<FabricGroup>,
}

impl EvalReport {
    pub fn from_rows(mut episodes: Vec<EpisodeRow>) -> Self {
        // stable, so the episode order within a fabric is kept
        episodes.sort_by_key(|r| r.fabric);
        let per_fabric = episodes
            .chunk_by(|a, b| a.fabric == b.fabric)
            .map(|g| FabricGroup { fabric: g[0].fabric, aggregates: Aggregates::from_rows(g) })
            .collect();
        Self { aggregates: Aggregates::from_rows(&episodes), per_fabric, episodes }
    }

    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Self {
        Self::from_rows(outcomes.iter().map(EpisodeRow::from).collect())
    }

    /// True when every stored aggregate equals its recomputation from the rows.
    pub fn is_consistent(&self) -> bool {
        *self == Self::from_rows(self.episodes.clone())
    }

    pub fn d_sums(&self) -> Vec<f64> {
        self.episodes.iter().map(|r| r.d_sum).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fabric: usize, d_sum: f64, success: bool) -> EpisodeRow {
        EpisodeRow { fabric, d0: d_sum / 2.0, d1: d_sum / 2.0, d_sum, success, steps: 25 }
    }

    #[test]
    fn empty_report_is_undefined_not_nan() {
        let r = EvalReport::from_rows(vec![]);
        assert_eq!(r.aggregates.episodes, 0);
        assert_eq!(r.aggregates.success_rate, Stat::Undefined(Undefined::Undefined));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"success_rate\":\"undefined\""), "{json}");
        assert!(!json.contains("NaN") && !json.contains("null"));
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }

    #[test]
    fn groups_by_fabric() {
        let r = EvalReport::from_rows(vec![row(1, 0.2, false), row(0, 0.1, true), row(1, 0.4, true)]);
        assert_eq!(r.per_fabric.len(), 2);
        assert_eq!(r.per_fabric[1].aggregates.episodes, 2);
        assert_eq!(r.per_fabric[1].aggregates.success_rate, Stat::Value(0.5));
        assert_eq!(r.aggregates.std_d_sum.value().map(|s| (s - 0.124_721_912_892_464_7).abs() < 1e-12), Some(true));
        assert!(r.is_consistent());
    }
}
