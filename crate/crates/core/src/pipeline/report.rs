use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{Stage, StageTimings};

use super::{PipelineResult, ResultFlags};

/// Nearest-rank percentile of an ascending slice. `p` in `[0, 100]`.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
}

impl Percentiles {
    pub fn of(mut values: Vec<u64>) -> Self {
        values.sort_unstable();
        Self {
            p50: nearest_rank(&values, 50.0).unwrap_or(0),
            p95: nearest_rank(&values, 95.0).unwrap_or(0),
            p99: nearest_rank(&values, 99.0).unwrap_or(0),
        }
    }
}

/// Aggregate latency and gating statistics of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: u64,
    pub dropped: u64,
    pub bypass_rate: f64,
    pub reuse_rate: f64,
    pub stage_us: BTreeMap<String, Percentiles>,
    pub total_us: Percentiles,
}

impl RunReport {
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a PipelineResult>, dropped: u64) -> Self {
        Self::from_parts(results.into_iter().map(|r| (r.flags, &r.timings)), dropped)
    }

    /// Same as [`RunReport::from_results`] from flags and timings alone.
    pub fn from_parts<'a>(
        results: impl IntoIterator<Item = (ResultFlags, &'a StageTimings)>,
        dropped: u64,
    ) -> Self {
        let mut frames = 0u64;
        let (mut bypass, mut reuse) = (0u64, 0u64);
        let mut per_stage: BTreeMap<Stage, Vec<u64>> = BTreeMap::new();
        let mut totals = Vec::new();
        for (flags, timings) in results {
            frames += 1;
            bypass += flags.frame_passer_bypass as u64;
            reuse += flags.early_stop_reuse as u64;
            for (stage, us) in timings.iter() {
                if stage == Stage::Total {
                    totals.push(us);
                } else {
                    per_stage.entry(stage).or_default().push(us);
                }
            }
        }
        let rate = |n: u64| if frames == 0 { 0.0 } else { n as f64 / frames as f64 };
        Self {
            frames,
            dropped,
            bypass_rate: rate(bypass),
            reuse_rate: rate(reuse),
            stage_us: per_stage
                .into_iter()
                .map(|(s, v)| (s.as_str().to_string(), Percentiles::of(v)))
                .collect(),
            total_us: Percentiles::of(totals),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(nearest_rank(&v, 50.0), Some(50));
        assert_eq!(nearest_rank(&v, 95.0), Some(95));
        assert_eq!(nearest_rank(&v, 0.0), Some(1));
        assert_eq!(nearest_rank(&[7u64], 99.0), Some(7));
        assert_eq!(nearest_rank::<u64>(&[], 50.0), None);
        assert_eq!(Percentiles::of(vec![3, 1, 2]), Percentiles { p50: 2, p95: 3, p99: 3 });
    }

    #[test]
    fn empty_report() {
        let r = RunReport::from_results(std::iter::empty(), 0);
        assert_eq!(r.frames, 0);
        assert_eq!(r.bypass_rate, 0.0);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["frames", "dropped", "bypass_rate", "reuse_rate", "stage_us", "total_us"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
