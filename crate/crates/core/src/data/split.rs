//! Splitting a directory of samples into two domains by histogram clustering,
//! plus controlled cross-cluster mixing.

use serde::{Deserialize, Serialize};

use super::histogram::HistogramVector;
use super::kmeans::kmeans_two;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Sample ids in input order.
    pub sample_ids: Vec<String>,
    /// Cluster id per sample, 1 or 2.
    pub cluster_assignments: Vec<usize>,
    /// Domain manifests: cluster members plus any mixed-in opposites.
    pub domain_a: Vec<String>,
    pub domain_b: Vec<String>,
    pub mixing_percent: f64,
    /// All histograms were identical; the split is arbitrary.
    pub degenerate: bool,
}

/// Clusters histogram vectors into two domains. Domain A receives cluster 1,
/// domain B cluster 2.
pub fn build_split(
    ids: &[String],
    histograms: &[HistogramVector],
    balanced: bool,
    rng: &mut SeedStream,
) -> Result<SplitPlan> {
    if ids.len() != histograms.len() {
        return Err(Error::Argument(format!(
            "{} ids but {} histograms",
            ids.len(),
            histograms.len()
        )));
    }
    let points: Vec<Vec<f64>> = histograms.iter().map(|h| h.values.clone()).collect();
    let res = kmeans_two(&points, rng, balanced)?;
    let cluster_assignments: Vec<usize> = res.assignments.iter().map(|&a| a + 1).collect();
    let domain_a: Vec<String> = ids
        .iter()
        .zip(&cluster_assignments)
        .filter(|(_, &c)| c == 1)
        .map(|(id, _)| id.clone())
        .collect();
    let domain_b: Vec<String> = ids
        .iter()
        .zip(&cluster_assignments)
        .filter(|(_, &c)| c == 2)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(SplitPlan {
        sample_ids: ids.to_vec(),
        cluster_assignments,
        domain_a,
        domain_b,
        mixing_percent: 0.0,
        degenerate: res.degenerate,
    })
}

/// Adds floor(percent% of the opposite cluster's size) randomly chosen
/// opposite-cluster samples to each domain manifest.
pub fn apply_mixing(plan: &SplitPlan, percent: f64, rng: &mut SeedStream) -> Result<SplitPlan> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::Argument(format!(
            "mixing percent must be in [0, 100], got {percent}"
        )));
    }
    let cluster1: Vec<&String> = plan
        .sample_ids
        .iter()
        .zip(&plan.cluster_assignments)
        .filter(|(_, &c)| c == 1)
        .map(|(id, _)| id)
        .collect();
    let cluster2: Vec<&String> = plan
        .sample_ids
        .iter()
        .zip(&plan.cluster_assignments)
        .filter(|(_, &c)| c == 2)
        .map(|(id, _)| id)
        .collect();

    let mut pick = |from: &[&String], count: usize| -> Vec<String> {
        let chosen = rng.sample_distinct(from.len(), count);
        chosen.into_iter().map(|i| from[i].clone()).collect()
    };

    let into_a = (percent / 100.0 * cluster2.len() as f64).floor() as usize;
    let into_b = (percent / 100.0 * cluster1.len() as f64).floor() as usize;
    let mut out = plan.clone();
    out.domain_a = cluster1.iter().map(|s| (*s).clone()).collect();
    out.domain_b = cluster2.iter().map(|s| (*s).clone()).collect();
    out.domain_a.extend(pick(&cluster2, into_a));
    out.domain_b.extend(pick(&cluster1, into_b));
    out.mixing_percent = percent;
    Ok(out)
}
