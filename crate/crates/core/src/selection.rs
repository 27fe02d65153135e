//! Graph-based harmonic selection (GHSA).
//!
//! Per-harmonic IF tracks are correlated pairwise; correlations below a
//! threshold `η` are dropped and the rest form a weighted graph over the
//! harmonics. Among the maximal cliques (Bron-Kerbosch with pivoting) the one
//! with the greatest average edge weight is selected. An edgeless graph
//! falls back to the single smoothest track.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::enhancement::EnhancedSignal;
use crate::error::{invalid, EnfError, Result};
use crate::model::{FrameConfig, IfSeries, SampleBuffer};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{normalize_to_2nd, track_if};
use crate::SEARCH_BAND_HZ;

/// Upper cap on the correlation threshold.
pub const ETA_CAP: f64 = 0.8;

/// Pearson correlation clamped below at 0; 0 if either input is constant.
pub fn clamped_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(0.0, 1.0)
}

/// Pairwise clamped correlations of the tracks in key order; unit diagonal.
pub fn corr_matrix(series: &BTreeMap<u32, IfSeries>) -> Result<Vec<Vec<f64>>> {
    let tracks: Vec<&IfSeries> = series.values().collect();
    let Some(first) = tracks.first() else {
        return invalid("no series to correlate");
    };
    let len = first.len();
    if len < 2 {
        return invalid("series need at least two frames");
    }
    if let Some(bad) = tracks.iter().find(|t| t.len() != len) {
        return Err(EnfError::LengthMismatch { expected: len, actual: bad.len() });
    }
    let k = tracks.len();
    let mut r = vec![vec![0.0; k]; k];
    for i in 0..k {
        r[i][i] = 1.0;
        for j in i + 1..k {
            let c = clamped_pearson(&tracks[i].values_hz, &tracks[j].values_hz);
            r[i][j] = c;
            r[j][i] = c;
        }
    }
    Ok(r)
}

/// `η = min(κ·η_R, 0.8)`, with `η_R` the largest correlation observed over
/// `n_rep` independent white-noise pairs of length `n_enf`.
pub fn threshold_eta(n_enf: usize, kappa: f64, n_rep: usize, seed: u64) -> Result<f64> {
    if n_enf < 2 {
        return invalid(format!("need at least 2 frames, got {n_enf}"));
    }
    if !(kappa > 1.0) {
        return invalid(format!("kappa must exceed 1, got {kappa}"));
    }
    if n_rep < 1 {
        return invalid("n_rep must be at least 1");
    }
    let eta_r = (0..n_rep as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from_seed(derive_seed(seed, rep));
            let a: Vec<f64> = (0..n_enf).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n_enf).map(|_| StandardNormal.sample(&mut rng)).collect();
            clamped_pearson(&a, &b)
        })
        .reduce(|| 0.0, f64::max);
    Ok((kappa * eta_r).min(ETA_CAP))
}

/// Weighted undirected graph over harmonics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicGraph {
    pub vertices: Vec<u32>,
    pub adjacency: Vec<Vec<f64>>,
    pub eta: f64,
}

impl HarmonicGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_edges(&self) -> bool {
        self.adjacency.iter().flatten().any(|w| *w > 0.0)
    }

    fn neighbour_masks(&self) -> Vec<u64> {
        self.adjacency
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .fold(0u64, |m, (j, _)| m | (1 << j))
            })
            .collect()
    }
}

/// Zero the diagonal and every entry below `eta`.
pub fn build_graph(vertices: &[u32], r: &[Vec<f64>], eta: f64) -> Result<HarmonicGraph> {
    let k = vertices.len();
    if r.len() != k || r.iter().any(|row| row.len() != k) {
        return invalid(format!("correlation matrix must be {k}×{k}"));
    }
    if k > 64 {
        return invalid("at most 64 harmonics are supported");
    }
    let adjacency = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j || r[i][j] < eta { 0.0 } else { r[i][j] })
                .collect()
        })
        .collect();
    Ok(HarmonicGraph { vertices: vertices.to_vec(), adjacency, eta })
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let b = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(b)
        }
    })
}

fn bron_kerbosch(r: u64, mut p: u64, mut x: u64, adj: &[u64], out: &mut Vec<u64>) {
    if p == 0 {
        if x == 0 && r.count_ones() >= 2 {
            out.push(r);
        }
        return;
    }
    let pivot = bits(p | x).max_by_key(|&u| (p & adj[u]).count_ones()).unwrap();
    for v in bits(p & !adj[pivot]) {
        let bit = 1u64 << v;
        bron_kerbosch(r | bit, p & adj[v], x & adj[v], adj, out);
        p &= !bit;
        x |= bit;
    }
}

pub(crate) fn mask_to_vertices(mask: u64) -> Vec<usize> {
    bits(mask).collect()
}

/// Canonical clique order: larger first, then lexicographic.
pub(crate) fn sort_cliques(cliques: &mut [Vec<usize>]) {
    cliques.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
}

/// All maximal cliques with at least two vertices (as vertex positions).
pub fn maximal_cliques(g: &HarmonicGraph) -> Vec<Vec<usize>> {
    let adj = g.neighbour_masks();
    let all = if g.len() == 64 { u64::MAX } else { (1u64 << g.len()) - 1 };
    let mut masks = Vec::new();
    bron_kerbosch(0, all, 0, &adj, &mut masks);
    let mut cliques: Vec<Vec<usize>> = masks.into_iter().map(mask_to_vertices).collect();
    sort_cliques(&mut cliques);
    cliques
}

/// Mean edge weight of a clique given as ascending vertex positions.
pub fn average_weight(adjacency: &[Vec<f64>], clique: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in clique.iter().enumerate() {
        for &j in &clique[a + 1..] {
            sum += adjacency[i][j];
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Whether `a` beats `b`: higher average weight, then more vertices, then
/// lexicographically smaller.
pub(crate) fn better(a: (&[usize], f64), b: (&[usize], f64)) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    if a.0.len() != b.0.len() {
        return a.0.len() > b.0.len();
    }
    a.0 < b.0
}

/// Outcome of harmonic selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliqueSelection {
    /// Selected harmonic indices, ascending.
    pub omega: Vec<u32>,
    /// Average edge weight of the winning clique; `None` for the fallback.
    pub average_weight: Option<f64>,
    pub all_maximal_cliques: Vec<Vec<u32>>,
    /// Unthresholded correlations between the tracks, in `graph.vertices`
    /// order.
    pub correlation: Vec<Vec<f64>>,
    pub graph: HarmonicGraph,
}

impl CliqueSelection {
    pub fn is_fallback(&self) -> bool {
        self.average_weight.is_none()
    }
}

/// Positions of the maximal clique with the greatest average weight.
pub fn select_mwc(cliques: &[Vec<usize>], g: &HarmonicGraph) -> Option<(Vec<usize>, f64)> {
    let mut best: Option<(&[usize], f64)> = None;
    for c in cliques {
        let w = average_weight(&g.adjacency, c);
        if best.is_none_or(|b| better((c, w), b)) {
            best = Some((c, w));
        }
    }
    best.map(|(c, w)| (c.to_vec(), w))
}

fn total_variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Harmonic whose track has the least total variation; ties to the
/// smallest index.
pub fn smoothest_component(series: &BTreeMap<u32, IfSeries>) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (&m, s) in series {
        let tv = total_variation(&s.values_hz);
        if best.is_none_or(|(_, b)| tv < b) {
            best = Some((m, tv));
        }
    }
    best.map(|(m, _)| m).ok_or_else(|| EnfError::InvalidArgument("no series given".into()))
}

/// Selection from normalized per-harmonic tracks.
pub fn select_from_tracks(tracks: &BTreeMap<u32, IfSeries>, eta: f64) -> Result<CliqueSelection> {
    let r = corr_matrix(tracks)?;
    let vertices: Vec<u32> = tracks.keys().copied().collect();
    let graph = build_graph(&vertices, &r, eta)?;
    let cliques = maximal_cliques(&graph);
    let to_harmonics = |c: &[usize]| c.iter().map(|&i| vertices[i]).collect::<Vec<u32>>();
    let all_maximal_cliques = cliques.iter().map(|c| to_harmonics(c)).collect();
    let (omega, average_weight) = match select_mwc(&cliques, &graph) {
        Some((c, w)) => (to_harmonics(&c), Some(w)),
        None => (vec![smoothest_component(tracks)?], None),
    };
    Ok(CliqueSelection { omega, average_weight, all_maximal_cliques, correlation: r, graph })
}

fn sorted_set(harmonics: &[u32]) -> Result<Vec<u32>> {
    let mut set = harmonics.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.is_empty() {
        return invalid("empty harmonic set");
    }
    Ok(set)
}

/// Normalized per-harmonic tracks of a mixture.
pub fn harmonic_tracks(x: &SampleBuffer, harmonics: &[u32], cfg: &FrameConfig) -> Result<BTreeMap<u32, IfSeries>> {
    sorted_set(harmonics)?
        .into_iter()
        .map(|m| Ok((m, normalize_to_2nd(&track_if(x, m, cfg, SEARCH_BAND_HZ)?)?)))
        .collect()
}

/// Normalized track of every requested enhanced component.
pub fn enhanced_tracks(
    enhanced: &EnhancedSignal,
    harmonics: &[u32],
    cfg: &FrameConfig,
) -> Result<BTreeMap<u32, IfSeries>> {
    sorted_set(harmonics)?
        .into_iter()
        .map(|m| {
            let c = enhanced
                .component(m)
                .ok_or_else(|| EnfError::InvalidArgument(format!("no enhanced component for harmonic {m}")))?;
            Ok((m, normalize_to_2nd(&track_if(c, m, cfg, SEARCH_BAND_HZ)?)?))
        })
        .collect()
}

/// GHSA over the enhanced components.
pub fn ghsa(enhanced: &EnhancedSignal, eta: f64, harmonics: &[u32], cfg: &FrameConfig) -> Result<CliqueSelection> {
    select_from_tracks(&enhanced_tracks(enhanced, harmonics, cfg)?, eta)
}

/// GHSA over an unenhanced (comb-filtered) mixture.
pub fn ghsa_mixture(x: &SampleBuffer, eta: f64, harmonics: &[u32], cfg: &FrameConfig) -> Result<CliqueSelection> {
    select_from_tracks(&harmonic_tracks(x, harmonics, cfg)?, eta)
}
