//! The two-component coverage model: expected coverage with recursive
//! stutter contributions, marker-imbalance estimation, the noise model, and
//! the joint log-likelihood.
//!
//! The allele component models the coverage of sequence `a` on marker `m` as
//! `PG1(mu_ma, gamma)` with
//!
//! `mu_ma = nu * beta_m * sum_c (g_mac + s_mac) * phi_c`
//!
//! where `s` collects stutter received through the parent graph. Every
//! observation whose expected coverage is zero under the candidate genotypes
//! belongs to the noise component, a one-inflated, zero-truncated
//! `PG1(noise_mu, noise_rho)` with inflation weight `noise_omega`.

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::pg::{pg1_log_pmf, Pg1Params};

/// One observed sequence at a marker.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub bases: String,
    pub repeat_count: Option<u32>,
    pub coverage: u64,
}

/// A marker with its observed sequences and coverage counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerData {
    pub name: String,
    pub sequences: Vec<SequenceRecord>,
}

/// Per-marker observed sequences with coverage counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixtureSample {
    pub markers: Vec<MarkerData>,
}

impl MixtureSample {
    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    /// `A_m` for every marker.
    pub fn marker_sizes(&self) -> Vec<usize> {
        self.markers.iter().map(|m| m.sequences.len()).collect()
    }

    pub fn total_coverage(&self) -> u64 {
        self.markers
            .iter()
            .flat_map(|m| m.sequences.iter().map(|s| s.coverage))
            .sum()
    }

    /// Checks the structural invariants: at least one sequence per marker and
    /// unique sequence identifiers within a marker.
    pub fn validate(&self) -> Result<()> {
        if self.markers.is_empty() {
            return Err(Error::DegenerateInput("sample has no markers".into()));
        }
        for marker in &self.markers {
            if marker.sequences.is_empty() {
                return Err(Error::DegenerateInput(format!(
                    "marker {} has no observed sequences",
                    marker.name
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for seq in &marker.sequences {
                if !seen.insert(seq.id.as_str()) {
                    return Err(Error::DegenerateInput(format!(
                        "marker {}: duplicate sequence id {}",
                        marker.name, seq.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A stutter edge: the child receives `ratio` times the parent's dose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StutterEdge {
    pub parent: usize,
    pub ratio: f64,
}

/// Parent sets and stutter ratios per marker, with the recursion depth.
#[derive(Debug, Clone, PartialEq)]
pub struct StutterGraph {
    /// `parents[m][a]` lists the potential parents of sequence `a`.
    pub parents: Vec<Vec<Vec<StutterEdge>>>,
    /// Maximum recursion depth `k`.
    pub depth: u32,
}

impl StutterGraph {
    /// A graph with no edges (no stutter anywhere).
    pub fn empty(marker_sizes: &[usize], depth: u32) -> Self {
        Self {
            parents: marker_sizes.iter().map(|&a| vec![Vec::new(); a]).collect(),
            depth,
        }
    }

    /// Builds the default parent rule from repeat annotations: a sequence
    /// with `n` repeats has every same-marker sequence with `n + 1` repeats
    /// as a potential parent, all with stutter ratio `xi`. Sequences without
    /// a repeat annotation get no edges.
    pub fn from_repeat_counts(sample: &MixtureSample, xi: f64, depth: u32) -> Result<Self> {
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::InvalidParameter(format!(
                "stutter ratio must be in [0, 1), got {xi}"
            )));
        }
        let mut parents = Vec::with_capacity(sample.markers.len());
        for marker in &sample.markers {
            let mut per_child: Vec<Vec<StutterEdge>> = vec![Vec::new(); marker.sequences.len()];
            for (child, seq) in marker.sequences.iter().enumerate() {
                let Some(r) = seq.repeat_count else { continue };
                for (parent, cand) in marker.sequences.iter().enumerate() {
                    if cand.repeat_count == Some(r + 1) {
                        per_child[child].push(StutterEdge { parent, ratio: xi });
                    }
                }
            }
            parents.push(per_child);
        }
        let graph = Self { parents, depth };
        graph.validate(&sample.marker_sizes())?;
        Ok(graph)
    }

    /// Checks ratios are in [0, 1), parent indices are in range, and the
    /// parent relation is acyclic.
    pub fn validate(&self, marker_sizes: &[usize]) -> Result<()> {
        if self.parents.len() != marker_sizes.len() {
            return Err(Error::DimensionMismatch(format!(
                "stutter graph covers {} markers, sample has {}",
                self.parents.len(),
                marker_sizes.len()
            )));
        }
        for (m, per_child) in self.parents.iter().enumerate() {
            let a_m = marker_sizes[m];
            if per_child.len() != a_m {
                return Err(Error::DimensionMismatch(format!(
                    "marker {m}: graph has {} children, sample has {a_m} sequences",
                    per_child.len()
                )));
            }
            for edges in per_child {
                for e in edges {
                    if e.parent >= a_m {
                        return Err(Error::StutterGraph(format!(
                            "marker {m}: parent index {} out of range",
                            e.parent
                        )));
                    }
                    if !(0.0..1.0).contains(&e.ratio) {
                        return Err(Error::StutterGraph(format!(
                            "marker {m}: stutter ratio {} outside [0, 1)",
                            e.ratio
                        )));
                    }
                }
            }
            // Cycle check in the parent direction.
            let mut state = vec![0u8; a_m]; // 0 unvisited, 1 in progress, 2 done
            for start in 0..a_m {
                if state[start] != 0 {
                    continue;
                }
                let mut stack = vec![(start, 0usize)];
                state[start] = 1;
                while let Some(&mut (node, ref mut edge_idx)) = stack.last_mut() {
                    if *edge_idx < per_child[node].len() {
                        let next = per_child[node][*edge_idx].parent;
                        *edge_idx += 1;
                        match state[next] {
                            0 => {
                                state[next] = 1;
                                stack.push((next, 0));
                            }
                            1 => {
                                return Err(Error::StutterGraph(format!(
                                    "marker {m}: cycle through sequence {next}"
                                )));
                            }
                            _ => {}
                        }
                    } else {
                        state[node] = 2;
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }
}

/// Marker-imbalance parameters: the blended `beta`, the blend weight, and the
/// optional externally supplied database estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerImbalance {
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub beta_database: Option<Vec<f64>>,
}

impl MarkerImbalance {
    /// Builds the final `beta` for a sample: the convex blend of the
    /// method-of-moments estimate with the database estimate.
    pub fn from_sample(
        sample: &MixtureSample,
        beta_database: Option<Vec<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        let mom = beta_mom(sample)?;
        let beta = beta_blend(&mom, beta_database.as_deref(), lambda)?;
        Ok(Self {
            beta,
            lambda,
            beta_database,
        })
    }
}

/// Method-of-moments marker imbalances:
/// `beta_m = sum_a y_ma / ((1/M) sum_{m,a} y_ma)`. The result sums to `M`.
pub fn beta_mom(sample: &MixtureSample) -> Result<Vec<f64>> {
    let m = sample.n_markers();
    let total = sample.total_coverage();
    if total == 0 {
        return Err(Error::DegenerateInput(
            "cannot estimate marker imbalances from an all-zero sample".into(),
        ));
    }
    let mean_total = total as f64 / m as f64;
    Ok(sample
        .markers
        .iter()
        .map(|marker| {
            let marker_total: u64 = marker.sequences.iter().map(|s| s.coverage).sum();
            marker_total as f64 / mean_total
        })
        .collect())
}

/// Convex blend `lambda * database + (1 - lambda) * mom`, elementwise.
pub fn beta_blend(mom: &[f64], database: Option<&[f64]>, lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be in [0, 1], got {lambda}"
        )));
    }
    match database {
        None => {
            if lambda > 0.0 {
                return Err(Error::InvalidParameter(
                    "lambda > 0 requires a database beta table".into(),
                ));
            }
            Ok(mom.to_vec())
        }
        Some(db) => {
            if db.len() != mom.len() {
                return Err(Error::DimensionMismatch(format!(
                    "database beta has {} markers, sample has {}",
                    db.len(),
                    mom.len()
                )));
            }
            Ok(mom
                .iter()
                .zip(db)
                .map(|(&m, &d)| lambda * d + (1.0 - lambda) * m)
                .collect())
        }
    }
}

/// Continuous model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Average heterozygote coverage scale.
    pub nu: f64,
    /// Allele-component overdispersion.
    pub gamma: f64,
    /// Mixture proportions, one per contributor, summing to 1.
    pub phi: Vec<f64>,
    pub noise_mu: f64,
    pub noise_rho: f64,
    /// One-inflation weight in [0, 1).
    pub noise_omega: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu", self.nu),
            ("gamma", self.gamma),
            ("noise_mu", self.noise_mu),
            ("noise_rho", self.noise_rho),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.noise_omega) {
            return Err(Error::InvalidParameter(format!(
                "noise_omega must be in [0, 1), got {}",
                self.noise_omega
            )));
        }
        if self.phi.is_empty() {
            return Err(Error::InvalidParameter("phi must be non-empty".into()));
        }
        let sum: f64 = self.phi.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.phi.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "phi must be a strictly positive simplex vector, got {:?}",
                self.phi
            )));
        }
        Ok(())
    }
}

/// Observation indices split into the allele component and the noise
/// component, per marker. The two sets partition the sequences of a marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedObservations {
    pub allele: Vec<Vec<usize>>,
    pub noise: Vec<Vec<usize>>,
}

/// Stutter contributions `s^(k)` for one marker, by the recursion
/// `s^(k)_ac = sum_{A in P(a)} xi_A (g_Ac + s^(k-1)_Ac)` with `s^(0) = 0`.
/// `counts` is the `A_m x C` genotype matrix, sequence-major. The result has
/// the same layout.
pub fn stutter_contribution(
    counts: &[u8],
    n_contributors: usize,
    edges: &[Vec<StutterEdge>],
    depth: u32,
) -> Vec<f64> {
    let n = counts.len();
    let mut prev = vec![0.0; n];
    if depth == 0 || n_contributors == 0 {
        return prev;
    }
    let mut next = vec![0.0; n];
    for _ in 0..depth {
        for (a, parent_edges) in edges.iter().enumerate() {
            for c in 0..n_contributors {
                let mut s = 0.0;
                for e in parent_edges {
                    let idx = e.parent * n_contributors + c;
                    s += e.ratio * (f64::from(counts[idx]) + prev[idx]);
                }
                next[a * n_contributors + c] = s;
            }
        }
        std::mem::swap(&mut prev, &mut next);
    }
    prev
}

/// The per-contributor dose matrix `g + s^(k)` for one marker, sequence-major.
pub fn dose_matrix(
    counts: &[u8],
    n_contributors: usize,
    edges: &[Vec<StutterEdge>],
    depth: u32,
) -> Vec<f64> {
    let mut dose = stutter_contribution(counts, n_contributors, edges, depth);
    for (d, &g) in dose.iter_mut().zip(counts) {
        *d += f64::from(g);
    }
    dose
}

/// Expected coverage vector for one marker:
/// `mu_a = nu * beta_m * sum_c dose_ac * phi_c`.
pub fn expected_coverage_from_doses(
    dose: &[f64],
    n_contributors: usize,
    params: &ModelParams,
    beta_m: f64,
) -> Vec<f64> {
    let a_m = if n_contributors == 0 {
        0
    } else {
        dose.len() / n_contributors
    };
    let mut mu = vec![0.0; a_m];
    for a in 0..a_m {
        let mut acc = 0.0;
        for c in 0..n_contributors {
            acc += dose[a * n_contributors + c] * params.phi[c];
        }
        mu[a] = params.nu * beta_m * acc;
    }
    mu
}

/// Expected coverage for one marker of a sample, from genotype counts.
pub fn expected_coverage(
    sample: &MixtureSample,
    marker_index: usize,
    genotypes: &GenotypeMatrix,
    graph: &StutterGraph,
    params: &ModelParams,
    beta_m: f64,
) -> Result<Vec<f64>> {
    let a_m = sample.markers[marker_index].sequences.len();
    let counts = &genotypes.counts[marker_index];
    if counts.len() != a_m * genotypes.n_contributors {
        return Err(Error::DimensionMismatch(format!(
            "marker {marker_index}: genotype matrix does not match sample dimensions"
        )));
    }
    if params.phi.len() != genotypes.n_contributors {
        return Err(Error::DimensionMismatch(format!(
            "phi has {} entries for {} contributors",
            params.phi.len(),
            genotypes.n_contributors
        )));
    }
    let dose = dose_matrix(
        counts,
        genotypes.n_contributors,
        &graph.parents[marker_index],
        graph.depth,
    );
    Ok(expected_coverage_from_doses(
        &dose,
        genotypes.n_contributors,
        params,
        beta_m,
    ))
}

/// Splits every marker's sequences into the allele set (strictly positive
/// total dose under the candidate genotypes, including stutter chains) and
/// the noise set (the complement).
pub fn classify(
    sample: &MixtureSample,
    genotypes: &GenotypeMatrix,
    graph: &StutterGraph,
) -> ClassifiedObservations {
    let c = genotypes.n_contributors;
    let mut allele = Vec::with_capacity(sample.markers.len());
    let mut noise = Vec::with_capacity(sample.markers.len());
    for (m, marker) in sample.markers.iter().enumerate() {
        let dose = dose_matrix(&genotypes.counts[m], c, &graph.parents[m], graph.depth);
        let mut al = Vec::new();
        let mut no = Vec::new();
        for a in 0..marker.sequences.len() {
            let total: f64 = (0..c).map(|cc| dose[a * c + cc]).sum();
            if total > 0.0 {
                al.push(a);
            } else {
                no.push(a);
            }
        }
        allele.push(al);
        noise.push(no);
    }
    ClassifiedObservations { allele, noise }
}

/// Log-pmf of the one-inflated, zero-truncated noise model at `y >= 1`:
/// `omega * 1[y = 1] + (1 - omega) * PG1(y; mu, rho) / (1 - PG1(0; mu, rho))`.
pub fn noise_log_pmf(y: u64, noise_mu: f64, noise_rho: f64, noise_omega: f64) -> Result<f64> {
    if y == 0 {
        return Err(Error::InvalidParameter(
            "zero coverage cannot be noise: the string would not have been observed".into(),
        ));
    }
    if !(0.0..=1.0).contains(&noise_omega) {
        return Err(Error::InvalidParameter(format!(
            "noise_omega must be in [0, 1], got {noise_omega}"
        )));
    }
    let params = Pg1Params::new(noise_mu, noise_rho)?;
    Ok(noise_log_pmf_unchecked(y, params, noise_omega))
}

#[inline]
pub(crate) fn noise_log_pmf_unchecked(y: u64, params: Pg1Params, omega: f64) -> f64 {
    let lp0 = pg1_log_pmf(0, params);
    // log(1 - P(0)) via log1p for stability when P(0) is small.
    let log_trunc = (-lp0.exp()).ln_1p();
    let lt = pg1_log_pmf(y, params) - log_trunc;
    if omega <= 0.0 {
        return lt;
    }
    if y == 1 {
        // log(omega + (1 - omega) exp(lt)), stable in log space.
        let a = omega.ln();
        let b = (1.0 - omega).ln() + lt;
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        hi + (lo - hi).exp().ln_1p()
    } else if omega >= 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - omega).ln() + lt
    }
}

/// Joint log-likelihood of the two-component model: the sum over markers of
/// the allele-component PG1 terms plus the noise-component terms. Marker
/// terms are accumulated in fixed marker order.
pub fn joint_log_likelihood(
    sample: &MixtureSample,
    classified: &ClassifiedObservations,
    genotypes: &GenotypeMatrix,
    graph: &StutterGraph,
    beta: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    params.validate()?;
    if beta.len() != sample.n_markers() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries for {} markers",
            beta.len(),
            sample.n_markers()
        )));
    }
    let noise_params = Pg1Params::new(params.noise_mu, params.noise_rho)?;
    let mut ll = 0.0;
    for (m, marker) in sample.markers.iter().enumerate() {
        let mu = expected_coverage(sample, m, genotypes, graph, params, beta[m])?;
        for &a in &classified.allele[m] {
            if mu[a] <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "marker {}: sequence {} classified as allele but has zero expected coverage",
                    marker.name, marker.sequences[a].id
                )));
            }
            ll += pg1_log_pmf(
                marker.sequences[a].coverage,
                Pg1Params {
                    mu: mu[a],
                    gamma: params.gamma,
                },
            );
        }
        for &a in &classified.noise[m] {
            let y = marker.sequences[a].coverage;
            if y == 0 {
                return Err(Error::InvalidParameter(format!(
                    "marker {}: sequence {} has zero coverage in the noise set",
                    marker.name, marker.sequences[a].id
                )));
            }
            ll += noise_log_pmf_unchecked(y, noise_params, params.noise_omega);
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::GenotypeMatrix;
    use crate::pg::pg1_log_pmf;

    fn sample_with_coverages(per_marker: &[&[u64]]) -> MixtureSample {
        MixtureSample {
            markers: per_marker
                .iter()
                .enumerate()
                .map(|(m, covs)| MarkerData {
                    name: format!("M{m}"),
                    sequences: covs
                        .iter()
                        .enumerate()
                        .map(|(a, &coverage)| SequenceRecord {
                            id: format!("M{m}S{a}"),
                            bases: String::new(),
                            repeat_count: None,
                            coverage,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn chain_graph(sizes: &[usize], edges: &[(usize, usize, usize, f64)], depth: u32) -> StutterGraph {
        let mut graph = StutterGraph::empty(sizes, depth);
        for &(m, child, parent, ratio) in edges {
            graph.parents[m][child].push(StutterEdge { parent, ratio });
        }
        graph
    }

    #[test]
    fn stutter_depth_zero_is_all_zero() {
        let counts = vec![2u8, 0, 0];
        let graph = chain_graph(&[3], &[(0, 1, 0, 0.15)], 0);
        let s = stutter_contribution(&counts, 1, &graph.parents[0], graph.depth);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_parent_one_step() {
        // a <- A with xi = 0.15 and g_A = 1 gives s_a = 0.15 at depth 1.
        let counts = vec![1u8, 0];
        let graph = chain_graph(&[2], &[(0, 1, 0, 0.15)], 1);
        let s = stutter_contribution(&counts, 1, &graph.parents[0], graph.depth);
        assert!((s[1] - 0.15).abs() < 1e-15);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn four_level_chain_passes_about_half_of_a_thousand() {
        // Chain 3 -> 2 -> 1 -> 0 with xi = 0.15 everywhere: a dose at the top
        // contributes 0.15^4 of itself four levels down. With dose 1000 the
        // bottom receives about one half.
        let sizes = [5usize];
        let counts = vec![0u8, 0, 0, 0, 2];
        let graph = chain_graph(
            &sizes,
            &[
                (0, 3, 4, 0.15),
                (0, 2, 3, 0.15),
                (0, 1, 2, 0.15),
                (0, 0, 1, 0.15),
            ],
            4,
        );
        // Scale: dose of 2 at the top; multiply by 500 to reach 1000.
        let s = stutter_contribution(&counts, 1, &graph.parents[0], graph.depth);
        let received_at_bottom = s[0] * 500.0;
        assert!((received_at_bottom - 1000.0 * 0.15f64.powi(4)).abs() < 1e-9);
        assert!((received_at_bottom - 0.5).abs() < 0.01);
    }

    #[test]
    fn cycle_is_rejected() {
        let graph = chain_graph(&[2], &[(0, 0, 1, 0.1), (0, 1, 0, 0.1)], 2);
        assert!(matches!(
            graph.validate(&[2]),
            Err(Error::StutterGraph(_))
        ));
    }

    #[test]
    fn expected_coverage_plugin_cases() {
        let sample = sample_with_coverages(&[&[100, 10]]);
        let graph = StutterGraph::empty(&[2], 2);
        // Single contributor homozygote: mu = 2 nu beta.
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(0, 0)]], &[2]).unwrap();
        let params = ModelParams {
            nu: 50.0,
            gamma: 1.0,
            phi: vec![1.0],
            noise_mu: 1.0,
            noise_rho: 1.0,
            noise_omega: 0.0,
        };
        let mu = expected_coverage(&sample, 0, &g, &graph, &params, 1.5).unwrap();
        assert!((mu[0] - 2.0 * 50.0 * 1.5).abs() < 1e-12);
        assert_eq!(mu[1], 0.0);

        // Two contributors sharing an allele with phi summing over it:
        // g_a1 = g_a2 = 1, phi = (0.75, 0.25) gives mu_a = nu.
        let g2 = GenotypeMatrix::from_allele_pairs(&[vec![(0, 1)], vec![(0, 1)]], &[2]).unwrap();
        let params2 = ModelParams {
            phi: vec![0.75, 0.25],
            ..params.clone()
        };
        let mu2 = expected_coverage(&sample, 0, &g2, &graph, &params2, 1.0).unwrap();
        assert!((mu2[0] - params2.nu).abs() < 1e-12);
        assert!((mu2[1] - params2.nu).abs() < 1e-12);
    }

    #[test]
    fn expected_coverage_with_one_stutter_edge() {
        // Heterozygote at sequence 1, with sequence 0 a stutter child at
        // xi = 0.1: hand recursion on a 2-sequence marker gives
        // mu_0 = nu * 0.1 * 1.
        let sample = sample_with_coverages(&[&[5, 100]]);
        let graph = chain_graph(&[2], &[(0, 0, 1, 0.1)], 1);
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(1, 1)]], &[2]).unwrap();
        let params = ModelParams {
            nu: 80.0,
            gamma: 1.0,
            phi: vec![1.0],
            noise_mu: 1.0,
            noise_rho: 1.0,
            noise_omega: 0.0,
        };
        let mu = expected_coverage(&sample, 0, &g, &graph, &params, 1.0).unwrap();
        assert!((mu[1] - 2.0 * 80.0).abs() < 1e-12);
        assert!((mu[0] - 80.0 * 0.1 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn expected_coverage_is_linear_in_nu_and_phi_direction() {
        let sample = sample_with_coverages(&[&[10, 20, 5]]);
        let graph = chain_graph(&[3], &[(0, 0, 1, 0.2)], 2);
        let g =
            GenotypeMatrix::from_allele_pairs(&[vec![(1, 1)], vec![(1, 2)]], &[3]).unwrap();
        let params = ModelParams {
            nu: 40.0,
            gamma: 1.0,
            phi: vec![0.6, 0.4],
            noise_mu: 1.0,
            noise_rho: 1.0,
            noise_omega: 0.0,
        };
        let mu = expected_coverage(&sample, 0, &g, &graph, &params, 1.0).unwrap();
        let double_nu = ModelParams {
            nu: 80.0,
            ..params.clone()
        };
        let mu2 = expected_coverage(&sample, 0, &g, &graph, &double_nu, 1.0).unwrap();
        for (a, b) in mu.iter().zip(&mu2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn beta_mom_basics() {
        let sample = sample_with_coverages(&[&[60, 40], &[300]]);
        let beta = beta_mom(&sample).unwrap();
        assert!((beta[0] - 0.5).abs() < 1e-12);
        assert!((beta[1] - 1.5).abs() < 1e-12);
        assert!((beta.iter().sum::<f64>() - 2.0).abs() < 1e-12);

        let sample3 = sample_with_coverages(&[&[10], &[20], &[70]]);
        let beta3 = beta_mom(&sample3).unwrap();
        assert!((beta3[0] - 0.3).abs() < 1e-12);
        assert!((beta3[1] - 0.6).abs() < 1e-12);
        assert!((beta3[2] - 2.1).abs() < 1e-12);

        let equal = sample_with_coverages(&[&[25, 25], &[50]]);
        for b in beta_mom(&equal).unwrap() {
            assert!((b - 1.0).abs() < 1e-12);
        }

        let zero = sample_with_coverages(&[&[0], &[0]]);
        assert!(matches!(beta_mom(&zero), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn beta_blend_endpoints_and_midpoint() {
        let mom = vec![0.5, 1.5];
        let db = vec![1.0, 1.0];
        assert_eq!(beta_blend(&mom, None, 0.0).unwrap(), mom);
        assert_eq!(beta_blend(&mom, Some(&db), 1.0).unwrap(), db);
        let mid = beta_blend(&mom, Some(&db), 0.5).unwrap();
        assert!((mid[0] - 0.75).abs() < 1e-12);
        assert!((mid[1] - 1.25).abs() < 1e-12);
        assert!(beta_blend(&mom, None, 0.5).is_err());
    }

    #[test]
    fn noise_pmf_normalises_without_inflation() {
        let (mu, rho) = (3.0, 1.5);
        let upper = (mu + 50.0 * (mu * (1.0 + rho)).sqrt()).ceil() as u64;
        let total: f64 = (1..=upper)
            .map(|y| noise_log_pmf(y, mu, rho, 0.0).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "total={total}");
    }

    #[test]
    fn noise_pmf_pure_inflation_endpoint() {
        assert!((noise_log_pmf(1, 2.0, 1.0, 1.0).unwrap() - 0.0).abs() < 1e-12);
        assert_eq!(noise_log_pmf(2, 2.0, 1.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(noise_log_pmf(0, 2.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn noise_pmf_mixture_value() {
        // omega = 0.3, mu = 2, rho = 1, y = 1: direct formula evaluation
        // through an independent route (raw pmf arithmetic, not the log-space
        // mixture path).
        let params = Pg1Params::new(2.0, 1.0).unwrap();
        let p1 = pg1_log_pmf(1, params).exp();
        let p0 = pg1_log_pmf(0, params).exp();
        let expect = 0.3 + 0.7 * p1 / (1.0 - p0);
        let got = noise_log_pmf(1, 2.0, 1.0, 0.3).unwrap().exp();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn classification_partitions_and_is_deterministic() {
        let sample = sample_with_coverages(&[&[100, 10, 3], &[50, 7]]);
        let graph = chain_graph(&[3, 2], &[(0, 1, 0, 0.1)], 2);
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(0, 0), (0, 0)]], &[3, 2]).unwrap();
        let c1 = classify(&sample, &g, &graph);
        let c2 = classify(&sample, &g, &graph);
        assert_eq!(c1, c2);
        assert_eq!(c1.allele[0], vec![0, 1]); // allele 0 plus its stutter child
        assert_eq!(c1.noise[0], vec![2]);
        assert_eq!(c1.allele[1], vec![0]);
        assert_eq!(c1.noise[1], vec![1]);
        for m in 0..2 {
            let mut all: Vec<usize> = c1.allele[m].iter().chain(&c1.noise[m]).copied().collect();
            all.sort_unstable();
            let expect: Vec<usize> = (0..sample.markers[m].sequences.len()).collect();
            assert_eq!(all, expect);
        }
    }

    #[test]
    fn joint_likelihood_matches_hand_sum() {
        // Single marker, one heterozygous contributor, empty noise set: the
        // joint log-likelihood is the sum of the two allele terms.
        let sample = sample_with_coverages(&[&[90, 110]]);
        let graph = StutterGraph::empty(&[2], 2);
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(0, 1)]], &[2]).unwrap();
        let params = ModelParams {
            nu: 100.0,
            gamma: 1.0,
            phi: vec![1.0],
            noise_mu: 1.0,
            noise_rho: 1.0,
            noise_omega: 0.0,
        };
        let classified = classify(&sample, &g, &graph);
        assert!(classified.noise[0].is_empty());
        let ll = joint_log_likelihood(&sample, &classified, &g, &graph, &[1.0], &params).unwrap();
        let hand = pg1_log_pmf(90, Pg1Params::new(100.0, 1.0).unwrap())
            + pg1_log_pmf(110, Pg1Params::new(100.0, 1.0).unwrap());
        assert!((ll - hand).abs() < 1e-12);
    }

    #[test]
    fn vacuous_stutter_entries_change_nothing() {
        let sample = sample_with_coverages(&[&[90, 110, 4]]);
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(0, 1)]], &[3]).unwrap();
        let params = ModelParams {
            nu: 100.0,
            gamma: 1.0,
            phi: vec![1.0],
            noise_mu: 3.0,
            noise_rho: 1.0,
            noise_omega: 0.1,
        };
        let empty = StutterGraph::empty(&[3], 2);
        let deeper = StutterGraph::empty(&[3], 4);
        let c = classify(&sample, &g, &empty);
        let a = joint_log_likelihood(&sample, &c, &g, &empty, &[1.0], &params).unwrap();
        let b = joint_log_likelihood(&sample, &c, &g, &deeper, &[1.0], &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn likelihood_decreases_away_from_the_mode() {
        let sample = sample_with_coverages(&[&[200, 200]]);
        let graph = StutterGraph::empty(&[2], 2);
        let g = GenotypeMatrix::from_allele_pairs(&[vec![(0, 1)]], &[2]).unwrap();
        let params = ModelParams {
            nu: 100.0,
            gamma: 1.0,
            phi: vec![1.0],
            noise_mu: 1.0,
            noise_rho: 1.0,
            noise_omega: 0.0,
        };
        let classified = classify(&sample, &g, &graph);
        let at_mode =
            joint_log_likelihood(&sample, &classified, &g, &graph, &[1.0], &params).unwrap();
        let far = sample_with_coverages(&[&[200, 2000]]);
        let away =
            joint_log_likelihood(&far, &classified, &g, &graph, &[1.0], &params).unwrap();
        assert!(away < at_mode);
    }

    #[test]
    fn repeat_rule_builds_expected_edges() {
        let mut sample = sample_with_coverages(&[&[100, 15, 7]]);
        sample.markers[0].sequences[0].repeat_count = Some(10);
        sample.markers[0].sequences[1].repeat_count = Some(9);
        // Sequence 2 stays unannotated and gets no edges.
        let graph = StutterGraph::from_repeat_counts(&sample, 0.05, 2).unwrap();
        assert!(graph.parents[0][0].is_empty());
        assert_eq!(graph.parents[0][1].len(), 1);
        assert_eq!(graph.parents[0][1][0].parent, 0);
        assert!(graph.parents[0][2].is_empty());
    }
}
