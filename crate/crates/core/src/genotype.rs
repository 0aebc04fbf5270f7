//! Genotype matrices, the compact index encoding of unknown contributors,
//! combination-space counting, and the genotype prior.
//!
//! A genotype on a marker with `A` observed sequences is a vector in
//! `{0, 1, 2}^A` summing to 2. An individual of the evolutionary search
//! encodes the genotypes of all unknown contributors as a flat array of
//! `2 * U * M` sequence indices, contributor-major, two consecutive slots per
//! (contributor, marker). Indices are 0-based internally; 1-based conventions
//! appear only at I/O boundaries.

use crate::error::{Error, Result};
use num_bigint::BigUint;

/// Per-marker genotype count matrices for a fixed set of contributors.
///
/// `counts[m]` has `A_m * C` entries laid out sequence-major:
/// `counts[m][a * C + c]` is the number of copies of sequence `a` carried by
/// contributor `c` on marker `m`. Every contributor column sums to exactly 2
/// on every marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    pub counts: Vec<Vec<u8>>,
    pub n_contributors: usize,
}

impl GenotypeMatrix {
    /// An empty matrix (zero contributors) over the given marker sizes.
    pub fn empty(marker_sizes: &[usize]) -> Self {
        Self {
            counts: marker_sizes.iter().map(|_| Vec::new()).collect(),
            n_contributors: 0,
        }
    }

    /// Builds a matrix from one allele pair per (contributor, marker).
    /// `pairs[c][m]` holds the two 0-based sequence indices of contributor `c`
    /// on marker `m` (equal indices for a homozygote).
    pub fn from_allele_pairs(pairs: &[Vec<(usize, usize)>], marker_sizes: &[usize]) -> Result<Self> {
        let n_contributors = pairs.len();
        let n_markers = marker_sizes.len();
        for (c, per_marker) in pairs.iter().enumerate() {
            if per_marker.len() != n_markers {
                return Err(Error::DimensionMismatch(format!(
                    "contributor {c} has {} markers, expected {n_markers}",
                    per_marker.len()
                )));
            }
        }
        let mut counts = Vec::with_capacity(n_markers);
        for m in 0..n_markers {
            let a_m = marker_sizes[m];
            let mut mat = vec![0u8; a_m * n_contributors];
            for (c, per_marker) in pairs.iter().enumerate() {
                let (i, j) = per_marker[m];
                if i >= a_m || j >= a_m {
                    return Err(Error::DimensionMismatch(format!(
                        "allele index out of range on marker {m}: ({i}, {j}) with {a_m} sequences"
                    )));
                }
                mat[i * n_contributors + c] += 1;
                mat[j * n_contributors + c] += 1;
            }
            counts.push(mat);
        }
        Ok(Self {
            counts,
            n_contributors,
        })
    }

    pub fn n_markers(&self) -> usize {
        self.counts.len()
    }

    /// Checks entries are in {0, 1, 2} and every column sums to 2.
    pub fn validate(&self, marker_sizes: &[usize]) -> Result<()> {
        if self.counts.len() != marker_sizes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} marker matrices for {} markers",
                self.counts.len(),
                marker_sizes.len()
            )));
        }
        for (m, mat) in self.counts.iter().enumerate() {
            let a_m = marker_sizes[m];
            if mat.len() != a_m * self.n_contributors {
                return Err(Error::DimensionMismatch(format!(
                    "marker {m}: matrix has {} entries, expected {}",
                    mat.len(),
                    a_m * self.n_contributors
                )));
            }
            for c in 0..self.n_contributors {
                let mut sum = 0u32;
                for a in 0..a_m {
                    let g = mat[a * self.n_contributors + c];
                    if g > 2 {
                        return Err(Error::InvalidParameter(format!(
                            "marker {m}: genotype count {g} outside {{0,1,2}}"
                        )));
                    }
                    sum += u32::from(g);
                }
                if sum != 2 {
                    return Err(Error::InvalidParameter(format!(
                        "marker {m}, contributor {c}: column sums to {sum}, expected 2"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The sorted allele index pair of contributor `c` on marker `m`.
    pub fn allele_pair(&self, m: usize, c: usize) -> (usize, usize) {
        let mat = &self.counts[m];
        let n = self.n_contributors;
        let a_m = mat.len() / n;
        let mut found: Vec<usize> = Vec::with_capacity(2);
        for a in 0..a_m {
            match mat[a * n + c] {
                1 => found.push(a),
                2 => return (a, a),
                _ => {}
            }
        }
        debug_assert_eq!(found.len(), 2);
        (found[0], found[1])
    }

    /// Concatenates contributor columns: `left` columns first, `right` after.
    pub fn concat(left: &GenotypeMatrix, right: &GenotypeMatrix) -> Result<GenotypeMatrix> {
        if left.counts.len() != right.counts.len() {
            return Err(Error::DimensionMismatch(
                "cannot concatenate genotype matrices over different marker sets".into(),
            ));
        }
        let n = left.n_contributors + right.n_contributors;
        let mut counts = Vec::with_capacity(left.counts.len());
        for (lm, rm) in left.counts.iter().zip(&right.counts) {
            let a_m = if left.n_contributors > 0 {
                lm.len() / left.n_contributors
            } else if right.n_contributors > 0 {
                rm.len() / right.n_contributors
            } else {
                0
            };
            let mut mat = vec![0u8; a_m * n];
            for a in 0..a_m {
                for c in 0..left.n_contributors {
                    mat[a * n + c] = lm[a * left.n_contributors + c];
                }
                for c in 0..right.n_contributors {
                    mat[a * n + left.n_contributors + c] = rm[a * right.n_contributors + c];
                }
            }
            counts.push(mat);
        }
        Ok(GenotypeMatrix {
            counts,
            n_contributors: n,
        })
    }
}

/// Flat encoding of the unknown contributors' genotypes: `2 * U * M` sequence
/// indices, contributor-major, two consecutive slots per (contributor,
/// marker).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedIndividual {
    pub slots: Vec<u32>,
}

impl EncodedIndividual {
    pub fn new(slots: Vec<u32>) -> Self {
        Self { slots }
    }

    /// Number of slots, `2 * U * M`.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The marker a slot belongs to, given the number of markers.
    #[inline]
    pub fn slot_marker(slot: usize, n_markers: usize) -> usize {
        (slot % (2 * n_markers)) / 2
    }

    /// Canonical form: the two slots of every (contributor, marker) pair in
    /// sorted order. Decoding is invariant to slot order, so the canonical
    /// form is used as the fitness memoisation key.
    pub fn canonical(&self) -> EncodedIndividual {
        let mut slots = self.slots.clone();
        for pair in slots.chunks_exact_mut(2) {
            if pair[0] > pair[1] {
                pair.swap(0, 1);
            }
        }
        EncodedIndividual { slots }
    }
}

/// Encodes the unknown-contributor genotype matrix as slot indices.
/// Heterozygote slots are emitted in ascending index order; homozygotes put
/// the same index in both slots.
pub fn encode(g: &GenotypeMatrix, marker_sizes: &[usize]) -> Result<EncodedIndividual> {
    g.validate(marker_sizes)?;
    let n_markers = marker_sizes.len();
    let mut slots = Vec::with_capacity(2 * g.n_contributors * n_markers);
    for c in 0..g.n_contributors {
        for m in 0..n_markers {
            let (i, j) = g.allele_pair(m, c);
            slots.push(i as u32);
            slots.push(j as u32);
        }
    }
    Ok(EncodedIndividual::new(slots))
}

/// Decodes an individual back to the genotype matrix of `n_unknown`
/// contributors. Slot order within a pair does not affect the result.
pub fn decode(
    p: &EncodedIndividual,
    marker_sizes: &[usize],
    n_unknown: usize,
) -> Result<GenotypeMatrix> {
    let n_markers = marker_sizes.len();
    if p.slots.len() != 2 * n_unknown * n_markers {
        return Err(Error::DimensionMismatch(format!(
            "encoded individual has {} slots, expected {}",
            p.slots.len(),
            2 * n_unknown * n_markers
        )));
    }
    let mut counts: Vec<Vec<u8>> = marker_sizes
        .iter()
        .map(|&a_m| vec![0u8; a_m * n_unknown])
        .collect();
    for c in 0..n_unknown {
        for m in 0..n_markers {
            let base = (c * n_markers + m) * 2;
            for k in 0..2 {
                let idx = p.slots[base + k] as usize;
                if idx >= marker_sizes[m] {
                    return Err(Error::DimensionMismatch(format!(
                        "slot {} indexes sequence {idx} on marker {m} with only {} sequences",
                        base + k,
                        marker_sizes[m]
                    )));
                }
                counts[m][idx * n_unknown + c] += 1;
            }
        }
    }
    Ok(GenotypeMatrix {
        counts,
        n_contributors: n_unknown,
    })
}

/// Number of genotypes on a single marker with `a` observed sequences:
/// `a` homozygotes plus `binom(a, 2)` heterozygotes, i.e. `a (a + 1) / 2`.
pub fn genotype_count_single_marker(a: u64) -> u64 {
    a * (a + 1) / 2
}

/// Exact size of the unordered search space for `u` unknown contributors:
/// `binom(S + u - 1, u)` with `S = prod_m A_m (A_m + 1) / 2`.
pub fn space_size(marker_sizes: &[usize], u: u32) -> BigUint {
    let mut single = BigUint::from(1u32);
    for &a in marker_sizes {
        single *= BigUint::from(genotype_count_single_marker(a as u64));
    }
    // binom(single + u - 1, u), computed with exact division at each step.
    let mut result = BigUint::from(1u32);
    let base = single + BigUint::from(u) - BigUint::from(1u32);
    for i in 0..u {
        result *= &base - BigUint::from(i);
        result /= BigUint::from(i + 1);
    }
    result
}

/// Population allele frequencies per marker, aligned to a sample's observed
/// sequences, plus the coancestry coefficient used by the genotype prior.
#[derive(Debug, Clone)]
pub struct AlleleFrequencies {
    /// `per_marker[m][a]` is the population frequency of sequence `a`;
    /// non-negative, summing to at most 1 per marker.
    pub per_marker: Vec<Vec<f64>>,
    /// Coancestry coefficient in [0, 1).
    pub theta_fst: f64,
}

impl AlleleFrequencies {
    pub fn new(per_marker: Vec<Vec<f64>>, theta_fst: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta_fst) {
            return Err(Error::InvalidParameter(format!(
                "theta_fst must be in [0, 1), got {theta_fst}"
            )));
        }
        for (m, freqs) in per_marker.iter().enumerate() {
            let mut sum = 0.0;
            for &q in freqs {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidParameter(format!(
                        "marker {m}: frequency {q} outside [0, 1]"
                    )));
                }
                sum += q;
            }
            if sum > 1.0 + 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "marker {m}: frequencies sum to {sum} > 1"
                )));
            }
        }
        Ok(Self {
            per_marker,
            theta_fst,
        })
    }
}

/// Log prior probability of the unknown genotypes `g` conditional on the
/// known genotypes `g_known`, under sequential Balding-Nichols sampling.
///
/// Alleles already present (known contributors first, then earlier draws of
/// the unknowns) enter the urn: a new draw of allele `a` has probability
/// `(m_a theta + (1 - theta) q_a) / (1 + (n - 1) theta)` where `m_a` counts
/// prior draws of `a` and `n` counts all prior draws. Heterozygote genotypes
/// receive a combinatorial factor 2. Returns `-inf` when an allele with zero
/// frequency and zero prior count is required; that value must propagate as
/// strictly dominated fitness.
pub fn prior_log_prob(
    g: &GenotypeMatrix,
    g_known: &GenotypeMatrix,
    freqs: &AlleleFrequencies,
) -> f64 {
    let theta = freqs.theta_fst;
    let n_markers = g.n_markers();
    debug_assert_eq!(g_known.n_markers(), n_markers);
    let mut log_prob = 0.0;
    let mut urn: Vec<u32> = Vec::new();
    for m in 0..n_markers {
        let q = &freqs.per_marker[m];
        urn.clear();
        urn.resize(q.len(), 0);
        let mut n_drawn = 0u32;
        for c in 0..g_known.n_contributors {
            let (i, j) = g_known.allele_pair(m, c);
            urn[i] += 1;
            urn[j] += 1;
            n_drawn += 2;
        }
        for c in 0..g.n_contributors {
            let (i, j) = g.allele_pair(m, c);
            for &a in &[i, j] {
                let numer = f64::from(urn[a]) * theta + (1.0 - theta) * q[a];
                // n_drawn = 0 gives denominator 1 - theta; together with the
                // empty urn this reduces the very first draw to q_a.
                let denom = 1.0 + (f64::from(n_drawn) - 1.0) * theta;
                log_prob += (numer / denom).ln();
                urn[a] += 1;
                n_drawn += 1;
            }
            if i != j {
                log_prob += std::f64::consts::LN_2;
            }
        }
    }
    log_prob
}
