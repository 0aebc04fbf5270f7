//! Maximisation of the joint log-likelihood over the continuous parameters
//! for a fixed genotype combination, and the fitness of encoded individuals.
//!
//! Fitness is the joint log-likelihood at the estimated parameters plus the
//! log genotype prior. Estimation always starts from a deterministic
//! moment-based initialisation (plus fixed perturbations for multi-start), so
//! the fitness of an individual is a pure function of its canonical encoding;
//! that makes the shared memoisation table safe under concurrent access and
//! keeps whole runs reproducible regardless of thread count.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::coverage::{
    dose_matrix, noise_log_pmf_unchecked, ClassifiedObservations, MixtureSample, ModelParams,
    StutterGraph,
};
use crate::error::{Error, Result};
use crate::genotype::{
    decode, prior_log_prob, AlleleFrequencies, EncodedIndividual, GenotypeMatrix,
};
use crate::optim::{maximize_bounded, NelderMeadOptions};
use crate::pg::{deviance_residual_unchecked, Pg1Params};
use statrs::function::gamma::ln_gamma;

/// Configuration of the continuous-parameter optimisation.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    /// Objective-evaluation cap per start.
    pub max_evaluations: usize,
    pub relative_tolerance: f64,
    /// Number of starts; the first is the moment initialisation (or the warm
    /// start when one is supplied), the rest are fixed perturbations of it.
    pub n_starts: usize,
    pub nu_bounds: (f64, f64),
    pub gamma_bounds: (f64, f64),
    pub noise_mu_bounds: (f64, f64),
    pub noise_rho_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
    /// Reparameterise the mixture proportions through additive log-ratio
    /// coordinates (keeps the simplex constraint exact). When false, the raw
    /// proportions are optimised and renormalised.
    pub alr_simplex: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 2000,
            relative_tolerance: 1e-6,
            n_starts: 3,
            nu_bounds: (1e-3, 1e7),
            gamma_bounds: (1e-3, 1e3),
            noise_mu_bounds: (1e-3, 1e5),
            noise_rho_bounds: (1e-3, 1e3),
            omega_bounds: (0.0, 0.999),
            alr_simplex: true,
        }
    }
}

/// Result of a single continuous-parameter estimation.
#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub params: ModelParams,
    pub log_likelihood: f64,
    /// False when every start exhausted its evaluation budget; the best point
    /// found is still returned.
    pub converged: bool,
}

/// Fitness of an individual: log-likelihood at the estimated parameters plus
/// the log prior of the genotypes.
#[derive(Debug, Clone)]
pub struct FitnessValue {
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub fitness: f64,
    pub theta_hat: ModelParams,
    pub converged: bool,
}

/// Precomputed per-marker quantities for fast likelihood evaluation of one
/// genotype combination.
struct LikelihoodWorkspace {
    /// Per marker: (dose matrix, allele rows as (coverage, ln Gamma(y+1),
    /// dose row offset), noise coverages).
    markers: Vec<MarkerWorkspace>,
    n_contributors: usize,
    n_noise_obs: usize,
    n_allele_obs: usize,
}

struct MarkerWorkspace {
    dose: Vec<f64>,
    beta: f64,
    allele: Vec<AlleleObs>,
    noise: Vec<u64>,
}

struct AlleleObs {
    coverage: u64,
    ln_y_factorial: f64,
    row: usize,
}

impl LikelihoodWorkspace {
    fn build(
        sample: &MixtureSample,
        genotypes: &GenotypeMatrix,
        graph: &StutterGraph,
        beta: &[f64],
    ) -> Result<Self> {
        let c = genotypes.n_contributors;
        let mut markers = Vec::with_capacity(sample.markers.len());
        let mut n_noise_obs = 0;
        let mut n_allele_obs = 0;
        for (m, marker) in sample.markers.iter().enumerate() {
            let dose = dose_matrix(&genotypes.counts[m], c, &graph.parents[m], graph.depth);
            let mut allele = Vec::new();
            let mut noise = Vec::new();
            for (a, seq) in marker.sequences.iter().enumerate() {
                let total: f64 = dose[a * c..(a + 1) * c].iter().sum();
                if total > 0.0 {
                    allele.push(AlleleObs {
                        coverage: seq.coverage,
                        ln_y_factorial: ln_gamma(seq.coverage as f64 + 1.0),
                        row: a,
                    });
                } else {
                    if seq.coverage == 0 {
                        return Err(Error::DegenerateInput(format!(
                            "marker {}: sequence {} has zero coverage and is not explained \
                             by the candidate genotypes; zero-coverage rows cannot be noise \
                             and must be removed before deconvolution",
                            marker.name, seq.id
                        )));
                    }
                    noise.push(seq.coverage);
                }
            }
            n_noise_obs += noise.len();
            n_allele_obs += allele.len();
            markers.push(MarkerWorkspace {
                dose,
                beta: beta[m],
                allele,
                noise,
            });
        }
        Ok(Self {
            markers,
            n_contributors: c,
            n_noise_obs,
            n_allele_obs,
        })
    }

    /// The classification induced by the candidate genotypes.
    fn classification(&self) -> ClassifiedObservations {
        let c = self.n_contributors;
        let mut allele = Vec::with_capacity(self.markers.len());
        let mut noise = Vec::with_capacity(self.markers.len());
        for mw in &self.markers {
            let a_m = mw.dose.len() / c.max(1);
            let allele_rows: Vec<usize> = mw.allele.iter().map(|o| o.row).collect();
            let noise_rows: Vec<usize> =
                (0..a_m).filter(|r| !allele_rows.contains(r)).collect();
            allele.push(allele_rows);
            noise.push(noise_rows);
        }
        ClassifiedObservations { allele, noise }
    }

    /// Joint log-likelihood at `params`, accumulated in fixed marker order.
    fn log_likelihood(&self, params: &ModelParams) -> f64 {
        let c = self.n_contributors;
        let noise_params = Pg1Params {
            mu: params.noise_mu,
            gamma: params.noise_rho,
        };
        let mut ll = 0.0;
        for mw in &self.markers {
            let scale = params.nu * mw.beta;
            for obs in &mw.allele {
                let mut dose_phi = 0.0;
                let row = obs.row * c;
                for cc in 0..c {
                    dose_phi += mw.dose[row + cc] * params.phi[cc];
                }
                let mu = scale * dose_phi;
                let eta = mu / params.gamma;
                let yf = obs.coverage as f64;
                ll += ln_gamma(yf + eta) - obs.ln_y_factorial - ln_gamma(eta) + yf * mu.ln()
                    + eta * eta.ln()
                    - (yf + eta) * (mu + eta).ln();
            }
            for &y in &mw.noise {
                ll += noise_log_pmf_unchecked(y, noise_params, params.noise_omega);
            }
        }
        ll
    }
}

/// Mapping between the transformed optimiser coordinates and `ModelParams`.
struct ParamSpace {
    n_contributors: usize,
    has_noise: bool,
    alr_simplex: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamSpace {
    fn new(config: &EstimationConfig, n_contributors: usize, has_noise: bool) -> Self {
        let mut lower = vec![config.nu_bounds.0.ln(), config.gamma_bounds.0.ln()];
        let mut upper = vec![config.nu_bounds.1.ln(), config.gamma_bounds.1.ln()];
        for _ in 1..n_contributors {
            if config.alr_simplex {
                lower.push(-16.0);
                upper.push(16.0);
            } else {
                lower.push(1e-9);
                upper.push(1.0);
            }
        }
        if has_noise {
            lower.push(config.noise_mu_bounds.0.ln());
            upper.push(config.noise_mu_bounds.1.ln());
            lower.push(config.noise_rho_bounds.0.ln());
            upper.push(config.noise_rho_bounds.1.ln());
            lower.push(config.omega_bounds.0);
            upper.push(config.omega_bounds.1);
        }
        Self {
            n_contributors,
            has_noise,
            alr_simplex: config.alr_simplex,
            lower,
            upper,
        }
    }

    fn pack(&self, params: &ModelParams) -> Vec<f64> {
        let mut z = vec![params.nu.ln(), params.gamma.ln()];
        let c = self.n_contributors;
        if self.alr_simplex {
            for i in 0..c - 1 {
                z.push((params.phi[i] / params.phi[c - 1]).ln());
            }
        } else {
            for i in 0..c - 1 {
                z.push(params.phi[i]);
            }
        }
        if self.has_noise {
            z.push(params.noise_mu.ln());
            z.push(params.noise_rho.ln());
            z.push(params.noise_omega);
        }
        for ((v, &lo), &hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(lo, hi);
        }
        z
    }

    fn unpack(&self, z: &[f64], fallback: &ModelParams) -> ModelParams {
        let c = self.n_contributors;
        let nu = z[0].exp();
        let gamma = z[1].exp();
        let mut phi = vec![0.0; c];
        if c == 1 {
            phi[0] = 1.0;
        } else if self.alr_simplex {
            let mut total = 1.0;
            for i in 0..c - 1 {
                phi[i] = z[2 + i].exp();
                total += phi[i];
            }
            phi[c - 1] = 1.0;
            for p in phi.iter_mut() {
                *p /= total;
            }
        } else {
            let mut total = 0.0;
            for i in 0..c - 1 {
                phi[i] = z[2 + i].max(1e-12);
                total += phi[i];
            }
            phi[c - 1] = (1.0 - total).max(1e-12);
            let norm: f64 = phi.iter().sum();
            for p in phi.iter_mut() {
                *p /= norm;
            }
        }
        let (noise_mu, noise_rho, noise_omega) = if self.has_noise {
            let base = 2 + (c - 1);
            (z[base].exp(), z[base + 1].exp(), z[base + 2])
        } else {
            (
                fallback.noise_mu,
                fallback.noise_rho,
                fallback.noise_omega,
            )
        };
        ModelParams {
            nu,
            gamma,
            phi,
            noise_mu,
            noise_rho,
            noise_omega,
        }
    }
}

/// Deterministic moment-based initialisation of the continuous parameters.
fn initialize_params(ws: &LikelihoodWorkspace, config: &EstimationConfig) -> ModelParams {
    let c = ws.n_contributors;
    // Attribute observed allele coverage to contributors by dose share; used
    // both for phi0 and for scaling nu0 so the expected total matches the
    // observed total.
    let mut attributed = vec![0.0; c];
    let mut dose_any = false;
    for mw in &ws.markers {
        for obs in &mw.allele {
            let row = obs.row * c;
            let total: f64 = mw.dose[row..row + c].iter().sum();
            if total <= 0.0 {
                continue;
            }
            dose_any = true;
            for cc in 0..c {
                attributed[cc] += obs.coverage as f64 * mw.dose[row + cc] / total;
            }
        }
    }
    let mut phi: Vec<f64> = if dose_any {
        attributed.iter().map(|&a| a.max(1.0)).collect()
    } else {
        vec![1.0; c]
    };
    let phi_total: f64 = phi.iter().sum();
    for p in phi.iter_mut() {
        *p /= phi_total;
    }

    // nu0 scales expected dose to the observed allele coverage.
    let mut observed = 0.0;
    let mut expected_dose = 0.0;
    for mw in &ws.markers {
        for obs in &mw.allele {
            observed += obs.coverage as f64;
            let row = obs.row * c;
            let mut dose_phi = 0.0;
            for cc in 0..c {
                dose_phi += mw.dose[row + cc] * phi[cc];
            }
            expected_dose += mw.beta * dose_phi;
        }
    }
    let nu = if expected_dose > 0.0 {
        (observed / expected_dose).clamp(config.nu_bounds.0, config.nu_bounds.1)
    } else {
        config.nu_bounds.0
    };

    // Noise moments: mean coverage and the fraction of ones.
    let mut noise_sum = 0.0;
    let mut noise_ones = 0usize;
    for mw in &ws.markers {
        for &y in &mw.noise {
            noise_sum += y as f64;
            if y == 1 {
                noise_ones += 1;
            }
        }
    }
    let (noise_mu, noise_omega) = if ws.n_noise_obs > 0 {
        let mean = noise_sum / ws.n_noise_obs as f64;
        let omega = noise_ones as f64 / ws.n_noise_obs as f64;
        (
            mean.clamp(config.noise_mu_bounds.0, config.noise_mu_bounds.1),
            omega.clamp(config.omega_bounds.0, config.omega_bounds.1),
        )
    } else {
        (1.0, 0.0)
    };

    ModelParams {
        nu,
        gamma: 1.0,
        phi,
        noise_mu,
        noise_rho: 1.0,
        noise_omega,
    }
}

/// Maximises the joint log-likelihood over the continuous parameters for the
/// given genotype combination (known contributors first, then unknowns).
///
/// `warm` supplies an optional starting point; the returned likelihood is
/// never below the warm start's own likelihood. Deterministic given config
/// and inputs.
pub fn estimate_theta(
    sample: &MixtureSample,
    g_known: &GenotypeMatrix,
    g_unknown: &GenotypeMatrix,
    graph: &StutterGraph,
    beta: &[f64],
    config: &EstimationConfig,
    warm: Option<&ModelParams>,
) -> Result<ThetaEstimate> {
    let combined = GenotypeMatrix::concat(g_known, g_unknown)?;
    if combined.n_contributors == 0 {
        return Err(Error::Estimation(
            "at least one contributor is required".into(),
        ));
    }
    let ws = LikelihoodWorkspace::build(sample, &combined, graph, beta)?;
    estimate_theta_on_workspace(&ws, config, warm)
}

fn estimate_theta_on_workspace(
    ws: &LikelihoodWorkspace,
    config: &EstimationConfig,
    warm: Option<&ModelParams>,
) -> Result<ThetaEstimate> {
    if ws.n_allele_obs == 0 {
        return Err(Error::Estimation(
            "empty allele set: the candidate genotypes explain no observation".into(),
        ));
    }
    let space = ParamSpace::new(config, ws.n_contributors, ws.n_noise_obs > 0);
    let init = match warm {
        Some(w) => {
            w.validate().map_err(|e| {
                Error::Estimation(format!("invalid warm-start parameters: {e}"))
            })?;
            if w.phi.len() != ws.n_contributors {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} proportions for {} contributors",
                    w.phi.len(),
                    ws.n_contributors
                )));
            }
            w.clone()
        }
        None => initialize_params(ws, config),
    };
    let z0 = space.pack(&init);

    let opts = NelderMeadOptions {
        max_evaluations: config.max_evaluations,
        relative_tolerance: config.relative_tolerance,
        initial_step: 0.25,
    };

    let mut best: Option<(f64, ModelParams, bool)> = None;
    let n_starts = config.n_starts.max(1);
    for s in 0..n_starts {
        // Start 0 is the initialisation itself; later starts perturb the
        // transformed coordinates by fixed alternating offsets.
        let mut start = z0.clone();
        if s > 0 {
            let magnitude = 0.6 * s as f64;
            for (i, v) in start.iter_mut().enumerate() {
                let sign = if (i + s) % 2 == 0 { 1.0 } else { -1.0 };
                *v += sign * magnitude;
            }
        }
        let objective = |z: &[f64]| {
            let params = space.unpack(z, &init);
            ws.log_likelihood(&params)
        };
        let result = maximize_bounded(objective, &start, &space.lower, &space.upper, &opts);
        let params = space.unpack(&result.x, &init);
        let improved = match &best {
            None => true,
            Some((v, _, _)) => result.value > *v,
        };
        if improved {
            best = Some((result.value, params, result.converged));
        }
    }
    let (value, params, converged) = best.expect("at least one start");

    // The warm start itself is a feasible point; never report worse.
    let init_ll = ws.log_likelihood(&space.unpack(&z0, &init));
    if init_ll > value {
        return Ok(ThetaEstimate {
            params: space.unpack(&z0, &init),
            log_likelihood: init_ll,
            converged,
        });
    }
    Ok(ThetaEstimate {
        params,
        log_likelihood: value,
        converged,
    })
}

/// Shared evaluation context for fitness computations: the sample, the
/// hypothesis, and the memoisation table.
pub struct EvalContext<'a> {
    pub sample: &'a MixtureSample,
    pub g_known: &'a GenotypeMatrix,
    pub n_unknown: usize,
    pub graph: &'a StutterGraph,
    pub beta: Vec<f64>,
    pub freqs: &'a AlleleFrequencies,
    pub config: EstimationConfig,
    marker_sizes: Vec<usize>,
    cache: DashMap<Vec<u32>, Arc<FitnessValue>>,
    optimizer_runs: AtomicU64,
    cache_hits: AtomicU64,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        sample: &'a MixtureSample,
        g_known: &'a GenotypeMatrix,
        n_unknown: usize,
        graph: &'a StutterGraph,
        beta: Vec<f64>,
        freqs: &'a AlleleFrequencies,
        config: EstimationConfig,
    ) -> Result<Self> {
        sample.validate()?;
        let marker_sizes = sample.marker_sizes();
        graph.validate(&marker_sizes)?;
        if n_unknown == 0 {
            return Err(Error::Config(
                "deconvolution requires at least one unknown contributor".into(),
            ));
        }
        if beta.len() != marker_sizes.len() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries for {} markers",
                beta.len(),
                marker_sizes.len()
            )));
        }
        if freqs.per_marker.len() != marker_sizes.len() {
            return Err(Error::DimensionMismatch(
                "frequencies do not cover every marker".into(),
            ));
        }
        for (m, (f, &a)) in freqs.per_marker.iter().zip(&marker_sizes).enumerate() {
            if f.len() != a {
                return Err(Error::DimensionMismatch(format!(
                    "marker {m}: {} frequencies for {a} sequences",
                    f.len()
                )));
            }
        }
        g_known.validate(&marker_sizes)?;
        Ok(Self {
            sample,
            g_known,
            n_unknown,
            graph,
            beta,
            freqs,
            config,
            marker_sizes,
            cache: DashMap::new(),
            optimizer_runs: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn marker_sizes(&self) -> &[usize] {
        &self.marker_sizes
    }

    pub fn n_contributors(&self) -> usize {
        self.g_known.n_contributors + self.n_unknown
    }

    /// Number of optimiser runs performed (cache misses).
    pub fn optimizer_runs(&self) -> u64 {
        self.optimizer_runs.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Fitness of an individual, memoised by its canonical encoding. The
    /// value is computed outside the map lock; concurrent duplicate
    /// computations resolve to the same value, so insert-or-get keeps the
    /// table consistent without blocking readers.
    pub fn fitness(&self, p: &EncodedIndividual) -> Result<Arc<FitnessValue>> {
        let key = p.canonical().slots;
        if let Some(v) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v.clone());
        }
        let canonical = EncodedIndividual::new(key.clone());
        let g_unknown = decode(&canonical, &self.marker_sizes, self.n_unknown)?;
        let combined = GenotypeMatrix::concat(self.g_known, &g_unknown)?;
        let ws = LikelihoodWorkspace::build(self.sample, &combined, self.graph, &self.beta)?;
        self.optimizer_runs.fetch_add(1, Ordering::Relaxed);
        let estimate = estimate_theta_on_workspace(&ws, &self.config, None)?;
        let log_prior = prior_log_prob(&g_unknown, self.g_known, self.freqs);
        let value = Arc::new(FitnessValue {
            log_likelihood: estimate.log_likelihood,
            log_prior,
            fitness: estimate.log_likelihood + log_prior,
            theta_hat: estimate.params,
            converged: estimate.converged,
        });
        let entry = self.cache.entry(key).or_insert(value);
        Ok(entry.clone())
    }

    /// The allele/noise classification induced by an individual.
    pub fn classify(&self, p: &EncodedIndividual) -> Result<ClassifiedObservations> {
        let g_unknown = decode(p, &self.marker_sizes, self.n_unknown)?;
        let combined = GenotypeMatrix::concat(self.g_known, &g_unknown)?;
        let ws = LikelihoodWorkspace::build(self.sample, &combined, self.graph, &self.beta)?;
        Ok(ws.classification())
    }

    /// Deviance residuals aligned to the slots of `p`, evaluated at `theta`
    /// (typically the warm value from the individual's last fitness
    /// evaluation). A slot indexing an observation in the allele set gets the
    /// allele-component residual at its expected coverage; a slot indexing a
    /// noise observation gets the residual under the noise model's mean.
    pub fn slot_residuals(
        &self,
        p: &EncodedIndividual,
        theta: &ModelParams,
    ) -> Result<Vec<f64>> {
        let g_unknown = decode(p, &self.marker_sizes, self.n_unknown)?;
        let combined = GenotypeMatrix::concat(self.g_known, &g_unknown)?;
        let c = combined.n_contributors;
        let n_markers = self.marker_sizes.len();
        // Expected coverage per marker under theta.
        let mut mu_rows: Vec<Vec<f64>> = Vec::with_capacity(n_markers);
        for m in 0..n_markers {
            let dose = dose_matrix(
                &combined.counts[m],
                c,
                &self.graph.parents[m],
                self.graph.depth,
            );
            let a_m = self.marker_sizes[m];
            let mut mu = vec![0.0; a_m];
            for a in 0..a_m {
                let mut dose_phi = 0.0;
                for cc in 0..c {
                    dose_phi += dose[a * c + cc] * theta.phi[cc];
                }
                mu[a] = theta.nu * self.beta[m] * dose_phi;
            }
            mu_rows.push(mu);
        }
        let noise_eta = theta.noise_mu / theta.noise_rho;
        let mut residuals = Vec::with_capacity(p.slots.len());
        for (j, &slot) in p.slots.iter().enumerate() {
            let m = EncodedIndividual::slot_marker(j, n_markers);
            let a = slot as usize;
            let y = self.sample.markers[m].sequences[a].coverage;
            let mu = mu_rows[m][a];
            let r = if mu > 0.0 {
                deviance_residual_unchecked(y, mu, mu / theta.gamma)
            } else {
                deviance_residual_unchecked(y, theta.noise_mu, noise_eta)
            };
            residuals.push(r);
        }
        Ok(residuals)
    }
}
