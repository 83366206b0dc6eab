//! Tree-structured Parzen Estimator search over `s = {λ, γ, μ, η}`.
//!
//! Observed trials are split at the `theta` quantile of their validation
//! loss into a good set and a bad set. Each set defines a per-parameter
//! Parzen density (a truncated Gaussian at every observation plus the
//! bounded uniform prior, in the parameter's scale coordinates); the joint
//! densities `l(s)` and `g(s)` are products over the four parameters.
//! Candidates are drawn from `l` and the one with the largest `l(s)/g(s)`
//! is proposed next.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::par;
use crate::rng::{derive_seed, rng_for, Rng};
use crate::shdi::ShdiMatrix;
use crate::solver::{train, HyperParams, TrainConfig, TrainError};

/// Loss assigned to a diverged trial when no finite loss has been seen yet.
pub const FIRST_SENTINEL: f64 = 1e3;
/// Diverged trials get this multiple of the largest finite loss so far.
pub const SENTINEL_FACTOR: f64 = 10.0;
/// Smallest bandwidth floor, as a fraction of the domain width.
pub const MIN_BANDWIDTH_FRACTION: f64 = 0.01;

/// Bandwidths never drop below `width / min(100, n + 1)`: a handful of good
/// trials keeps wide kernels and the floor tightens to 1% of the width as
/// the set grows. A fixed 1% floor lets a small good set collapse onto
/// itself and stop exploring.
fn bandwidth_floor(width: f64, n: usize) -> f64 {
    let shrink = (n + 1) as f64;
    width / shrink.min(1.0 / MIN_BANDWIDTH_FRACTION)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("every one of the {} trials diverged", .observations.trials().len())]
    AllDiverged { observations: ObservationSet },
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log,
    Linear,
}

/// Bounds and scale of one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl ParamSpec {
    pub fn new(lower: f64, upper: f64, scale: Scale) -> Result<Self, SearchError> {
        let spec = Self {
            lower,
            upper,
            scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn log(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            scale: Scale::Log,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.lower.is_finite()
            && self.upper.is_finite()
            && 0.0 < self.lower
            && self.lower < self.upper)
        {
            return Err(SearchError::InvalidConfig(
                "bounds must satisfy 0 < lower < upper",
            ));
        }
        Ok(())
    }

    /// Value in scale coordinates.
    pub fn to_internal(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Log => libm::log(v),
            Scale::Linear => v,
        }
    }

    pub fn from_internal(&self, z: f64) -> f64 {
        let v = match self.scale {
            Scale::Log => libm::exp(z),
            Scale::Linear => z,
        };
        // exp(log(x)) can land an ulp outside the bounds
        v.clamp(self.lower, self.upper)
    }

    /// Domain in scale coordinates.
    pub fn internal_bounds(&self) -> (f64, f64) {
        (self.to_internal(self.lower), self.to_internal(self.upper))
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// The box searched over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lambda: ParamSpec,
    pub gamma: ParamSpec,
    pub mu: ParamSpec,
    pub eta: ParamSpec,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let p = |lo: i32, hi: i32| ParamSpec::log(libm::exp2(lo as f64), libm::exp2(hi as f64));
        Self {
            lambda: p(-10, 2),
            gamma: p(-10, 2),
            mu: p(-10, 2),
            eta: p(-6, 1),
        }
    }
}

impl SearchSpace {
    pub fn dims(&self) -> [ParamSpec; 4] {
        [self.lambda, self.gamma, self.mu, self.eta]
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        self.dims().iter().try_for_each(ParamSpec::validate)
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        self.dims()
            .iter()
            .zip(values(hp))
            .all(|(spec, v)| spec.contains(v))
    }
}

fn values(hp: &HyperParams) -> [f64; 4] {
    [hp.lambda, hp.gamma, hp.mu, hp.eta]
}

fn from_values(v: [f64; 4]) -> HyperParams {
    HyperParams {
        lambda: v[0],
        gamma: v[1],
        mu: v[2],
        eta: v[3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Diverged,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Diverged => "diverged",
        }
    }
}

/// One evaluated point `(s_i, b_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: HyperParams,
    /// Validation RMSE, or the sentinel loss for a diverged run.
    pub loss: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_trials: usize,
    /// Trials drawn from the prior before the density model is used.
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Quantile separating good from bad trials.
    pub theta: f64,
    /// Sweep cap for each trial's training run.
    pub trial_budget_iters: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_trials: 60,
            n_startup: 20,
            n_candidates: 24,
            theta: 0.25,
            trial_budget_iters: 200,
        }
    }
}

impl TpeConfig {
    /// The same budget spent entirely on prior draws.
    pub fn random_search(n_trials: usize, trial_budget_iters: usize) -> Self {
        Self {
            n_trials,
            n_startup: n_trials,
            trial_budget_iters,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.n_trials == 0 {
            return Err(SearchError::InvalidConfig("n_trials must be at least 1"));
        }
        if self.n_candidates == 0 {
            return Err(SearchError::InvalidConfig(
                "n_candidates must be at least 1",
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(SearchError::InvalidConfig("theta must lie in (0, 1)"));
        }
        if self.trial_budget_iters == 0 {
            return Err(SearchError::InvalidConfig(
                "trial_budget_iters must be at least 1",
            ));
        }
        Ok(())
    }
}

/// The history `C` in trial order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    trials: Vec<Trial>,
    theta: f64,
}

impl ObservationSet {
    pub fn new(theta: f64) -> Self {
        assert!(theta > 0.0 && theta < 1.0, "theta must lie in (0, 1)");
        Self {
            trials: Vec::new(),
            theta,
        }
    }

    pub fn push(&mut self, trial: Trial) {
        self.trials.push(trial);
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// `⌈theta·β⌉`.
    pub fn n_good(&self) -> usize {
        libm::ceil(self.theta * self.trials.len() as f64) as usize
    }

    /// Trials ordered by loss (ties by index), cut after [`n_good`].
    ///
    /// [`n_good`]: ObservationSet::n_good
    pub fn split(&self) -> (Vec<&Trial>, Vec<&Trial>) {
        let mut sorted: Vec<&Trial> = self.trials.iter().collect();
        sorted.sort_by(|a, b| a.loss.total_cmp(&b.loss).then(a.index.cmp(&b.index)));
        let bad = sorted.split_off(self.n_good());
        (sorted, bad)
    }

    /// Lowest loss, earliest on ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .fold(None, |best: Option<&Trial>, t| match best {
                Some(b) if b.loss <= t.loss => Some(b),
                _ => Some(t),
            })
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trials.len());
        let mut best = f64::INFINITY;
        for t in &self.trials {
            best = best.min(t.loss);
            out.push(best);
        }
        out
    }

    fn sentinel(&self) -> f64 {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Ok)
            .map(|t| t.loss)
            .fold(None, |acc: Option<f64>, b| {
                Some(acc.map_or(b, |a| a.max(b)))
            })
            .map_or(FIRST_SENTINEL, |b| SENTINEL_FACTOR * b)
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * PI)
}

/// A one-dimensional Parzen estimator over a bounded interval.
#[derive(Debug, Clone)]
struct Parzen {
    lo: f64,
    hi: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    // probability mass of each Gaussian inside [lo, hi]
    masses: Vec<f64>,
}

impl Parzen {
    fn new(mus: Vec<f64>, lo: f64, hi: f64) -> Self {
        let width = hi - lo;
        let floor = bandwidth_floor(width, mus.len());
        let mut order: Vec<usize> = (0..mus.len()).collect();
        order.sort_by(|&i, &j| mus[i].total_cmp(&mus[j]));
        let mut sigmas = alloc::vec![width; mus.len()];
        if mus.len() > 1 {
            for (pos, &i) in order.iter().enumerate() {
                let left = pos.checked_sub(1).map(|p| mus[i] - mus[order[p]]);
                let right = order.get(pos + 1).map(|&j| mus[j] - mus[i]);
                let nearest = match (left, right) {
                    (Some(l), Some(r)) => l.min(r),
                    (Some(l), None) => l,
                    (None, Some(r)) => r,
                    (None, None) => width,
                };
                sigmas[i] = nearest.max(floor).min(width);
            }
        }
        let masses = mus
            .iter()
            .zip(&sigmas)
            .map(|(&m, &s)| std_normal_cdf((hi - m) / s) - std_normal_cdf((lo - m) / s))
            .collect();
        Self {
            lo,
            hi,
            mus,
            sigmas,
            masses,
        }
    }

    fn pdf(&self, z: f64) -> f64 {
        if z < self.lo || z > self.hi {
            return 0.0;
        }
        let mut total = 1.0 / (self.hi - self.lo);
        for ((&m, &s), &mass) in self.mus.iter().zip(&self.sigmas).zip(&self.masses) {
            total += std_normal_pdf((z - m) / s) / (s * mass);
        }
        total / (self.mus.len() + 1) as f64
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let j = rng.gen_range(0..=self.mus.len());
        if j == self.mus.len() {
            return uniform_in(rng, self.lo, self.hi);
        }
        let (m, s) = (self.mus[j], self.sigmas[j]);
        // The centre lies inside the bounds, so at least half the mass does.
        for _ in 0..64 {
            let z = m + s * standard_normal(rng);
            if (self.lo..=self.hi).contains(&z) {
                return z;
            }
        }
        m.clamp(self.lo, self.hi)
    }
}

fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    (lo + (hi - lo) * rng.gen::<f64>()).min(hi)
}

// Box–Muller
fn standard_normal(rng: &mut Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Density of a Parzen estimator fitted to `points` (natural units) at
/// `query` (natural units), measured in the parameter's scale coordinates
/// and normalized over the bounded domain.
pub fn parzen_density(points: &[f64], spec: &ParamSpec, query: f64) -> f64 {
    let (lo, hi) = spec.internal_bounds();
    let mus = points.iter().map(|&p| spec.to_internal(p)).collect();
    Parzen::new(mus, lo, hi).pdf(spec.to_internal(query))
}

fn prior_draw(space: &SearchSpace, rng: &mut Rng) -> HyperParams {
    let mut v = [0.0; 4];
    for (slot, spec) in v.iter_mut().zip(space.dims()) {
        let (lo, hi) = spec.internal_bounds();
        *slot = spec.from_internal(uniform_in(rng, lo, hi));
    }
    from_values(v)
}

fn estimators(trials: &[&Trial], space: &SearchSpace) -> [Parzen; 4] {
    let dims = space.dims();
    core::array::from_fn(|p| {
        let spec = dims[p];
        let (lo, hi) = spec.internal_bounds();
        let mus = trials
            .iter()
            .map(|t| spec.to_internal(values(&t.params)[p]))
            .collect();
        Parzen::new(mus, lo, hi)
    })
}

/// Next point to evaluate. With fewer than `n_startup` trials this is a
/// prior draw; otherwise the best of `n_candidates` draws from `l` by
/// `l(s)/g(s)`.
pub fn suggest(
    obs: &ObservationSet,
    space: &SearchSpace,
    cfg: &TpeConfig,
    seed: u64,
) -> HyperParams {
    let mut rng = rng_for(seed, obs.len() as u64);
    if obs.len() < cfg.n_startup || obs.is_empty() {
        return prior_draw(space, &mut rng);
    }
    let (good, bad) = obs.split();
    let l = estimators(&good, space);
    let g = estimators(&bad, space);
    let dims = space.dims();
    let mut best: Option<([f64; 4], f64)> = None;
    for _ in 0..cfg.n_candidates.max(1) {
        let z: [f64; 4] = core::array::from_fn(|p| l[p].sample(&mut rng));
        let score: f64 = (0..4)
            .map(|p| libm::log(l[p].pdf(z[p])) - libm::log(g[p].pdf(z[p])))
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((z, score));
        }
    }
    let (z, _) = best.expect("at least one candidate");
    from_values(core::array::from_fn(|p| dims[p].from_internal(z[p])))
}

/// Result of a completed search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub best_loss: f64,
    pub best_index: usize,
    pub observations: ObservationSet,
}

enum RunOutcome {
    Finished(f64),
    Diverged,
}

fn evaluate(
    train_mat: &ShdiMatrix,
    valid: &ShdiMatrix,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<RunOutcome, TrainError> {
    match train(train_mat, valid, hp, cfg) {
        Ok((_, report)) => Ok(RunOutcome::Finished(report.final_rmse())),
        Err(TrainError::Diverged { .. }) | Err(TrainError::NonPositiveDenominator { .. }) => {
            Ok(RunOutcome::Diverged)
        }
        Err(e) => Err(e),
    }
}

/// [`run_search_with`] without a per-trial callback.
pub fn run_search(
    train_mat: &ShdiMatrix,
    valid: &ShdiMatrix,
    space: &SearchSpace,
    tpe_cfg: &TpeConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<SearchOutcome, SearchError> {
    run_search_with(train_mat, valid, space, tpe_cfg, train_cfg, seed, |_| {})
}

/// Runs `n_trials` budgeted trainings and returns the point with the lowest
/// validation RMSE. `on_trial` sees every trial in index order as it is
/// committed.
///
/// Startup trials do not depend on each other and run concurrently under
/// the `parallel` feature; they are committed in index order.
pub fn run_search_with<F>(
    train_mat: &ShdiMatrix,
    valid: &ShdiMatrix,
    space: &SearchSpace,
    tpe_cfg: &TpeConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    mut on_trial: F,
) -> Result<SearchOutcome, SearchError>
where
    F: FnMut(&Trial),
{
    space.validate()?;
    tpe_cfg.validate()?;
    train_cfg.validate()?;
    let trial_cfg = TrainConfig {
        max_iters: tpe_cfg.trial_budget_iters,
        ..*train_cfg
    };
    let mut obs = ObservationSet::new(tpe_cfg.theta);
    let startup = tpe_cfg.n_startup.min(tpe_cfg.n_trials);

    let mut commit = |obs: &mut ObservationSet, params: HyperParams, outcome: RunOutcome| {
        let (loss, status) = match outcome {
            RunOutcome::Finished(b) => (b, TrialStatus::Ok),
            RunOutcome::Diverged => (obs.sentinel(), TrialStatus::Diverged),
        };
        let trial = Trial {
            index: obs.len(),
            params,
            loss,
            status,
        };
        on_trial(&trial);
        obs.push(trial);
    };

    let suggestion_seed = |i: usize| derive_seed(seed, i as u64);
    let empty = ObservationSet::new(tpe_cfg.theta);
    let first: Vec<Result<(HyperParams, RunOutcome), TrainError>> = par::map_jobs(startup, |i| {
        // prior draws only depend on the trial index
        let params = suggest(&empty, space, tpe_cfg, suggestion_seed(i));
        evaluate(train_mat, valid, &params, &trial_cfg).map(|o| (params, o))
    });
    for r in first {
        let (params, outcome) = r?;
        commit(&mut obs, params, outcome);
    }
    for i in startup..tpe_cfg.n_trials {
        let params = suggest(&obs, space, tpe_cfg, suggestion_seed(i));
        let outcome = evaluate(train_mat, valid, &params, &trial_cfg)?;
        commit(&mut obs, params, outcome);
    }

    if obs
        .trials()
        .iter()
        .all(|t| t.status == TrialStatus::Diverged)
    {
        return Err(SearchError::AllDiverged { observations: obs });
    }
    let best = *obs.best().expect("non-empty history");
    Ok(SearchOutcome {
        best: best.params,
        best_loss: best.loss,
        best_index: best.index,
        observations: obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(index: usize, lambda: f64, loss: f64) -> Trial {
        Trial {
            index,
            params: HyperParams {
                lambda,
                gamma: 0.1,
                mu: 0.1,
                eta: 1.0,
            },
            loss,
            status: TrialStatus::Ok,
        }
    }

    #[test]
    fn prior_density_is_flat() {
        let spec = ParamSpec::log(libm::exp2(-10.0), 4.0);
        let width = 12.0 * core::f64::consts::LN_2;
        for q in [0.001, 0.1, 3.0] {
            assert!((parzen_density(&[], &spec, q) - 1.0 / width).abs() < 1e-12);
        }
    }

    #[test]
    fn density_peaks_at_atom() {
        let spec = ParamSpec::log(1e-3, 4.0);
        let pts = [0.05; 6];
        let at = parzen_density(&pts, &spec, 0.05);
        for q in [0.01, 0.04, 0.06, 0.5, 2.0] {
            assert!(parzen_density(&pts, &spec, q) < at);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let spec = ParamSpec::log(libm::exp2(-10.0), 4.0);
        let pts = [0.001, 0.002, 0.3, 3.9, 1.0, 0.0011];
        let (lo, hi) = spec.internal_bounds();
        // midpoint rule on 10^4 cells in scale coordinates
        let n = 10_000;
        let h = (hi - lo) / n as f64;
        let mass: f64 = (0..n)
            .map(|i| {
                let z = lo + (i as f64 + 0.5) * h;
                parzen_density(&pts, &spec, spec.from_internal(z)) * h
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn good_set_size_is_ceiling() {
        let mut obs = ObservationSet::new(0.25);
        for i in 0..23 {
            obs.push(trial(i, 0.1, (23 - i) as f64));
            let (good, bad) = obs.split();
            let expected = libm::ceil(0.25 * (i + 1) as f64) as usize;
            assert_eq!(good.len(), expected);
            assert_eq!(good.len() + bad.len(), i + 1);
        }
    }

    #[test]
    fn best_prefers_earliest_tie() {
        let mut obs = ObservationSet::new(0.25);
        obs.push(trial(0, 0.1, 0.5));
        obs.push(trial(1, 0.2, 0.3));
        obs.push(trial(2, 0.3, 0.3));
        assert_eq!(obs.best().unwrap().index, 1);
        assert_eq!(obs.best_so_far(), [0.5, 0.3, 0.3]);
    }

    #[test]
    fn sentinel_scales_with_worst_finite_loss() {
        let mut obs = ObservationSet::new(0.25);
        assert_eq!(obs.sentinel(), 1e3);
        obs.push(trial(0, 0.1, 0.5));
        obs.push(trial(1, 0.1, 0.2));
        assert_eq!(obs.sentinel(), 5.0);
    }

    #[test]
    fn startup_draw_within_bounds() {
        let space = SearchSpace::default();
        let obs = ObservationSet::new(0.25);
        for seed in 0..1000 {
            let hp = suggest(&obs, &space, &TpeConfig::default(), seed);
            assert!(space.contains(&hp), "{hp:?}");
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(ParamSpec::new(0.0, 1.0, Scale::Log).is_err());
        assert!(ParamSpec::new(2.0, 1.0, Scale::Linear).is_err());
        assert!(ParamSpec::new(0.5, 1.0, Scale::Linear).is_ok());
    }
}
