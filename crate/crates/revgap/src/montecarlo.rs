//! Trajectory simulation, autocorrelation-based relaxation-time estimates,
//! and exact total-variation mixing times at small n via uniformization.

use crate::chains::{ChainSpec, PairAverager, WeightedMove};
use crate::error::{Error, Result};
use crate::perm::{self, factorial, Configuration, Move};
use crate::spectral::{GapMethod, GapReport};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::Serialize;
use std::time::Instant;

/// State-space cap for transient-distribution work (7! dense vectors).
pub const MIXING_CAP: usize = 7;
/// Poisson-tail truncation for uniformization.
pub const TRUNCATION_TAIL: f64 = 1e-12;

/// Sampling plan for stationary autocorrelation runs.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Sampling span per replica (after burn-in).
    pub horizon: f64,
    /// Uniformly spaced lag grid; the first entry is the sample spacing.
    pub lags: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    /// 0 when starting from stationarity (the uniform law is directly
    /// samplable here).
    pub burn_in: f64,
}

impl SimParams {
    /// Checks the grid and returns (spacing, number of lags).
    fn validated(&self) -> Result<(f64, usize)> {
        if self.replicas < 2 {
            return Err(Error::InvalidParams("need at least 2 replicas for a stderr".into()));
        }
        if self.lags.is_empty() {
            return Err(Error::InvalidParams("empty lag grid".into()));
        }
        let dt = self.lags[0];
        if dt <= 0.0 {
            return Err(Error::InvalidParams("lag spacing must be positive".into()));
        }
        for (i, &l) in self.lags.iter().enumerate() {
            let expected = dt * (i + 1) as f64;
            if (l - expected).abs() > 1e-9 * expected.max(1.0) {
                return Err(Error::InvalidParams(format!(
                    "lag grid must be uniform multiples of {dt} (entry {i} is {l})"
                )));
            }
        }
        let max_lag = *self.lags.last().expect("nonempty");
        if self.horizon < max_lag {
            return Err(Error::InvalidParams(format!(
                "horizon {} below the largest lag {max_lag}",
                self.horizon
            )));
        }
        Ok((dt, self.lags.len()))
    }
}

/// One jump of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct Event {
    pub time: f64,
    pub mv: Move,
}

/// Continuous-time trajectory of a chain: a rate-R Poisson clock (R the
/// total move weight) selecting moves proportionally to weight.
/// Deterministic given the seed.
pub struct Simulator {
    n: usize,
    letters: Vec<usize>,
    moves: Vec<WeightedMove>,
    picker: WeightedIndex<f64>,
    waiting: Exp<f64>,
    time: f64,
    next_jump: f64,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(spec: &ChainSpec, start: Configuration, seed: u64) -> Result<Self> {
        spec.validate()?;
        let n = spec.n();
        if start.n() != n {
            return Err(Error::SizeMismatch {
                n,
                expected: n,
                got: start.n(),
            });
        }
        let moves = spec.moves()?;
        let total: f64 = moves.iter().map(|m| m.weight).sum();
        if total <= 0.0 {
            return Err(Error::InvalidSpec("total jump rate must be positive".into()));
        }
        let picker = WeightedIndex::new(moves.iter().map(|m| m.weight))
            .map_err(|e| Error::InvalidSpec(format!("bad move weights: {e}")))?;
        let waiting = Exp::new(total).expect("positive rate");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = waiting.sample(&mut rng);
        Ok(Self {
            n,
            letters: start.into_letters(),
            moves,
            picker,
            waiting,
            time: 0.0,
            next_jump: first,
            rng,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn config(&self) -> Configuration {
        Configuration::new(self.letters.clone()).expect("moves preserve the bijection")
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    fn apply_move(&mut self, idx: usize) {
        let mv = self.moves[idx].mv;
        match mv {
            Move::BlockAverage { a, b } => {
                let verts: Vec<usize> =
                    a.vertices(self.n).chain(b.vertices(self.n)).collect();
                let mut pool: Vec<usize> = verts.iter().map(|&v| self.letters[v - 1]).collect();
                pool.shuffle(&mut self.rng);
                for (v, l) in verts.iter().zip(pool) {
                    self.letters[v - 1] = l;
                }
            }
            _ => mv.apply_in_place(&mut self.letters),
        }
    }

    /// Advances to the next jump, applies it, and returns it.
    pub fn next_event(&mut self) -> Event {
        self.time = self.next_jump;
        let idx = self.picker.sample(&mut self.rng);
        self.apply_move(idx);
        self.next_jump = self.time + self.waiting.sample(&mut self.rng);
        Event {
            time: self.time,
            mv: self.moves[idx].mv,
        }
    }

    /// Processes every jump with time <= t and leaves the clock at t.
    pub fn run_until(&mut self, t: f64) {
        while self.next_jump <= t {
            self.next_event();
        }
        self.time = t;
    }
}

/// An observable sampled along trajectories.
pub trait Observable: Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, eta: &Configuration) -> f64;
}

impl Observable for crate::bounds::Witness {
    fn name(&self) -> &str {
        crate::bounds::Witness::name(self)
    }
    fn evaluate(&self, eta: &Configuration) -> f64 {
        crate::bounds::Witness::evaluate(self, eta)
    }
}

/// An observable defined by a closure.
pub struct FnObservable<F: Fn(&Configuration) -> f64 + Sync> {
    pub name: String,
    pub f: F,
}

impl<F: Fn(&Configuration) -> f64 + Sync> Observable for FnObservable<F> {
    fn name(&self) -> &str {
        &self.name
    }
    fn evaluate(&self, eta: &Configuration) -> f64 {
        (self.f)(eta)
    }
}

/// Normalized-autocorrelation window used for the log-linear fit.
#[derive(Debug, Clone, Copy)]
pub struct AutocorrWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for AutocorrWindow {
    fn default() -> Self {
        Self { lo: 0.1, hi: 0.7 }
    }
}

/// Estimates the exponential decay rate of the stationary autocovariance of
/// an observable, by regressing log-autocovariance on lag over the window
/// where the pooled normalized autocorrelation lies in [lo, hi]. The rate
/// of any single observable is at least the spectral gap, so 1/rate is an
/// observable-specific upper-bound estimate of τ; the report is labeled
/// accordingly.
pub fn estimate_gap_autocorr(
    spec: &ChainSpec,
    observable: &dyn Observable,
    params: &SimParams,
    window: AutocorrWindow,
) -> Result<GapReport> {
    let started = Instant::now();
    let (dt, num_lags) = params.validated()?;
    let n = spec.n();
    let samples_per_replica = (params.horizon / dt).floor() as usize + 1;
    if samples_per_replica <= num_lags + 1 {
        return Err(Error::InvalidParams(
            "horizon too short for the lag grid".into(),
        ));
    }

    // per-replica sampled series
    let mut series: Vec<Vec<f64>> = Vec::with_capacity(params.replicas);
    for replica in 0..params.replicas {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(replica as u64 + 1);
        let start = Configuration::random(n, &mut rng);
        let sim_seed = rng.gen::<u64>();
        let mut sim = Simulator::new(spec, start, sim_seed)?;
        let mut xs = Vec::with_capacity(samples_per_replica);
        for i in 0..samples_per_replica {
            sim.run_until(params.burn_in + i as f64 * dt);
            xs.push(observable.evaluate(&sim.config()));
        }
        series.push(xs);
    }

    // per-replica autocovariances, pooled for window selection
    let autocov = |xs: &[f64], k: usize| -> f64 {
        let m = xs.len() - k;
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (0..m)
            .map(|i| (xs[i] - mean) * (xs[i + k] - mean))
            .sum::<f64>()
            / m as f64
    };
    let per_replica: Vec<Vec<f64>> = series
        .iter()
        .map(|xs| (0..=num_lags).map(|k| autocov(xs, k)).collect())
        .collect();
    let pooled: Vec<f64> = (0..=num_lags)
        .map(|k| per_replica.iter().map(|g| g[k]).sum::<f64>() / params.replicas as f64)
        .collect();
    if pooled[0] <= 0.0 {
        return Err(Error::EstimationFailed("observable has no variance".into()));
    }

    // contiguous window where the pooled normalized autocorrelation sits in
    // [lo, hi] and stays positive
    let rho: Vec<f64> = pooled.iter().map(|g| g / pooled[0]).collect();
    let mut k_lo = None;
    for k in 1..=num_lags {
        if rho[k] <= window.hi {
            k_lo = Some(k);
            break;
        }
    }
    let k_lo = k_lo.ok_or_else(|| {
        Error::EstimationFailed("autocorrelation never decays into the window; extend the lags".into())
    })?;
    let mut k_hi = k_lo;
    while k_hi + 1 <= num_lags && rho[k_hi + 1] >= window.lo && rho[k_hi + 1] > 0.0 {
        k_hi += 1;
    }
    if k_hi == k_lo {
        return Err(Error::EstimationFailed(
            "autocorrelation window too narrow; refine the lag spacing".into(),
        ));
    }

    // per-replica log-linear fits over the common window
    let mut rates = Vec::new();
    for g in &per_replica {
        if g[k_lo..=k_hi].iter().any(|&v| v <= 0.0) {
            continue; // signal too weak in this replica
        }
        let pts: Vec<(f64, f64)> = (k_lo..=k_hi)
            .map(|k| (k as f64 * dt, g[k].ln()))
            .collect();
        let fit = least_squares(&pts);
        rates.push(-fit.0);
    }
    if rates.len() < 2 {
        return Err(Error::EstimationFailed(
            "autocovariance nonpositive in the window for most replicas".into(),
        ));
    }
    let rate = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - rate) * (r - rate)).sum::<f64>()
        / (rates.len() as f64 - 1.0);
    let stderr = (var / rates.len() as f64).sqrt();
    if rate <= 0.0 {
        return Err(Error::EstimationFailed("nonpositive fitted rate".into()));
    }

    let mut report = GapReport::for_spec(spec, GapMethod::MonteCarlo, rate);
    report.residual_or_stderr = stderr;
    report.iterations = params.replicas * samples_per_replica;
    report.seed = Some(params.seed);
    report.observable = Some(observable.name().to_string());
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// (slope, intercept) of an ordinary least-squares line.
fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    (slope, (sy - slope * sx) / m)
}

/// The jump chain of a spec, applied matrix-free to dense distributions.
struct JumpChain {
    n: usize,
    det: Vec<(Move, f64)>,
    avg: Vec<(PairAverager, f64)>,
    total_rate: f64,
}

impl JumpChain {
    fn new(spec: &ChainSpec) -> Result<Self> {
        let n = spec.n();
        let mut det = Vec::new();
        let mut avg = Vec::new();
        for wm in spec.moves()? {
            match wm.mv {
                Move::BlockAverage { a, b } => avg.push((PairAverager::new(n, a, b)?, wm.weight)),
                mv => det.push((mv, wm.weight)),
            }
        }
        let total_rate = det.iter().map(|d| d.1).sum::<f64>()
            + avg.iter().map(|a| a.1).sum::<f64>();
        Ok(Self {
            n,
            det,
            avg,
            total_rate,
        })
    }

    /// `out = P_jump^T p` for a distribution p (P is ν-symmetric, so the
    /// transpose action coincides with the forward action).
    fn step_distribution(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut letters = vec![0usize; self.n];
        for (r, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            perm::unrank_into(r, &mut letters);
            for (mv, w) in &self.det {
                mv.apply_in_place(&mut letters);
                out[perm::rank_letters(&letters)] += mass * w / self.total_rate;
                mv.apply_in_place(&mut letters);
            }
        }
        for (pa, w) in &self.avg {
            let scaled = w / self.total_rate;
            let means = pa.class_means_for(p);
            for (r, slot) in out.iter_mut().enumerate() {
                *slot += scaled * means[pa.class_index(r)];
            }
        }
    }
}

/// Cached powers `P^k δ` for uniformization at many times.
struct UniformizationCache {
    chain: JumpChain,
    powers: Vec<Vec<f64>>,
}

impl UniformizationCache {
    fn new(spec: &ChainSpec, start: &Configuration) -> Result<Self> {
        let chain = JumpChain::new(spec)?;
        let dim = factorial(chain.n);
        let mut delta = vec![0.0; dim];
        delta[perm::rank(start)] = 1.0;
        Ok(Self {
            chain,
            powers: vec![delta],
        })
    }

    fn ensure(&mut self, k: usize) {
        while self.powers.len() <= k {
            let last = self.powers.last().expect("nonempty");
            let mut next = vec![0.0; last.len()];
            self.chain.step_distribution(last, &mut next);
            self.powers.push(next);
        }
    }

    /// p_t = e^{-Rt} Σ_k (Rt)^k/k! · P^k δ, truncated once the Poisson tail
    /// drops below `TRUNCATION_TAIL`. Returns (p_t, tail bound).
    fn distribution_at(&mut self, t: f64) -> (Vec<f64>, f64) {
        let dim = self.powers[0].len();
        let rt = self.chain.total_rate * t;
        let mut p = vec![0.0f64; dim];
        let mut weight = (-rt).exp();
        let mut cumulative = 0.0f64;
        let mut k = 0usize;
        loop {
            self.ensure(k);
            let vk = &self.powers[k];
            for (slot, &v) in p.iter_mut().zip(vk) {
                *slot += weight * v;
            }
            cumulative += weight;
            let tail = 1.0 - cumulative;
            if tail < TRUNCATION_TAIL && k as f64 >= rt {
                return (p, tail.max(0.0));
            }
            k += 1;
            weight *= rt / k as f64;
            if k > 100_000 {
                return (p, 1.0 - cumulative);
            }
        }
    }

    fn tv_to_uniform(&mut self, t: f64) -> (f64, f64) {
        let (p, tail) = self.distribution_at(t);
        let dim = p.len() as f64;
        let tv = 0.5 * p.iter().map(|v| (v - 1.0 / dim).abs()).sum::<f64>();
        (tv, tail)
    }
}

/// Transient distribution by uniformization (exposed for cross-checking).
pub fn transient_distribution(
    spec: &ChainSpec,
    start: &Configuration,
    t: f64,
) -> Result<Vec<f64>> {
    if spec.n() > MIXING_CAP {
        return Err(Error::EnumerationCap {
            n: spec.n(),
            cap: MIXING_CAP,
        });
    }
    let mut cache = UniformizationCache::new(spec, start)?;
    Ok(cache.distribution_at(t).0)
}

/// Transient distribution through the dense spectral decomposition of the
/// generator: `p_t = V e^{-tΛ} Vᵀ δ`. Independent of the uniformization
/// path; used as its oracle.
pub fn transient_distribution_expm(
    spec: &ChainSpec,
    start: &Configuration,
    t: f64,
) -> Result<Vec<f64>> {
    let neg_g = crate::spectral::dense_neg_generator(spec)?;
    let dim = neg_g.len();
    let mat = faer::Mat::from_fn(dim, dim, |i, j| neg_g[i][j]);
    let evd = mat.selfadjoint_eigendecomposition(faer::Side::Lower);
    let u = evd.u();
    let s = evd.s().column_vector().to_owned();
    let r0 = perm::rank(start);
    // coefficients c = U^T delta
    let mut p = vec![0.0f64; dim];
    for j in 0..dim {
        let c = u.read(r0, j) * (-t * s.read(j)).exp();
        for (i, slot) in p.iter_mut().enumerate() {
            *slot += c * u.read(i, j);
        }
    }
    Ok(p)
}

/// An exact total-variation mixing profile.
#[derive(Debug, Clone, Serialize)]
pub struct MixingResult {
    pub mixing_time: f64,
    pub epsilon: f64,
    pub tv_curve: Vec<(f64, f64)>,
    pub truncation_error: f64,
}

/// Exact mixing time: the first t with `TV(p_t, ν) ≤ ε`, located by
/// doubling then bisection to `resolution`. The start defaults to the
/// identity; by vertex relabeling the answer does not depend on it.
pub fn exact_tv_mixing(
    spec: &ChainSpec,
    epsilon: f64,
    resolution: f64,
    start: Option<Configuration>,
) -> Result<MixingResult> {
    spec.validate()?;
    let n = spec.n();
    if n > MIXING_CAP {
        return Err(Error::EnumerationCap { n, cap: MIXING_CAP });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams("epsilon must lie in (0,1)".into()));
    }
    let start = start.unwrap_or_else(|| Configuration::identity(n));
    let mut cache = UniformizationCache::new(spec, &start)?;
    let mut truncation: f64 = 0.0;

    // bracket by doubling
    let mut hi = 1.0 / cache.chain.total_rate;
    let mut lo = 0.0;
    let mut guard = 0;
    loop {
        let (tv, tail) = cache.tv_to_uniform(hi);
        truncation = truncation.max(tail);
        if tv <= epsilon {
            break;
        }
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 64 {
            return Err(Error::EstimationFailed("mixing-time bracket did not close".into()));
        }
    }
    // bisection
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        let (tv, tail) = cache.tv_to_uniform(mid);
        truncation = truncation.max(tail);
        if tv <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mixing_time = hi;

    // curve on a uniform grid over the explored range
    let grid_points = 33usize;
    let t_max = (2.0 * mixing_time).max(resolution * 4.0);
    let mut tv_curve = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let t = t_max * i as f64 / (grid_points - 1) as f64;
        let (tv, tail) = cache.tv_to_uniform(t);
        truncation = truncation.max(tail);
        tv_curve.push((t, tv));
    }
    Ok(MixingResult {
        mixing_time,
        epsilon,
        tv_curve,
        truncation_error: truncation,
    })
}

/// One relaxation-time measurement in a scaling study.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub chain: String,
    pub method: String,
    pub tau: f64,
    pub stderr: f64,
    pub seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum ScalingMethod {
    Exact,
    MonteCarlo,
}

/// Per-point budget for Monte Carlo scaling runs, in units of a
/// relaxation-time guess derived from the theoretical scale.
#[derive(Debug, Clone, Copy)]
pub struct McBudget {
    pub horizon_taus: f64,
    pub lag_spacing_taus: f64,
    pub max_lag_taus: f64,
    pub replicas: usize,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            horizon_taus: 400.0,
            lag_spacing_taus: 0.125,
            max_lag_taus: 4.0,
            replicas: 8,
        }
    }
}

fn tau_guess(spec: &ChainSpec) -> f64 {
    match *spec {
        ChainSpec::LReversal { n, max_len } => {
            let nf = n as f64;
            let lf = max_len as f64;
            (nf / 2.0).max(nf * nf * nf / (lf * lf * lf) / 16.0)
        }
        ChainSpec::ThetaReversal { n, theta } => {
            let nf = n as f64;
            let d = nf * (1.0 - theta);
            (nf / 2.0).max(d * d * d / 16.0)
        }
        _ => spec.n() as f64,
    }
}

/// Measures τ on a grid of chains, exactly (within the cap) or by
/// ψ-autocorrelation Monte Carlo.
pub fn scaling_experiment(
    specs: &[ChainSpec],
    method: ScalingMethod,
    budget: &McBudget,
    seed: u64,
) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let started = Instant::now();
        let (tau, stderr, method_name) = match method {
            ScalingMethod::Exact => {
                let rep = crate::spectral::generator_gap(
                    spec,
                    crate::spectral::MethodChoice::Auto,
                    1e-8,
                )?;
                (rep.tau, 0.0, "exact")
            }
            ScalingMethod::MonteCarlo => {
                let guess = tau_guess(spec);
                let dt = budget.lag_spacing_taus * guess;
                let num_lags = (budget.max_lag_taus / budget.lag_spacing_taus).round() as usize;
                let params = SimParams {
                    horizon: budget.horizon_taus * guess,
                    lags: (1..=num_lags).map(|k| k as f64 * dt).collect(),
                    replicas: budget.replicas,
                    seed: seed.wrapping_add(idx as u64),
                    burn_in: 0.0,
                };
                let psi = crate::bounds::make_witness(
                    crate::bounds::WitnessKind::Psi,
                    spec.n(),
                    None,
                )?;
                let rep = estimate_gap_autocorr(spec, &psi, &params, AutocorrWindow::default())?;
                // d(1/rate) = stderr/rate^2
                (
                    rep.tau,
                    rep.residual_or_stderr / (rep.gap * rep.gap),
                    "mc",
                )
            }
        };
        let (chain, max_len, theta) = match *spec {
            ChainSpec::LReversal { max_len, .. } => ("l-reversal", Some(max_len), None),
            ChainSpec::ThetaReversal { theta, .. } => ("theta-reversal", None, Some(theta)),
            _ => ("other", None, None),
        };
        rows.push(ScalingRow {
            n: spec.n(),
            max_len,
            theta,
            chain: chain.to_string(),
            method: method_name.to_string(),
            tau,
            stderr,
            seconds: started.elapsed().as_secs_f64(),
            seed,
        });
    }
    Ok(rows)
}

/// Least-squares slope of log τ against log n, with the regression standard
/// error of the slope.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn fit_log_slope(rows: &[(usize, f64)]) -> Result<SlopeFit> {
    if rows.len() < 3 {
        return Err(Error::FitUnavailable {
            needed: 3,
            got: rows.len(),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|&(n, tau)| ((n as f64).ln(), tau.ln()))
        .collect();
    let (slope, intercept) = least_squares(&pts);
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - slope * p.0 - intercept;
            r * r
        })
        .sum();
    let sigma2 = rss / (m - 2.0);
    Ok(SlopeFit {
        slope,
        intercept,
        slope_stderr: (sigma2 / sxx).sqrt(),
        points: rows.len(),
    })
}
