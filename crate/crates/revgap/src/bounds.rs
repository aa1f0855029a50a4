//! Slow-mode test functions and the comparison-inequality checkers.
//!
//! The witnesses certify relaxation-time lower bounds through their Rayleigh
//! quotients: ψ tracks one letter against a smooth profile (diffusive scale
//! n³/L³), χ is the adjacency indicator of two letters (scale n), ξ is the
//! half-occupancy indicator used for the log-Sobolev witness. ψ and χ
//! project onto one- and two-letter marginals, so their exact Dirichlet
//! forms are computable far beyond full enumeration.
//!
//! The checkers evaluate, by full enumeration, the block-dynamics
//! inequalities that chain variance down to single reversals, each as an
//! lhs/rhs pair with recorded slack.

use crate::chains::{dirichlet, ChainSpec, ObservableTable, PairAverager, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::perm::{self, factorial, Arc, Configuration, EllPartition, Move};
use crate::tableio::fingerprint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc as StdArc;

/// Relative slack allowed before an inequality is declared failed, to
/// absorb summation error over n! terms.
pub const SLACK_TOLERANCE: f64 = 1e-10;

type Profile = StdArc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth profile g on [0,1] with mean 0 and unit L² norm, carried with
/// its derivative and ∫g′².
#[derive(Clone)]
pub struct ProfileG {
    name: String,
    g: Profile,
    g_prime: Profile,
    grad_sq_integral: f64,
}

impl std::fmt::Debug for ProfileG {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProfileG")
            .field("name", &self.name)
            .field("grad_sq_integral", &self.grad_sq_integral)
            .finish()
    }
}

impl ProfileG {
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad_sq_integral: f64,
    ) -> Self {
        Self {
            name: name.into(),
            g: StdArc::new(g),
            g_prime: StdArc::new(g_prime),
            grad_sq_integral,
        }
    }

    /// The first cosine harmonic `√2·cos(2πt)`; `∫g′² = 4π²`.
    pub fn default_cosine() -> Self {
        Self::new(
            "sqrt2-cos-2pi",
            |t| std::f64::consts::SQRT_2 * (2.0 * PI * t).cos(),
            |t| -2.0 * PI * std::f64::consts::SQRT_2 * (2.0 * PI * t).sin(),
            4.0 * PI * PI,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn g(&self, t: f64) -> f64 {
        (self.g)(t)
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        (self.g_prime)(t)
    }

    pub fn grad_sq_integral(&self) -> f64 {
        self.grad_sq_integral
    }

    /// Simpson quadrature of (∫g, ∫g², ∫g′²) on `2·panels` subintervals.
    pub fn quadrature(&self, panels: usize) -> (f64, f64, f64) {
        let m = 2 * panels.max(1);
        let h = 1.0 / m as f64;
        let weight = |i: usize| -> f64 {
            if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut ig = 0.0;
        let mut ig2 = 0.0;
        let mut igp2 = 0.0;
        for i in 0..=m {
            let t = i as f64 * h;
            let w = weight(i);
            let gv = self.g(t);
            let gp = self.g_prime(t);
            ig += w * gv;
            ig2 += w * gv * gv;
            igp2 += w * gp * gp;
        }
        let scale = h / 3.0;
        (ig * scale, ig2 * scale, igp2 * scale)
    }
}

impl Default for ProfileG {
    fn default() -> Self {
        Self::default_cosine()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Psi,
    Chi,
    Xi,
}

/// A test function on configurations.
#[derive(Debug, Clone)]
pub struct Witness {
    kind: WitnessKind,
    n: usize,
    profile: Option<ProfileG>,
}

/// Builds a witness; ψ takes an optional profile (default cosine), ξ needs
/// even n.
pub fn make_witness(kind: WitnessKind, n: usize, profile: Option<ProfileG>) -> Result<Witness> {
    if n < 3 {
        return Err(Error::InvalidParams("witnesses need n >= 3".into()));
    }
    if kind == WitnessKind::Xi && n % 2 != 0 {
        return Err(Error::InvalidParams("xi needs even n".into()));
    }
    let profile = match kind {
        WitnessKind::Psi => Some(profile.unwrap_or_default()),
        _ => None,
    };
    Ok(Witness { kind, n, profile })
}

impl Witness {
    pub fn kind(&self) -> WitnessKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            WitnessKind::Psi => "psi",
            WitnessKind::Chi => "chi",
            WitnessKind::Xi => "xi",
        }
    }

    pub fn evaluate(&self, eta: &Configuration) -> f64 {
        let n = self.n;
        debug_assert_eq!(eta.n(), n);
        match self.kind {
            WitnessKind::Psi => {
                let pos = eta.position_of(n).expect("letter n present");
                self.profile.as_ref().expect("psi has a profile").g(pos as f64 / n as f64)
            }
            WitnessKind::Chi => {
                let p1 = eta.position_of(1).expect("letter 1 present");
                let p2 = eta.position_of(2).expect("letter 2 present");
                let d = (p1 + n - p2) % n;
                if d == 1 || d == n - 1 {
                    1.0
                } else {
                    0.0
                }
            }
            WitnessKind::Xi => {
                let half = n / 2;
                let ok = eta.letters()[..half].iter().all(|&l| l <= half);
                if ok {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Dense table of the witness over all n! states.
    pub fn table(&self) -> Result<ObservableTable> {
        ObservableTable::from_fn(self.n, |eta| self.evaluate(eta))
    }
}

/// ν[χ] = 2/(n-1) for n >= 3.
pub fn chi_mean_closed(n: usize) -> f64 {
    2.0 / (n as f64 - 1.0)
}

/// Var(χ) = p(1-p) with p = 2/(n-1), i.e. 2(n-3)/(n-1)². (Indicator
/// variance; matches exhaustive enumeration for all n.)
pub fn chi_variance_closed(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * (nf - 3.0) / ((nf - 1.0) * (nf - 1.0))
}

/// (mean, variance) of χ from the two-letter projection: the ordered
/// position pair of letters 1 and 2 is uniform over n(n-1) states.
pub fn chi_stats_projected(n: usize) -> (f64, f64) {
    let mut sum = 0.0f64;
    let states = (n * (n - 1)) as f64;
    for p1 in 1..=n {
        for p2 in 1..=n {
            if p1 == p2 {
                continue;
            }
            let d = (p1 + n - p2) % n;
            if d == 1 || d == n - 1 {
                sum += 1.0;
            }
        }
    }
    let mean = sum / states;
    // indicator: second moment equals the mean
    (mean, mean - mean * mean)
}

/// Reflection of position `p` under the reversal `(x, len)` on the n-cycle;
/// identity when `p` is outside the (truncated) segment.
#[inline]
fn reflect(p: usize, x: usize, len: usize, n: usize) -> usize {
    let count = (len + 1).min(n);
    let off = (p + n - x) % n;
    if off < count {
        (x - 1 + (count - 1 - off)) % n + 1
    } else {
        p
    }
}

/// Exact `E(ψ,ψ)` on the single-letter projection, for the L-reversal or
/// θ-reversal chain. The position of letter n is uniform on the cycle and a
/// reversal containing it reflects it across the segment midpoint, so the
/// form is an explicit double sum costing O(n·Σℓ²) — no enumeration.
pub fn psi_dirichlet_projected(spec: &ChainSpec, g: &ProfileG) -> Result<f64> {
    spec.validate()?;
    let (n, weights): (usize, Vec<(usize, f64)>) = match *spec {
        ChainSpec::LReversal { n, max_len } => {
            let w = 1.0 / (n as f64 * max_len as f64);
            (n, (1..=max_len).map(|l| (l, w)).collect())
        }
        ChainSpec::ThetaReversal { n, theta } => {
            let mut ws = Vec::new();
            for l in 1..=n {
                let w = (1.0 - theta) * theta.powi(l as i32 - 1) / n as f64;
                if w < 1e-18 * (1.0 - theta) {
                    break;
                }
                ws.push((l, w));
            }
            (n, ws)
        }
        _ => {
            return Err(Error::InvalidSpec(
                "psi projection applies to reversal chains only".into(),
            ))
        }
    };
    let gv: Vec<f64> = (1..=n).map(|v| g.g(v as f64 / n as f64)).collect();
    let mut total = 0.0;
    for &(len, w) in &weights {
        let count = (len + 1).min(n);
        for x in 1..=n {
            let mut seg = 0.0;
            for i in 0..count {
                let y = (x - 1 + i) % n;
                let y_ref = (x - 1 + (count - 1 - i)) % n;
                let d = gv[y_ref] - gv[y];
                seg += d * d;
            }
            total += w * seg / n as f64;
        }
    }
    Ok(0.5 * total)
}

/// Var(ψ) on the single-letter projection (exact).
pub fn psi_variance_projected(n: usize, g: &ProfileG) -> f64 {
    let gv: Vec<f64> = (1..=n).map(|v| g.g(v as f64 / n as f64)).collect();
    let mean = gv.iter().sum::<f64>() / n as f64;
    gv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

/// Exact `E(χ,χ)` for the L-reversal chain on the two-letter projection.
pub fn chi_dirichlet_projected(n: usize, max_len: usize) -> Result<f64> {
    if n < 3 || max_len == 0 || max_len > n {
        return Err(Error::InvalidParams(format!(
            "chi projection needs n >= 3 and 1 <= L <= n (got n={n}, L={max_len})"
        )));
    }
    let adj = |p1: usize, p2: usize| -> f64 {
        let d = (p1 + n - p2) % n;
        if d == 1 || d == n - 1 {
            1.0
        } else {
            0.0
        }
    };
    let w = 1.0 / (n as f64 * max_len as f64);
    let states = (n * (n - 1)) as f64;
    let mut total = 0.0;
    for x in 1..=n {
        for len in 1..=max_len {
            let mut acc = 0.0;
            for p1 in 1..=n {
                let q1 = reflect(p1, x, len, n);
                for p2 in 1..=n {
                    if p1 == p2 {
                        continue;
                    }
                    let q2 = reflect(p2, x, len, n);
                    let d = adj(q1, q2) - adj(p1, p2);
                    acc += d * d;
                }
            }
            total += w * acc / states;
        }
    }
    Ok(0.5 * total)
}

/// Parameters for the Monte Carlo ξ-Dirichlet estimate used above the
/// enumeration cap.
#[derive(Debug, Clone, Copy)]
pub struct XiMcParams {
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
}

impl Default for XiMcParams {
    fn default() -> Self {
        Self {
            samples: 20_000,
            batches: 10,
            seed: 1,
        }
    }
}

/// The log-Sobolev witness numbers for ξ under the L-reversal chain:
/// Ent(ξ) in closed form, E(ξ,ξ) exactly (n ≤ 8) or by Monte Carlo, and
/// their ratio, which lower-bounds the log-Sobolev constant since
/// `E(√ξ,√ξ) = E(ξ,ξ)` for an indicator.
#[derive(Debug, Clone, Serialize)]
pub struct XiWitnessReport {
    pub n: usize,
    #[serde(rename = "L")]
    pub max_len: usize,
    pub entropy: f64,
    pub dirichlet: f64,
    pub ratio: f64,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

pub fn xi_witness(n: usize, max_len: usize, mc: Option<XiMcParams>) -> Result<XiWitnessReport> {
    if n % 2 != 0 {
        return Err(Error::InvalidParams("xi needs even n".into()));
    }
    if max_len == 0 || max_len > n {
        return Err(Error::InvalidParams("need 1 <= L <= n".into()));
    }
    // nu[xi] = 1 / C(n, n/2)
    let mut log_binom = 0.0f64;
    for i in 0..n / 2 {
        log_binom += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    let p = (-log_binom).exp();
    let entropy = -p * p.ln();
    let spec = ChainSpec::LReversal { n, max_len };
    if n <= ENUMERATION_CAP {
        let xi = make_witness(WitnessKind::Xi, n, None)?;
        let table = xi.table()?;
        let e = dirichlet(&spec, &table)?;
        Ok(XiWitnessReport {
            n,
            max_len,
            entropy,
            dirichlet: e,
            ratio: entropy / e,
            method: "enumeration".into(),
            stderr: None,
        })
    } else {
        let params = mc.unwrap_or_default();
        let (e, stderr) = xi_dirichlet_mc(n, max_len, &params)?;
        Ok(XiWitnessReport {
            n,
            max_len,
            entropy,
            dirichlet: e,
            ratio: entropy / e,
            method: "monte-carlo".into(),
            stderr: Some(stderr),
        })
    }
}

/// Monte Carlo estimate of E(ξ,ξ) = (1/(nL))·Σ_{x,ℓ≤L} ν[ξ·(1-ξ^{x,ℓ})]:
/// sample η conditioned on ξ = 1 (the two halves shuffled independently)
/// and average the per-move breakage indicators; stderr by batching.
fn xi_dirichlet_mc(n: usize, max_len: usize, params: &XiMcParams) -> Result<(f64, f64)> {
    use rand::seq::SliceRandom;
    if params.samples < params.batches || params.batches < 2 {
        return Err(Error::InvalidParams("need samples >= batches >= 2".into()));
    }
    let half = n / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let p = {
        let mut log_binom = 0.0f64;
        for i in 0..half {
            log_binom += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        (-log_binom).exp()
    };
    let per_batch = params.samples / params.batches;
    let mut batch_means = Vec::with_capacity(params.batches);
    let mut letters: Vec<usize> = (1..=n).collect();
    for _ in 0..params.batches {
        let mut acc = 0.0f64;
        for _ in 0..per_batch {
            letters[..half].shuffle(&mut rng);
            letters[half..].shuffle(&mut rng);
            let mut broken = 0usize;
            for x in 1..=n {
                for len in 1..=max_len {
                    let count = (len + 1).min(n);
                    // broken iff some first-half vertex receives a letter > n/2
                    let mut breaks = false;
                    for i in 0..count {
                        let dst = (x - 1 + i) % n;
                        if dst < half {
                            let src = (x - 1 + (count - 1 - i)) % n;
                            if letters[src] > half {
                                breaks = true;
                                break;
                            }
                        }
                    }
                    if breaks {
                        broken += 1;
                    }
                }
            }
            acc += broken as f64;
        }
        batch_means.push(p * acc / (per_batch as f64 * (n * max_len) as f64));
    }
    let mean = batch_means.iter().sum::<f64>() / params.batches as f64;
    let var = batch_means
        .iter()
        .map(|b| (b - mean) * (b - mean))
        .sum::<f64>()
        / (params.batches as f64 - 1.0);
    Ok((mean, (var / params.batches as f64).sqrt()))
}

/// Outcome of one inequality evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub context: String,
}

impl InequalityReport {
    pub fn evaluate(lhs: f64, rhs: f64, context: String) -> Self {
        let slack = rhs - lhs;
        Self {
            lhs,
            rhs,
            slack,
            pass: slack >= -SLACK_TOLERANCE * rhs.abs().max(1.0),
            context,
        }
    }
}

/// An inequality check either yields a report or does not apply at the
/// given parameters.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum CheckOutcome {
    Checked(InequalityReport),
    NotApplicable { not_applicable: String },
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        match self {
            CheckOutcome::Checked(r) => r.pass,
            CheckOutcome::NotApplicable { .. } => true,
        }
    }

    pub fn report(&self) -> Option<&InequalityReport> {
        match self {
            CheckOutcome::Checked(r) => Some(r),
            CheckOutcome::NotApplicable { .. } => None,
        }
    }
}

/// State-to-state map of one deterministic move, cached for repeated
/// mean-square-gradient evaluations.
pub(crate) struct DetMoveMap {
    map: Vec<u32>,
}

impl DetMoveMap {
    pub(crate) fn new(n: usize, mv: &Move) -> Self {
        let dim = factorial(n);
        let mut map = vec![0u32; dim];
        let mut letters = vec![0usize; n];
        for (r, slot) in map.iter_mut().enumerate() {
            perm::unrank_into(r, &mut letters);
            mv.apply_in_place(&mut letters);
            *slot = perm::rank_letters(&letters) as u32;
        }
        Self { map }
    }

    pub(crate) fn mean_square(&self, f: &[f64]) -> f64 {
        let mut tot = 0.0;
        for (r, &s) in self.map.iter().enumerate() {
            let d = f[s as usize] - f[r];
            tot += d * d;
        }
        tot / f.len() as f64
    }
}

/// Precomputed quadratic-form machinery for one type-1 ℓ-partition: the
/// averagers of every ℓ-block pair and the adjacent exchange maps.
pub struct PartitionForms {
    partition: EllPartition,
    /// Averager for each unordered ℓ-block pair (renumbered indices), keyed
    /// by (i, j) with i < j, in lexicographic order.
    pair_avg: Vec<((usize, usize), PairAverager)>,
    /// Exchange map for each adjacent pair i = 1..N-1.
    exch: Vec<DetMoveMap>,
    /// Reversal-map cache shared across lemma evaluations.
    rev_cache: HashMap<(usize, usize), DetMoveMap>,
}

impl PartitionForms {
    pub fn new(n: usize, ell: usize, k: usize) -> Result<Self> {
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
        }
        let partition = EllPartition::new(n, ell, 1, k)?;
        let blocks = partition.ell_blocks();
        let nb = blocks.len();
        let mut pair_avg = Vec::new();
        for i in 0..nb {
            for j in i + 1..nb {
                pair_avg.push((
                    (i + 1, j + 1),
                    PairAverager::new(n, blocks[i], blocks[j])?,
                ));
            }
        }
        let mut exch = Vec::new();
        for i in 0..nb - 1 {
            exch.push(DetMoveMap::new(
                n,
                &Move::BlockExchange {
                    z: blocks[i].start,
                    len: ell,
                },
            ));
        }
        Ok(Self {
            partition,
            pair_avg,
            exch,
            rev_cache: HashMap::new(),
        })
    }

    pub fn partition(&self) -> &EllPartition {
        &self.partition
    }

    fn num_blocks(&self) -> usize {
        self.partition.num_ell_blocks()
    }

    /// `D_k(f,f) = (1/N)·Σ_{i,j ordered} ν[(A_{i,j}f)²]`.
    pub fn d_k(&self, f: &[f64]) -> f64 {
        let nb = self.num_blocks() as f64;
        self.pair_avg
            .iter()
            .map(|(_, pa)| 2.0 * pa.mean_square_gradient(f))
            .sum::<f64>()
            / nb
    }

    /// `ν[(A_{i,i+1}f)²]` for adjacent ℓ-blocks (i 1-based).
    pub fn avg_adjacent(&self, i: usize, f: &[f64]) -> f64 {
        let pa = &self
            .pair_avg
            .iter()
            .find(|((a, b), _)| *a == i && *b == i + 1)
            .expect("adjacent pair present")
            .1;
        pa.mean_square_gradient(f)
    }

    /// `ν[(E_{i,i+1}f)²]` for adjacent ℓ-blocks (i 1-based).
    pub fn exch_adjacent(&self, i: usize, f: &[f64]) -> f64 {
        self.exch[i - 1].mean_square(f)
    }

    /// `ν[(R_{x,len}f)²]`, cached; zero for len = 0 (identity move).
    pub fn rev_sq(&mut self, x: usize, len: usize, f: &[f64]) -> f64 {
        if len == 0 {
            return 0.0;
        }
        let n = self.partition.n();
        self.rev_cache
            .entry((x, len))
            .or_insert_with(|| DetMoveMap::new(n, &Move::Reversal { x, len }))
            .mean_square(f)
    }

    /// `ν[(∇_{x,y}f)²]` for a transposition, cached through the reversal
    /// cache's key space via a sentinel length.
    fn transposition_sq(&mut self, x: usize, y: usize, f: &[f64]) -> f64 {
        let n = self.partition.n();
        // key transpositions by (x, n + y) which cannot collide with
        // reversal keys (reversal len <= n)
        self.rev_cache
            .entry((x, n + y))
            .or_insert_with(|| DetMoveMap::new(n, &Move::Transposition { x, y }))
            .mean_square(f)
    }
}

fn grid_context(name: &str, n: usize, ell: usize, k: usize, i: Option<usize>, f: &[f64]) -> String {
    match i {
        Some(i) => format!("{name} n={n} ell={ell} k={k} i={i} f={}", fingerprint(f)),
        None => format!("{name} n={n} ell={ell} k={k} f={}", fingerprint(f)),
    }
}

fn table_for(n: usize, f: &ObservableTable) -> Result<&[f64]> {
    if f.n() != n {
        return Err(Error::SizeMismatch {
            n,
            expected: factorial(n),
            got: f.len(),
        });
    }
    Ok(f.values())
}

/// Variance against the averaged partition form: `Var(f) ≤ (3/2)·D̂(f,f)`
/// with D̂ the average of D_k over the N+1 type-1 partitions. Applies only
/// when `m = n - Nℓ ≥ 1`; for m = 0 the block-average dynamics itself has
/// unit gap.
pub fn check_prop_2_4(n: usize, ell: usize, f: &ObservableTable) -> Result<CheckOutcome> {
    let vals = table_for(n, f)?;
    let probe = EllPartition::new(n, ell, 1, 1)?;
    if probe.m() == 0 {
        return Ok(CheckOutcome::NotApplicable {
            not_applicable: format!("m = 0 at n={n}, ell={ell}: covered by the unit-gap block dynamics"),
        });
    }
    let kmax = probe.num_ell_blocks() + 1;
    let mut dhat = 0.0;
    for k in 1..=kmax {
        let forms = PartitionForms::new(n, ell, k)?;
        dhat += forms.d_k(vals);
    }
    dhat /= kmax as f64;
    let lhs = f.variance();
    let rhs = 1.5 * dhat;
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        lhs,
        rhs,
        grid_context("prop2_4", n, ell, 0, None, vals),
    )))
}

/// Per-partition comparison to the adjacent average-exchange dynamics:
/// `D_k(f,f) ≤ 3N²·Σᵢ ν[(E_{i,i+1}f)²] + (1/2)·Σᵢ ν[(A_{i,i+1}f)²]`.
pub fn check_lemma_2_5(n: usize, ell: usize, k: usize, f: &ObservableTable) -> Result<CheckOutcome> {
    let vals = table_for(n, f)?;
    let forms = PartitionForms::new(n, ell, k)?;
    let nb = forms.num_blocks();
    let lhs = forms.d_k(vals);
    let mut ex = 0.0;
    let mut av = 0.0;
    for i in 1..nb {
        ex += forms.exch_adjacent(i, vals);
        av += forms.avg_adjacent(i, vals);
    }
    let rhs = 3.0 * (nb * nb) as f64 * ex + 0.5 * av;
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        lhs,
        rhs,
        grid_context("lemma2_5", n, ell, k, None, vals),
    )))
}

/// One exchange term against its three reversals:
/// `ν[(E_{i,i+1}f)²] ≤ 3·ν[(R_{z,2ℓ-1}f)² + (R_{z+ℓ,ℓ-1}f)² + (R_{z,ℓ-1}f)²]`.
pub fn check_lemma_2_6(
    n: usize,
    ell: usize,
    k: usize,
    i: usize,
    f: &ObservableTable,
) -> Result<CheckOutcome> {
    let vals = table_for(n, f)?;
    let mut forms = PartitionForms::new(n, ell, k)?;
    if i == 0 || i >= forms.num_blocks() {
        return Err(Error::InvalidExchange(format!(
            "adjacent pair index {i} outside 1..={}",
            forms.num_blocks() - 1
        )));
    }
    let z = forms.partition().ell_block(i)?.start;
    let z_next = (z - 1 + ell) % n + 1;
    let lhs = forms.exch_adjacent(i, vals);
    let rhs = 3.0
        * (forms.rev_sq(z, 2 * ell - 1, vals)
            + forms.rev_sq(z_next, ell - 1, vals)
            + forms.rev_sq(z, ell - 1, vals));
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        lhs,
        rhs,
        grid_context("lemma2_6", n, ell, k, Some(i), vals),
    )))
}

/// Both right-hand sides of the average-term bound: the composition-correct
/// inner index `l-2`, and the printed `l-1` variant kept for comparison.
pub struct AverageTermBound {
    pub lhs: f64,
    pub rhs_corrected: f64,
    pub rhs_printed: f64,
    /// ν-averaged transposition bound (the intermediate conditional-variance
    /// estimate): `ν[(Af)²] ≤ (1/(8ℓ))·Σ_{x,y∈union} ν[(∇_{x,y}f)²]`.
    pub rhs_transpositions: f64,
}

/// Evaluates the average-term bound
/// `ν[(A_{i,i+1}f)²] ≤ (1/(2ℓ))·Σ_{x∈Iᵢ∪Iᵢ₊₁} Σ_{l≤2ℓ} ν[(R_{x,l}f)² + (R_{x+1,l-2}f)²]`
/// together with the printed-index variant and the transposition
/// intermediate.
pub fn lemma_2_7_terms(
    n: usize,
    ell: usize,
    k: usize,
    i: usize,
    f: &ObservableTable,
) -> Result<AverageTermBound> {
    let vals = table_for(n, f)?;
    let mut forms = PartitionForms::new(n, ell, k)?;
    if i == 0 || i >= forms.num_blocks() {
        return Err(Error::InvalidExchange(format!(
            "adjacent pair index {i} outside 1..={}",
            forms.num_blocks() - 1
        )));
    }
    let lhs = forms.avg_adjacent(i, vals);
    let union: Vec<usize> = {
        let bi = forms.partition().ell_block(i)?;
        let bj = forms.partition().ell_block(i + 1)?;
        bi.vertices(n).chain(bj.vertices(n)).collect()
    };
    let mut corrected = 0.0;
    let mut printed = 0.0;
    for &x in &union {
        let x1 = x % n + 1;
        for l in 1..=2 * ell {
            let rx = forms.rev_sq(x, l, vals);
            corrected += rx + forms.rev_sq(x1, l.saturating_sub(2), vals);
            printed += rx + forms.rev_sq(x1, l - 1, vals);
        }
    }
    let scale = 1.0 / (2.0 * ell as f64);
    // transposition intermediate, ordered pairs
    let mut trans = 0.0;
    for &x in &union {
        for &y in &union {
            if x != y {
                trans += forms.transposition_sq(x, y, vals);
            }
        }
    }
    Ok(AverageTermBound {
        lhs,
        rhs_corrected: corrected * scale,
        rhs_printed: printed * scale,
        rhs_transpositions: trans / (8.0 * ell as f64),
    })
}

/// The average-term bound with the composition-correct indices; the printed
/// variant and the transposition intermediate are recorded in the context.
pub fn check_lemma_2_7(
    n: usize,
    ell: usize,
    k: usize,
    i: usize,
    f: &ObservableTable,
) -> Result<CheckOutcome> {
    let terms = lemma_2_7_terms(n, ell, k, i, f)?;
    let intermediate_ok = terms.lhs <= terms.rhs_transpositions * (1.0 + SLACK_TOLERANCE) + SLACK_TOLERANCE;
    let context = format!(
        "{} rhs_printed={:.6e} rhs_transpositions={:.6e} intermediate_pass={}",
        grid_context("lemma2_7", n, ell, k, Some(i), f.values()),
        terms.rhs_printed,
        terms.rhs_transpositions,
        intermediate_ok,
    );
    let mut report = InequalityReport::evaluate(terms.lhs, terms.rhs_corrected, context);
    report.pass = report.pass && intermediate_ok;
    Ok(CheckOutcome::Checked(report))
}

/// The assembled variance bound at block scale ℓ inside the averaging
/// window `0.1·L ≤ ℓ ≤ L/2`:
/// `Var(f) ≤ (9/2)·N²·Ex(f) + (3/4)·Av(f)`, with Ex and Av the exchange and
/// average terms averaged over the type-1 partitions. The constants chain
/// the variance bound (3/2) through the per-partition comparison (3N², 1/2).
pub fn check_assembly(
    n: usize,
    max_len: usize,
    ell: usize,
    f: &ObservableTable,
) -> Result<CheckOutcome> {
    let vals = table_for(n, f)?;
    let delta = 0.1;
    if (ell as f64) < delta * max_len as f64 || 2 * ell > max_len {
        return Ok(CheckOutcome::NotApplicable {
            not_applicable: format!(
                "ell={ell} outside the window [{:.1}, {}] for L={max_len}",
                delta * max_len as f64,
                max_len / 2
            ),
        });
    }
    let probe = EllPartition::new(n, ell, 1, 1)?;
    let kmax = if probe.m() == 0 {
        1
    } else {
        probe.num_ell_blocks() + 1
    };
    let nb = probe.num_ell_blocks();
    let mut ex = 0.0;
    let mut av = 0.0;
    for k in 1..=kmax {
        let forms = PartitionForms::new(n, ell, k)?;
        for i in 1..nb {
            ex += forms.exch_adjacent(i, vals);
            av += forms.avg_adjacent(i, vals);
        }
    }
    ex /= kmax as f64;
    av /= kmax as f64;
    let lhs = f.variance();
    let rhs = 4.5 * (nb * nb) as f64 * ex + 0.75 * av;
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        lhs,
        rhs,
        format!(
            "assembly n={n} L={max_len} ell={ell} f={}",
            fingerprint(vals)
        ),
    )))
}

/// Term-dropping comparison of the θ-reversal form against the L-reversal
/// form: `E_θ(f,f) ≥ L(1-θ)θ^{L-1}·E_L(f,f)` for every integer 1 ≤ L ≤ n.
pub fn check_theta_to_l(
    n: usize,
    theta: f64,
    max_len: usize,
    f: &ObservableTable,
) -> Result<CheckOutcome> {
    let e_theta = dirichlet(&ChainSpec::ThetaReversal { n, theta }, f)?;
    let e_l = dirichlet(&ChainSpec::LReversal { n, max_len }, f)?;
    let c = max_len as f64 * (1.0 - theta) * theta.powi(max_len as i32 - 1);
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        c * e_l,
        e_theta,
        format!(
            "theta_to_l n={n} theta={theta} L={max_len} f={}",
            fingerprint(f.values())
        ),
    )))
}

/// Single-move comparison: `L·E_L(f,f) ≥ E_1(f,f)` (dropping all lengths
/// above 1), the step behind τ(n,L) ≤ L₀·τ(n,1).
pub fn check_single_move_comparison(
    n: usize,
    max_len: usize,
    f: &ObservableTable,
) -> Result<CheckOutcome> {
    let e_l = dirichlet(&ChainSpec::LReversal { n, max_len }, f)?;
    let e_1 = dirichlet(&ChainSpec::LReversal { n, max_len: 1 }, f)?;
    Ok(CheckOutcome::Checked(InequalityReport::evaluate(
        e_1,
        max_len as f64 * e_l,
        format!("single_move n={n} L={max_len} f={}", fingerprint(f.values())),
    )))
}

/// `count` independent standard-Gaussian tables, centered, with per-draw
/// streams derived from (master seed, draw index).
pub fn random_centered_tables(n: usize, count: usize, master_seed: u64) -> Result<Vec<ObservableTable>> {
    let dim = factorial(n);
    let mut out = Vec::with_capacity(count);
    for draw in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(draw as u64);
        let values: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut t = ObservableTable::new(n, values)?;
        t.center();
        out.push(t);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_profile_quadrature() {
        let g = ProfileG::default_cosine();
        let (ig, ig2, igp2) = g.quadrature(512);
        assert!(ig.abs() < 1e-8, "int g = {ig}");
        assert!((ig2 - 1.0).abs() < 1e-8, "int g^2 = {ig2}");
        assert_relative_eq!(igp2, g.grad_sq_integral(), epsilon = 1e-6);
        assert_relative_eq!(g.grad_sq_integral(), 4.0 * PI * PI);
    }

    #[test]
    fn witness_construction_rules() {
        assert!(make_witness(WitnessKind::Xi, 5, None).is_err());
        assert!(make_witness(WitnessKind::Chi, 2, None).is_err());
        assert!(make_witness(WitnessKind::Psi, 4, None).is_ok());
    }

    #[test]
    fn chi_means_and_variances() {
        // chi at n=4: mean 2/3; at n=3 identically 1
        let chi4 = make_witness(WitnessKind::Chi, 4, None).unwrap().table().unwrap();
        assert_relative_eq!(chi4.mean(), 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(chi4.mean(), chi_mean_closed(4), epsilon = 1e-14);
        assert_relative_eq!(chi4.variance(), chi_variance_closed(4), epsilon = 1e-14);
        let chi3 = make_witness(WitnessKind::Chi, 3, None).unwrap().table().unwrap();
        assert!(chi3.values().iter().all(|&v| v == 1.0));
        // projection agrees with enumeration for n in 3..=7
        for n in 3..=7usize {
            let t = make_witness(WitnessKind::Chi, n, None).unwrap().table().unwrap();
            let (pm, pv) = chi_stats_projected(n);
            assert_relative_eq!(t.mean(), pm, epsilon = 1e-13);
            assert_relative_eq!(t.variance(), pv, epsilon = 1e-13);
            assert_relative_eq!(pm, chi_mean_closed(n), epsilon = 1e-13);
            assert_relative_eq!(pv, chi_variance_closed(n), epsilon = 1e-13);
        }
    }

    #[test]
    fn xi_mean_is_inverse_central_binomial() {
        let xi4 = make_witness(WitnessKind::Xi, 4, None).unwrap().table().unwrap();
        assert_relative_eq!(xi4.mean(), 1.0 / 6.0, epsilon = 1e-14);
        let xi6 = make_witness(WitnessKind::Xi, 6, None).unwrap().table().unwrap();
        assert_relative_eq!(xi6.mean(), 0.05, epsilon = 1e-14);
    }

    #[test]
    fn psi_projection_examples() {
        let g = ProfileG::default_cosine();
        // n=4, L=1: hand enumeration of the 4-state projection gives 1/2
        let e = psi_dirichlet_projected(&ChainSpec::LReversal { n: 4, max_len: 1 }, &g).unwrap();
        assert_relative_eq!(e, 0.5, epsilon = 1e-13);
        // full-enumeration oracle at n=6, L=2 (value 1/3)
        let e = psi_dirichlet_projected(&ChainSpec::LReversal { n: 6, max_len: 2 }, &g).unwrap();
        assert_relative_eq!(e, 1.0 / 3.0, epsilon = 1e-13);
        let psi = make_witness(WitnessKind::Psi, 6, None).unwrap();
        let full = dirichlet(
            &ChainSpec::LReversal { n: 6, max_len: 2 },
            &psi.table().unwrap(),
        )
        .unwrap();
        assert_relative_eq!(e, full, epsilon = 1e-12);
        // rayleigh bound example: Var(psi)/E = 2 at n=4, L=1
        let var = psi_variance_projected(4, &g);
        assert_relative_eq!(var / 0.5, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn psi_projection_matches_enumeration_including_truncation() {
        let g = ProfileG::default_cosine();
        for (n, max_len) in [(5usize, 5usize), (6, 6), (6, 3), (4, 4)] {
            let spec = ChainSpec::LReversal { n, max_len };
            let proj = psi_dirichlet_projected(&spec, &g).unwrap();
            let psi = make_witness(WitnessKind::Psi, n, None).unwrap();
            let full = dirichlet(&spec, &psi.table().unwrap()).unwrap();
            assert_relative_eq!(proj, full, epsilon = 1e-12, max_relative = 1e-12);
        }
        for (n, theta) in [(5usize, 0.5f64), (6, 0.8)] {
            let spec = ChainSpec::ThetaReversal { n, theta };
            let proj = psi_dirichlet_projected(&spec, &g).unwrap();
            let psi = make_witness(WitnessKind::Psi, n, None).unwrap();
            let full = dirichlet(&spec, &psi.table().unwrap()).unwrap();
            assert_relative_eq!(proj, full, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn chi_projection_matches_enumeration() {
        for (n, max_len) in [(5usize, 2usize), (6, 3), (6, 6), (7, 4)] {
            let proj = chi_dirichlet_projected(n, max_len).unwrap();
            let chi = make_witness(WitnessKind::Chi, n, None).unwrap();
            let full = dirichlet(&ChainSpec::LReversal { n, max_len }, &chi.table().unwrap()).unwrap();
            assert_relative_eq!(proj, full, epsilon = 1e-12, max_relative = 1e-12);
        }
        // frozen oracle value: n=6, L=3 gives 2/15
        assert_relative_eq!(
            chi_dirichlet_projected(6, 3).unwrap(),
            2.0 / 15.0,
            epsilon = 1e-13
        );
        // n=3: chi is constant, the form vanishes
        for max_len in 1..=3 {
            assert_relative_eq!(
                chi_dirichlet_projected(3, max_len).unwrap(),
                0.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn chi_dirichlet_bound_small_grid() {
        for n in 3..=8usize {
            for max_len in 1..=n {
                let e = chi_dirichlet_projected(n, max_len).unwrap();
                let bound = 16.0 / (n as f64 * (n as f64 - 1.0));
                assert!(e <= bound + 1e-12, "n={n} L={max_len}: {e} > {bound}");
            }
        }
    }

    #[test]
    fn xi_witness_enumeration_values() {
        // n=4: Ent = (1/6) ln 6
        let rep = xi_witness(4, 2, None).unwrap();
        assert_relative_eq!(rep.entropy, 6f64.ln() / 6.0, epsilon = 1e-13);
        assert_eq!(rep.method, "enumeration");
        // closed-form entropy equals the table entropy for the indicator
        let xi = make_witness(WitnessKind::Xi, 4, None).unwrap().table().unwrap();
        assert_relative_eq!(rep.entropy, xi.entropy().unwrap(), epsilon = 1e-13);
        // frozen oracle: E(xi,xi) at n=6, L=2 is 1/40
        let rep = xi_witness(6, 2, None).unwrap();
        assert_relative_eq!(rep.dirichlet, 0.025, epsilon = 1e-13);
        assert!(xi_witness(5, 2, None).is_err());
    }

    #[test]
    fn xi_mc_is_consistent_with_enumeration_at_n8() {
        let exact = xi_witness(8, 3, None).unwrap();
        let (mc, stderr) = xi_dirichlet_mc(
            8,
            3,
            &XiMcParams {
                samples: 40_000,
                batches: 10,
                seed: 11,
            },
        )
        .unwrap();
        assert!(
            (mc - exact.dirichlet).abs() < 4.0 * stderr.max(1e-6),
            "mc {mc} vs exact {} (stderr {stderr})",
            exact.dirichlet
        );
    }

    #[test]
    fn checkers_pass_on_constants_and_random_tables() {
        let f0 = ObservableTable::constant(5, 2.0).unwrap();
        match check_prop_2_4(5, 2, &f0).unwrap() {
            CheckOutcome::Checked(r) => {
                assert!(r.pass);
                assert_relative_eq!(r.lhs, 0.0);
                assert_relative_eq!(r.rhs, 0.0);
            }
            _ => panic!("applicable"),
        }
        let tables = random_centered_tables(5, 6, 99).unwrap();
        for f in &tables {
            assert!(check_prop_2_4(5, 2, f).unwrap().passed());
            for k in 1..=3 {
                assert!(check_lemma_2_5(5, 2, k, f).unwrap().passed());
                assert!(check_lemma_2_6(5, 2, k, 1, f).unwrap().passed());
                assert!(check_lemma_2_7(5, 2, k, 1, f).unwrap().passed());
            }
            assert!(check_assembly(5, 4, 2, f).unwrap().passed());
            assert!(check_theta_to_l(5, 0.7, 3, f).unwrap().passed());
            assert!(check_single_move_comparison(5, 3, f).unwrap().passed());
        }
    }

    #[test]
    fn prop_2_4_not_applicable_when_m_is_zero() {
        let f = ObservableTable::constant(6, 0.0).unwrap();
        assert!(matches!(
            check_prop_2_4(6, 2, &f).unwrap(),
            CheckOutcome::NotApplicable { .. }
        ));
    }

    #[test]
    fn assembly_window_is_enforced() {
        let f = ObservableTable::constant(6, 0.0).unwrap();
        // ell > L/2 violates the window
        assert!(matches!(
            check_assembly(6, 3, 2, &f).unwrap(),
            CheckOutcome::NotApplicable { .. }
        ));
        // ell = 2, L = 4 is inside
        assert!(matches!(
            check_assembly(6, 4, 2, &f).unwrap(),
            CheckOutcome::Checked(_)
        ));
    }

    #[test]
    fn theta_to_l_factor_two_would_fail() {
        // the corrected constant is tight: doubling it breaks the
        // inequality for functions whose form concentrates on long
        // reversals at theta near 1
        let n = 5;
        let tables = random_centered_tables(n, 30, 7).unwrap();
        let theta = 0.99f64;
        let max_len = n;
        let mut doubled_fails = 0;
        for f in &tables {
            let out = check_theta_to_l(n, theta, max_len, f).unwrap();
            assert!(out.passed());
            let r = out.report().unwrap();
            // the doubled constant doubles the lhs
            if 2.0 * r.lhs > r.rhs * (1.0 + SLACK_TOLERANCE) {
                doubled_fails += 1;
            }
        }
        assert!(doubled_fails > 0, "doubled constant never failed");
    }

    #[test]
    fn witness_tables_as_checker_inputs() {
        // f = chi at n=7, ell=3 for the variance bound; psi at n=6, ell=2
        // for the partition comparison
        let chi = make_witness(WitnessKind::Chi, 7, None).unwrap().table().unwrap();
        let out = check_prop_2_4(7, 3, &chi).unwrap();
        assert!(out.passed());
        assert!(out.report().unwrap().slack > 0.0);
        let psi = make_witness(WitnessKind::Psi, 6, None).unwrap().table().unwrap();
        for k in 1..=1 {
            assert!(check_lemma_2_5(6, 2, k, &psi).unwrap().passed());
        }
        let chi8 = make_witness(WitnessKind::Chi, 8, None).unwrap().table().unwrap();
        assert!(check_assembly(8, 4, 2, &chi8).unwrap().passed());
    }

    #[test]
    fn random_tables_are_reproducible_and_centered() {
        let a = random_centered_tables(4, 3, 123).unwrap();
        let b = random_centered_tables(4, 3, 123).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values(), y.values());
            assert!(x.mean().abs() < 1e-12);
        }
        let c = random_centered_tables(4, 3, 124).unwrap();
        assert_ne!(a[0].values(), c[0].values());
    }
}
