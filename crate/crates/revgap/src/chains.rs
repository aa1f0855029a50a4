//! Chain specifications as weighted move families, and exact Dirichlet
//! forms, moments and Rayleigh quotients over the uniform measure by full
//! enumeration.
//!
//! Every chain here is a continuous-time generator reversible w.r.t. the
//! uniform measure: deterministic moves are involutions carried with their
//! rate, block averages are ν-symmetric jump kernels carried with the rate
//! at which the pair is refreshed. For a deterministic move of rate w the
//! Dirichlet form picks up `(w/2)·ν[(∇f)²]`; for an average of rate w it
//! picks up `w·ν[(Af)²]`, which matches the block-average form exactly.

use crate::error::{Error, Result};
use crate::perm::{self, factorial, Arc, Configuration, EllPartition, Move};
use serde::{Deserialize, Serialize};

/// Full-table enumeration cap: 8! dense tables by default.
pub const ENUMERATION_CAP: usize = 8;
/// Hard cap for matrix-free streaming (10! states).
pub const STREAMING_CAP: usize = 10;

/// A reversible shuffle chain on the permutations of the n-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chain", rename_all = "kebab-case")]
pub enum ChainSpec {
    /// Rate-1 process: pick a vertex x and a length `1 ≤ ℓ ≤ max_len`
    /// uniformly, reverse the segment `{x, ..., x+ℓ}`.
    LReversal { n: usize, max_len: usize },
    /// Same move set with truncated-geometric length weights
    /// `(1-θ)·θ^{ℓ-1}/n` for `ℓ = 1..=n`; total jump rate `1 - θⁿ`.
    ThetaReversal { n: usize, theta: f64 },
    /// All transpositions on `d` vertices, each ordered pair at rate
    /// `1/(2d)`, so that `Var(f) ≤ dirichlet(f)` holds with equality on the
    /// slowest mode (unit spectral gap normalization).
    RandomTransposition { d: usize },
    /// `N` blocks of length ℓ tiling the cycle (`n = N·ℓ`); each unordered
    /// pair of blocks is jointly refreshed at rate `2/N` (a rate-1 clock per
    /// block, partner chosen uniformly with replacement).
    BlockAverage { num_blocks: usize, block_len: usize },
    /// The average over the N+1 type-1 ℓ-partitions of the (nonergodic)
    /// per-partition block-average forms; pair rate `2/(N(N+1))`.
    PartitionAverage { n: usize, block_len: usize },
    /// Adjacent-pair dynamics on the single type-1 ℓ-partition with m-block
    /// position `m_pos`: each adjacent ℓ-block pair is averaged at rate 1 and
    /// exchanged at rate `speedup`. Nonergodic when `m ≥ 1` (the m-block is
    /// never touched).
    LocalAvgExchange {
        n: usize,
        block_len: usize,
        m_pos: usize,
        speedup: f64,
    },
}

/// One enumerated transition with its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMove {
    pub mv: Move,
    pub weight: f64,
}

impl ChainSpec {
    /// Number of vertices of the underlying cycle.
    pub fn n(&self) -> usize {
        match *self {
            ChainSpec::LReversal { n, .. }
            | ChainSpec::ThetaReversal { n, .. }
            | ChainSpec::PartitionAverage { n, .. }
            | ChainSpec::LocalAvgExchange { n, .. } => n,
            ChainSpec::RandomTransposition { d } => d,
            ChainSpec::BlockAverage {
                num_blocks,
                block_len,
            } => num_blocks * block_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChainSpec::LReversal { n, max_len } => {
                if n < 2 || max_len == 0 || max_len > n {
                    return Err(Error::InvalidSpec(format!(
                        "l-reversal needs n >= 2 and 1 <= L <= n (got n={n}, L={max_len})"
                    )));
                }
            }
            ChainSpec::ThetaReversal { n, theta } => {
                if n < 2 || !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "theta-reversal needs n >= 2 and theta in (0,1) (got n={n}, theta={theta})"
                    )));
                }
            }
            ChainSpec::RandomTransposition { d } => {
                if d < 2 {
                    return Err(Error::InvalidSpec("random transposition needs d >= 2".into()));
                }
            }
            ChainSpec::BlockAverage {
                num_blocks,
                block_len,
            } => {
                if num_blocks < 2 || block_len == 0 {
                    return Err(Error::InvalidSpec(format!(
                        "block average needs N >= 2 and ell >= 1 (got N={num_blocks}, ell={block_len})"
                    )));
                }
            }
            ChainSpec::PartitionAverage { n, block_len } => {
                EllPartition::new(n, block_len, 1, 1)?;
            }
            ChainSpec::LocalAvgExchange {
                n,
                block_len,
                m_pos,
                speedup,
            } => {
                let p = EllPartition::new(n, block_len, 1, m_pos.max(1))?;
                if p.m() >= 1 && (m_pos == 0 || m_pos > p.num_ell_blocks() + 1) {
                    return Err(Error::InvalidSpec(format!("m-block position {m_pos} out of range")));
                }
                if speedup < 0.0 {
                    return Err(Error::InvalidSpec("speedup must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Enumerates every move of the chain with its rate.
    pub fn moves(&self) -> Result<Vec<WeightedMove>> {
        self.validate()?;
        let mut out = Vec::new();
        match *self {
            ChainSpec::LReversal { n, max_len } => {
                let w = 1.0 / (n as f64 * max_len as f64);
                for x in 1..=n {
                    for len in 1..=max_len {
                        out.push(WeightedMove {
                            mv: Move::Reversal { x, len },
                            weight: w,
                        });
                    }
                }
            }
            ChainSpec::ThetaReversal { n, theta } => {
                for x in 1..=n {
                    for len in 1..=n {
                        let w = (1.0 - theta) * theta.powi(len as i32 - 1) / n as f64;
                        out.push(WeightedMove {
                            mv: Move::Reversal { x, len },
                            weight: w,
                        });
                    }
                }
            }
            ChainSpec::RandomTransposition { d } => {
                let w = 1.0 / (2.0 * d as f64);
                for x in 1..=d {
                    for y in 1..=d {
                        if x != y {
                            out.push(WeightedMove {
                                mv: Move::Transposition { x, y },
                                weight: w,
                            });
                        }
                    }
                }
            }
            ChainSpec::BlockAverage {
                num_blocks,
                block_len,
            } => {
                let p = EllPartition::new(num_blocks * block_len, block_len, 1, 1)?;
                let blocks = p.ell_blocks();
                let w = 2.0 / num_blocks as f64;
                for i in 0..num_blocks {
                    for j in i + 1..num_blocks {
                        out.push(WeightedMove {
                            mv: Move::BlockAverage {
                                a: blocks[i],
                                b: blocks[j],
                            },
                            weight: w,
                        });
                    }
                }
            }
            ChainSpec::PartitionAverage { n, block_len } => {
                let parts = perm::partitions_of_type(n, block_len, 1)?;
                let nparts = parts.len() as f64;
                for p in &parts {
                    let blocks = p.ell_blocks();
                    let nb = p.num_ell_blocks();
                    let w = 2.0 / (nb as f64 * nparts);
                    for i in 0..nb {
                        for j in i + 1..nb {
                            out.push(WeightedMove {
                                mv: Move::BlockAverage {
                                    a: blocks[i],
                                    b: blocks[j],
                                },
                                weight: w,
                            });
                        }
                    }
                }
            }
            ChainSpec::LocalAvgExchange {
                n,
                block_len,
                m_pos,
                speedup,
            } => {
                let p = EllPartition::new(n, block_len, 1, m_pos.max(1))?;
                let blocks = p.ell_blocks();
                for i in 0..p.num_ell_blocks() - 1 {
                    out.push(WeightedMove {
                        mv: Move::BlockAverage {
                            a: blocks[i],
                            b: blocks[i + 1],
                        },
                        weight: 1.0,
                    });
                    if speedup > 0.0 {
                        out.push(WeightedMove {
                            mv: Move::BlockExchange {
                                z: blocks[i].start,
                                len: block_len,
                            },
                            weight: speedup,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Total jump rate (sum of all move weights).
    pub fn total_rate(&self) -> Result<f64> {
        Ok(self.moves()?.iter().map(|wm| wm.weight).sum())
    }
}

/// A dense table of reals indexed by `rank(η)` over all n! configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTable {
    n: usize,
    values: Vec<f64>,
}

impl ObservableTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > STREAMING_CAP {
            return Err(Error::EnumerationCap { n, cap: STREAMING_CAP });
        }
        if values.len() != factorial(n) {
            return Err(Error::SizeMismatch {
                n,
                expected: factorial(n),
                got: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    /// Tabulates `f` over all n! configurations in rank order.
    pub fn from_fn(n: usize, f: impl Fn(&Configuration) -> f64) -> Result<Self> {
        if n == 0 || n > STREAMING_CAP {
            return Err(Error::EnumerationCap { n, cap: STREAMING_CAP });
        }
        let values = (0..factorial(n))
            .map(|r| f(&perm::unrank(r, n).expect("rank in range")))
            .collect();
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(n, vec![value; factorial(n)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// ν[f], the mean under the uniform measure.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Var(f) = ν[f²] − ν[f]².
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.len() as f64
    }

    /// Ent(f) = ν[f·log f] − ν[f]·log ν[f] for nonnegative f (0·log 0 = 0).
    pub fn entropy(&self) -> Result<f64> {
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::NegativeEntries);
        }
        let mean = self.mean();
        if mean == 0.0 {
            return Ok(0.0);
        }
        let flogf = self
            .values
            .iter()
            .map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 })
            .sum::<f64>()
            / self.len() as f64;
        Ok(flogf - mean * mean.ln())
    }

    /// Subtracts the mean in place.
    pub fn center(&mut self) {
        let mean = self.mean();
        for v in &mut self.values {
            *v -= mean;
        }
    }
}

/// Exact mean, variance and entropy of a table by full enumeration. The
/// entropy slot is an error for tables with negative entries.
pub fn uniform_stats(f: &ObservableTable) -> (f64, f64, Result<f64>) {
    (f.mean(), f.variance(), f.entropy())
}

/// ν[(A f)²] for the average gradient of the pair of arcs `(a, b)`:
/// `Af = E[f | letters outside a ∪ b] − f`. Shared by Dirichlet forms,
/// generators and the inequality checkers.
#[derive(Debug, Clone)]
pub struct PairAverager {
    n: usize,
    class_of: Vec<u32>,
    class_size: usize,
    num_classes: usize,
}

impl PairAverager {
    pub fn new(n: usize, a: Arc, b: Arc) -> Result<Self> {
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP });
        }
        let mut in_union = vec![false; n];
        for v in a.vertices(n).chain(b.vertices(n)) {
            if in_union[v - 1] {
                return Err(Error::InvalidPartition(format!(
                    "arcs overlap at vertex {v}"
                )));
            }
            in_union[v - 1] = true;
        }
        let union_len = a.len + b.len;
        let outside: Vec<usize> = (1..=n).filter(|&v| !in_union[v - 1]).collect();
        let states = factorial(n);
        let class_size = factorial(union_len);
        let num_classes = states / class_size;
        // Classes are keyed by the ordered tuple of letters outside the
        // union, ranked in the falling-factorial number system.
        let mut class_of = vec![0u32; states];
        let mut letters = vec![0usize; n];
        let mut key = vec![0usize; outside.len()];
        for (r, slot) in class_of.iter_mut().enumerate() {
            perm::unrank_into(r, &mut letters);
            for (t, &v) in key.iter_mut().zip(outside.iter()) {
                *t = letters[v - 1];
            }
            *slot = tuple_rank(&key, n) as u32;
        }
        Ok(Self {
            n,
            class_of,
            class_size,
            num_classes,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Class index of a state (states in one class share the letters
    /// outside the pair).
    pub fn class_index(&self, r: usize) -> usize {
        self.class_of[r] as usize
    }

    /// Conditional means per class, i.e. `E[f | outside]` as a class table.
    pub fn class_means_for(&self, f: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.num_classes];
        for (r, &c) in self.class_of.iter().enumerate() {
            sums[c as usize] += f[r];
        }
        let inv = 1.0 / self.class_size as f64;
        for s in &mut sums {
            *s *= inv;
        }
        sums
    }

    /// ν[(A f)²].
    pub fn mean_square_gradient(&self, f: &[f64]) -> f64 {
        let means = self.class_means_for(f);
        let mut tot = 0.0;
        for (r, &c) in self.class_of.iter().enumerate() {
            let d = means[c as usize] - f[r];
            tot += d * d;
        }
        tot / f.len() as f64
    }

    /// Adds the `-G` contribution `w·(x - E[x | outside])` of this pair to a
    /// dense matrix.
    pub fn add_dense_neg_generator(&self, mat: &mut [Vec<f64>], w: f64) {
        // member lists per class
        let mut members: Vec<Vec<u32>> = vec![Vec::with_capacity(self.class_size); self.num_classes];
        for (r, &c) in self.class_of.iter().enumerate() {
            members[c as usize].push(r as u32);
        }
        let frac = w / self.class_size as f64;
        for group in &members {
            for &r in group {
                let row = &mut mat[r as usize];
                row[r as usize] += w;
                for &s in group {
                    row[s as usize] -= frac;
                }
            }
        }
    }
}

/// Rank of an ordered tuple of distinct letters from `1..=n` in the
/// lexicographic order of all such tuples (the falling-factorial mixed
/// radix). The empty tuple has rank 0.
pub fn tuple_rank(tuple: &[usize], n: usize) -> usize {
    let m = tuple.len();
    let mut r = 0usize;
    for i in 0..m {
        let mut smaller_unused = tuple[i] - 1;
        for &prev in &tuple[..i] {
            if prev < tuple[i] {
                smaller_unused -= 1;
            }
        }
        // multiply by the number of (m - 1 - i)-tuples from the remaining letters
        let mut radix = 1usize;
        for k in 0..(m - 1 - i) {
            radix *= n - i - 1 - k;
        }
        r += smaller_unused * radix;
    }
    r
}

/// Inverse of [`tuple_rank`] for tuples of length `m`.
pub fn tuple_unrank(r: usize, n: usize, m: usize) -> Vec<usize> {
    let mut avail: Vec<usize> = (1..=n).collect();
    let mut out = Vec::with_capacity(m);
    let mut rem = r;
    for i in 0..m {
        let mut radix = 1usize;
        for k in 0..(m - 1 - i) {
            radix *= n - i - 1 - k;
        }
        let idx = rem / radix;
        rem %= radix;
        out.push(avail.remove(idx));
    }
    out
}

/// Number of ordered m-tuples of distinct letters from n, `n!/(n-m)!`.
pub fn falling_factorial(n: usize, m: usize) -> usize {
    (0..m).map(|i| n - i).product::<usize>().max(1)
}

/// ν[(R f)²] for a deterministic move: mean over all states of the squared
/// gradient.
pub fn mean_square_gradient(mv: &Move, f: &ObservableTable) -> f64 {
    debug_assert!(mv.is_deterministic());
    let n = f.n();
    let vals = f.values();
    let mut letters = vec![0usize; n];
    let mut tot = 0.0;
    for (r, &fr) in vals.iter().enumerate() {
        perm::unrank_into(r, &mut letters);
        mv.apply_in_place(&mut letters);
        let d = vals[perm::rank_letters(&letters)] - fr;
        tot += d * d;
    }
    tot / vals.len() as f64
}

/// The exact Dirichlet form `E(f, f) = ⟨f, -Gf⟩` of the chain by full
/// enumeration.
pub fn dirichlet(spec: &ChainSpec, f: &ObservableTable) -> Result<f64> {
    if spec.n() != f.n() {
        return Err(Error::SizeMismatch {
            n: spec.n(),
            expected: factorial(spec.n()),
            got: f.len(),
        });
    }
    if f.n() > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { n: f.n(), cap: ENUMERATION_CAP });
    }
    let mut total = 0.0;
    for wm in spec.moves()? {
        match wm.mv {
            Move::BlockAverage { a, b } => {
                let avg = PairAverager::new(f.n(), a, b)?;
                total += wm.weight * avg.mean_square_gradient(f.values());
            }
            ref mv => {
                total += 0.5 * wm.weight * mean_square_gradient(mv, f);
            }
        }
    }
    Ok(total)
}

/// `Var(f) / E(f, f)`: a certified lower bound on the relaxation time τ.
pub fn rayleigh_lower_bound(spec: &ChainSpec, f: &ObservableTable) -> Result<f64> {
    let var = f.variance();
    if var <= 0.0 {
        return Err(Error::DegenerateFunction);
    }
    let e = dirichlet(spec, f)?;
    Ok(var / e)
}
