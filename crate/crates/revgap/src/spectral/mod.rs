//! Exact spectral computations: the m-block coupling operator and its
//! closed-form spectrum, the block conditional-expectation operator, and
//! full-generator spectral gaps (dense for n <= 6, matrix-free Lanczos with
//! constant-vector deflation above).

mod kop;
pub mod lanczos;

pub use kop::{
    build_k_operator, build_k_operator_capped, compare_k_spectrum, k_eigenvalues_formula,
    verify_k_indicator_action, IndicatorActionReport, KOperator, SpectrumComparison, K_DENSE_CAP,
};
pub use lanczos::{smallest_in_meanzero, LanczosOptions, LanczosOutcome, LinearOperator};

use crate::chains::{falling_factorial, tuple_rank, ChainSpec, PairAverager, STREAMING_CAP};
use crate::error::{Error, Result};
use crate::perm::{self, factorial, Arc, Move};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Largest n whose generator is materialized as a dense matrix.
pub const DENSE_CAP: usize = 6;
/// Eigenvalues below this are treated as kernel directions.
pub const KERNEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMethod {
    ExactDense,
    Lanczos,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    #[default]
    Auto,
    Dense,
    Lanczos,
}

/// A spectral-gap / relaxation-time result with provenance metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub schema: u32,
    pub chain: String,
    pub n: usize,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub num_blocks: Option<usize>,
    #[serde(rename = "ell", skip_serializing_if = "Option::is_none")]
    pub block_len: Option<usize>,
    pub method: GapMethod,
    pub gap: f64,
    pub tau: f64,
    pub residual_or_stderr: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub seconds: f64,
    /// Set on Monte Carlo estimates: the decay of a single observable only
    /// upper-bounds tau through 1/rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<String>,
}

impl GapReport {
    pub(crate) fn for_spec(spec: &ChainSpec, method: GapMethod, gap: f64) -> Self {
        let (chain, max_len, theta, num_blocks, block_len) = match *spec {
            ChainSpec::LReversal { n: _, max_len } => {
                ("l-reversal".to_string(), Some(max_len), None, None, None)
            }
            ChainSpec::ThetaReversal { n: _, theta } => {
                ("theta-reversal".to_string(), None, Some(theta), None, None)
            }
            ChainSpec::RandomTransposition { .. } => {
                ("random-transposition".to_string(), None, None, None, None)
            }
            ChainSpec::BlockAverage {
                num_blocks,
                block_len,
            } => (
                "block-average".to_string(),
                None,
                None,
                Some(num_blocks),
                Some(block_len),
            ),
            ChainSpec::PartitionAverage { n: _, block_len } => (
                "partition-average".to_string(),
                None,
                None,
                None,
                Some(block_len),
            ),
            ChainSpec::LocalAvgExchange { block_len, .. } => (
                "local-avg-exchange".to_string(),
                None,
                None,
                None,
                Some(block_len),
            ),
        };
        GapReport {
            schema: 1,
            chain,
            n: spec.n(),
            max_len,
            theta,
            num_blocks,
            block_len,
            method,
            gap,
            tau: 1.0 / gap,
            residual_or_stderr: 0.0,
            iterations: 0,
            seed: None,
            seconds: 0.0,
            observable: None,
        }
    }
}

/// `-G` for a chain, applied matrix-free over the full state space: per
/// state, deterministic moves are re-derived through rank/unrank, averages
/// through per-pair conditional class means.
pub struct GeneratorOperator {
    n: usize,
    dim: usize,
    det_moves: Vec<(Move, f64)>,
    averagers: Vec<(PairAverager, f64)>,
}

impl GeneratorOperator {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let n = spec.n();
        if n > STREAMING_CAP {
            return Err(Error::EnumerationCap { n, cap: STREAMING_CAP });
        }
        let mut det_moves = Vec::new();
        let mut averagers = Vec::new();
        for wm in spec.moves()? {
            match wm.mv {
                Move::BlockAverage { a, b } => {
                    averagers.push((PairAverager::new(n, a, b)?, wm.weight));
                }
                mv => det_moves.push((mv, wm.weight)),
            }
        }
        Ok(Self {
            n,
            dim: factorial(n),
            det_moves,
            averagers,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl LinearOperator for GeneratorOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    /// `y = -G x`, parallel over disjoint state-index ranges.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let mean_tables: Vec<Vec<f64>> = self
            .averagers
            .iter()
            .map(|(pa, _)| pa.class_means_for(x))
            .collect();
        let chunk = 4096usize;
        y.par_chunks_mut(chunk).enumerate().for_each(|(ci, out)| {
            let mut letters = vec![0usize; n];
            let base = ci * chunk;
            for (j, slot) in out.iter_mut().enumerate() {
                let r = base + j;
                let xr = x[r];
                let mut acc = 0.0;
                if !self.det_moves.is_empty() {
                    perm::unrank_into(r, &mut letters);
                    for (mv, w) in &self.det_moves {
                        mv.apply_in_place(&mut letters);
                        acc += w * (xr - x[perm::rank_letters(&letters)]);
                        mv.apply_in_place(&mut letters); // involution: undo
                    }
                }
                for ((pa, w), means) in self.averagers.iter().zip(&mean_tables) {
                    acc += w * (xr - means[pa.class_index(r)]);
                }
                *slot = acc;
            }
        });
    }
}

/// Dense `-G` as a row-major matrix (n <= DENSE_CAP).
pub fn dense_neg_generator(spec: &ChainSpec) -> Result<Vec<Vec<f64>>> {
    let n = spec.n();
    if n > DENSE_CAP {
        return Err(Error::EnumerationCap { n, cap: DENSE_CAP });
    }
    let dim = factorial(n);
    let mut mat = vec![vec![0.0f64; dim]; dim];
    let mut letters = vec![0usize; n];
    for wm in spec.moves()? {
        match wm.mv {
            Move::BlockAverage { a, b } => {
                let pa = PairAverager::new(n, a, b)?;
                pa.add_dense_neg_generator(&mut mat, wm.weight);
            }
            mv => {
                for (r, row) in mat.iter_mut().enumerate() {
                    perm::unrank_into(r, &mut letters);
                    mv.apply_in_place(&mut letters);
                    let s = perm::rank_letters(&letters);
                    row[s] -= wm.weight;
                    row[r] += wm.weight;
                }
            }
        }
    }
    Ok(mat)
}

/// Sorted eigenvalues of a dense symmetric matrix.
pub fn dense_symmetric_eigenvalues(mat: &[Vec<f64>]) -> Vec<f64> {
    let dim = mat.len();
    let m = faer::Mat::from_fn(dim, dim, |i, j| mat[i][j]);
    let mut evs = m.selfadjoint_eigenvalues(faer::Side::Lower);
    evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    evs
}

fn dense_gap_with_residual(mat: &[Vec<f64>]) -> Result<(f64, f64)> {
    let dim = mat.len();
    let m = faer::Mat::from_fn(dim, dim, |i, j| mat[i][j]);
    let evd = m.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = evd.s().column_vector().to_owned();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s.read(a).partial_cmp(&s.read(b)).unwrap());
    let zero = s.read(order[0]);
    if zero.abs() > KERNEL_TOLERANCE {
        return Err(Error::InvalidSpec(format!(
            "generator kernel missing: smallest eigenvalue {zero:.3e}"
        )));
    }
    let gap_idx = order[1];
    let gap = s.read(gap_idx);
    if gap < KERNEL_TOLERANCE {
        return Err(Error::ReducibleChain);
    }
    // residual of the returned eigenpair
    let u = evd.u();
    let mut residual: f64 = 0.0;
    for i in 0..dim {
        let mut av = 0.0;
        for j in 0..dim {
            av += mat[i][j] * u.read(j, gap_idx);
        }
        residual = residual.max((av - gap * u.read(i, gap_idx)).abs());
    }
    Ok((gap, residual))
}

/// The spectral gap (lowest nonzero eigenvalue of `-G`) of a chain.
///
/// Dense eigensolve for `n <= 6`, matrix-free Lanczos with constant-vector
/// deflation for `7 <= n <= 10`. Nonergodic chains are reported as
/// [`Error::ReducibleChain`].
pub fn generator_gap(spec: &ChainSpec, method: MethodChoice, tolerance: f64) -> Result<GapReport> {
    spec.validate()?;
    let n = spec.n();
    let start = Instant::now();
    let use_dense = match method {
        MethodChoice::Auto => n <= DENSE_CAP,
        MethodChoice::Dense => {
            if n > DENSE_CAP {
                return Err(Error::EnumerationCap { n, cap: DENSE_CAP });
            }
            true
        }
        MethodChoice::Lanczos => false,
    };
    let mut report;
    if use_dense {
        let mat = dense_neg_generator(spec)?;
        let (gap, residual) = dense_gap_with_residual(&mat)?;
        report = GapReport::for_spec(spec, GapMethod::ExactDense, gap);
        report.residual_or_stderr = residual;
        report.iterations = 1;
        if residual > tolerance.max(1e-10) {
            return Err(Error::ConvergenceFailure {
                iterations: 1,
                residual,
            });
        }
    } else {
        let op = GeneratorOperator::new(spec)?;
        let opts = LanczosOptions {
            tolerance,
            ..LanczosOptions::default()
        };
        let out = smallest_in_meanzero(&op, &opts)?;
        if out.eigenvalue < KERNEL_TOLERANCE {
            return Err(Error::ReducibleChain);
        }
        report = GapReport::for_spec(spec, GapMethod::Lanczos, out.eigenvalue);
        report.residual_or_stderr = out.residual;
        report.iterations = out.iterations;
        report.seed = Some(opts.seed);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Gap of the block-average dynamics with N blocks of length ℓ. Equal to 1
/// for every valid (N, ℓ); the returned report carries the computed value.
pub fn block_average_gap(num_blocks: usize, block_len: usize, tolerance: f64) -> Result<GapReport> {
    let spec = ChainSpec::BlockAverage {
        num_blocks,
        block_len,
    };
    generator_gap(&spec, MethodChoice::Auto, tolerance)
}

/// The block conditional-expectation operator `P = (1/N) Σ_k P_k` over N
/// disjoint m-blocks, exposed as `1 - P` for eigenvalue work.
pub struct BlockProjectionOperator {
    dim: usize,
    /// Per block: state -> class index (class = ordered content of the block).
    class_of: Vec<Vec<u32>>,
    class_size: usize,
    num_classes: usize,
    inv_blocks: f64,
}

impl BlockProjectionOperator {
    pub fn new(n: usize, m: usize, blocks: &[Arc]) -> Result<Self> {
        if n > 7 {
            return Err(Error::EnumerationCap { n, cap: 7 });
        }
        if blocks.len() < 2 {
            return Err(Error::InvalidParams("need at least N = 2 blocks".into()));
        }
        if blocks.len() * m > n {
            return Err(Error::InvalidParams(format!(
                "N*m = {} exceeds n = {n}",
                blocks.len() * m
            )));
        }
        let mut seen = vec![false; n];
        for b in blocks {
            if b.len != m {
                return Err(Error::InvalidParams(format!(
                    "block at {} has length {}, expected {m}",
                    b.start, b.len
                )));
            }
            for v in b.vertices(n) {
                if seen[v - 1] {
                    return Err(Error::InvalidParams(format!("blocks overlap at vertex {v}")));
                }
                seen[v - 1] = true;
            }
        }
        let dim = factorial(n);
        let mut class_of = Vec::with_capacity(blocks.len());
        let mut letters = vec![0usize; n];
        for b in blocks {
            let verts: Vec<usize> = b.vertices(n).collect();
            let mut key = vec![0usize; m];
            let mut table = vec![0u32; dim];
            for (r, slot) in table.iter_mut().enumerate() {
                perm::unrank_into(r, &mut letters);
                for (t, &v) in key.iter_mut().zip(&verts) {
                    *t = letters[v - 1];
                }
                *slot = tuple_rank(&key, n) as u32;
            }
            class_of.push(table);
        }
        Ok(Self {
            dim,
            class_of,
            class_size: factorial(n - m),
            num_classes: falling_factorial(n, m),
            inv_blocks: 1.0 / blocks.len() as f64,
        })
    }
}

impl LinearOperator for BlockProjectionOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    /// `y = (1 - P) x`.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (slot, &xv) in y.iter_mut().zip(x) {
            *slot = xv;
        }
        let inv_size = 1.0 / self.class_size as f64;
        for table in &self.class_of {
            let mut sums = vec![0.0f64; self.num_classes];
            for (r, &c) in table.iter().enumerate() {
                sums[c as usize] += x[r];
            }
            for (r, &c) in table.iter().enumerate() {
                y[r] -= self.inv_blocks * sums[c as usize] * inv_size;
            }
        }
    }
}

/// Lowest nonzero eigenvalue μ of `1 - P` for N disjoint m-blocks, together
/// with the bound `(N-2)/(N-1)`.
///
/// Dense for n <= 6 (numerically-zero eigenvalues are skipped, which matters
/// for N = 2 tilings where set-symmetric functions are also invariant);
/// matrix-free Lanczos at n = 7, where no such degeneracy exists.
pub fn p_operator_gap(n: usize, m: usize, blocks: &[Arc], tolerance: f64) -> Result<(f64, f64)> {
    let op = BlockProjectionOperator::new(n, m, blocks)?;
    let nblocks = blocks.len();
    let bound = (nblocks as f64 - 2.0) / (nblocks as f64 - 1.0);
    let mu = if n <= DENSE_CAP {
        let dim = op.dim();
        let mut mat = vec![vec![0.0f64; dim]; dim];
        let mut x = vec![0.0f64; dim];
        let mut y = vec![0.0f64; dim];
        for c in 0..dim {
            x[c] = 1.0;
            op.apply(&x, &mut y);
            for (r, row) in mat.iter_mut().enumerate() {
                row[c] = y[r];
            }
            x[c] = 0.0;
        }
        let evs = dense_symmetric_eigenvalues(&mat);
        *evs
            .iter()
            .find(|&&e| e > KERNEL_TOLERANCE)
            .ok_or(Error::ReducibleChain)?
    } else {
        let out = smallest_in_meanzero(
            &op,
            &LanczosOptions {
                tolerance,
                ..LanczosOptions::default()
            },
        )?;
        out.eigenvalue
    };
    Ok((mu, bound))
}

/// Contiguous m-blocks `{(k-1)m+1, ..., km}` for `k = 1..=N`.
pub fn contiguous_blocks(m: usize, num_blocks: usize) -> Vec<Arc> {
    (0..num_blocks)
        .map(|k| Arc {
            start: k * m + 1,
            len: m,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{dirichlet, ObservableTable};
    use approx::assert_relative_eq;

    #[test]
    fn two_state_reversal_gap_is_two() {
        let spec = ChainSpec::LReversal { n: 2, max_len: 1 };
        let rep = generator_gap(&spec, MethodChoice::Auto, 1e-10).unwrap();
        assert_relative_eq!(rep.gap, 2.0, epsilon = 1e-10);
        assert_relative_eq!(rep.tau, 0.5, epsilon = 1e-10);
        assert!(matches!(rep.method, GapMethod::ExactDense));
        assert_relative_eq!(rep.tau * rep.gap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn known_small_gaps_dense() {
        // frozen against an independent dense enumeration
        let cases = [
            (ChainSpec::LReversal { n: 4, max_len: 1 }, 0.5),
            (ChainSpec::LReversal { n: 5, max_len: 2 }, 0.5),
            (ChainSpec::LReversal { n: 6, max_len: 2 }, 1.0 / 3.0),
            (ChainSpec::ThetaReversal { n: 4, theta: 0.5 }, 0.6875),
        ];
        for (spec, expected) in cases {
            let rep = generator_gap(&spec, MethodChoice::Auto, 1e-10).unwrap();
            assert_relative_eq!(rep.gap, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let spec = ChainSpec::LReversal { n: 6, max_len: 2 };
        let dense = generator_gap(&spec, MethodChoice::Dense, 1e-10).unwrap();
        let lanczos = generator_gap(&spec, MethodChoice::Lanczos, 1e-10).unwrap();
        assert!(matches!(lanczos.method, GapMethod::Lanczos));
        assert!(
            (dense.gap - lanczos.gap).abs() < 1e-8,
            "dense {} vs lanczos {}",
            dense.gap,
            lanczos.gap
        );
    }

    #[test]
    fn block_average_gap_is_one() {
        for &(nb, ell) in &[(2usize, 1usize), (3, 1), (2, 2), (4, 1), (3, 2), (2, 3)] {
            let rep = block_average_gap(nb, ell, 1e-10).unwrap();
            assert!(
                (rep.gap - 1.0).abs() < 1e-8,
                "gap({nb},{ell}) = {}",
                rep.gap
            );
        }
    }

    #[test]
    fn nonergodic_chain_is_reported_reducible() {
        // an m-block that is never updated makes the chain reducible
        let spec = ChainSpec::LocalAvgExchange {
            n: 5,
            block_len: 2,
            m_pos: 1,
            speedup: 1.0,
        };
        assert!(matches!(
            generator_gap(&spec, MethodChoice::Auto, 1e-8),
            Err(Error::ReducibleChain)
        ));
    }

    #[test]
    fn partition_average_is_ergodic_and_gapped() {
        // Averaging over the N+1 partitions restores ergodicity. The exact
        // gap at (5, 2) is 7/12: the extremal variance-to-form ratio is
        // 12/7, strictly above the 3/2 that holds from N = 3 on.
        let spec = ChainSpec::PartitionAverage { n: 5, block_len: 2 };
        let rep = generator_gap(&spec, MethodChoice::Auto, 1e-10).unwrap();
        assert_relative_eq!(rep.gap, 7.0 / 12.0, epsilon = 1e-9);
    }

    #[test]
    fn generator_operator_matches_dirichlet_quadratic_form() {
        // <f, -G f> computed by the operator equals dirichlet(spec, f)
        let mut rng = crate::testutil::rng(5);
        for spec in [
            ChainSpec::LReversal { n: 5, max_len: 3 },
            ChainSpec::ThetaReversal { n: 5, theta: 0.6 },
            ChainSpec::RandomTransposition { d: 5 },
            ChainSpec::PartitionAverage { n: 5, block_len: 2 },
        ] {
            let f = crate::testutil::random_table(5, &mut rng);
            let op = GeneratorOperator::new(&spec).unwrap();
            let mut y = vec![0.0; f.len()];
            op.apply(f.values(), &mut y);
            let quad =
                f.values().iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64;
            let e = dirichlet(&spec, &f).unwrap();
            assert_relative_eq!(quad, e, max_relative = 1e-11);
        }
    }

    #[test]
    fn reversibility_dense_generator_is_symmetric() {
        for spec in [
            ChainSpec::LReversal { n: 5, max_len: 2 },
            ChainSpec::ThetaReversal { n: 4, theta: 0.3 },
            ChainSpec::BlockAverage { num_blocks: 2, block_len: 2 },
            ChainSpec::PartitionAverage { n: 5, block_len: 2 },
            ChainSpec::RandomTransposition { d: 4 },
        ] {
            let mat = dense_neg_generator(&spec).unwrap();
            let dim = mat.len();
            let mut asym: f64 = 0.0;
            let mut rowsum: f64 = 0.0;
            for i in 0..dim {
                rowsum = rowsum.max(mat[i].iter().sum::<f64>().abs());
                for j in 0..i {
                    asym = asym.max((mat[i][j] - mat[j][i]).abs());
                }
            }
            assert!(asym < 1e-12, "asymmetry {asym} for {spec:?}");
            assert!(rowsum < 1e-12, "row sum defect {rowsum} for {spec:?}");
        }
    }

    #[test]
    fn p_operator_small_cases() {
        // n=3, m=1, N=3: mu = 1/2 exactly, meeting the bound
        let (mu, bound) = p_operator_gap(3, 1, &contiguous_blocks(1, 3), 1e-10).unwrap();
        assert_relative_eq!(mu, 0.5, epsilon = 1e-9);
        assert_relative_eq!(bound, 0.5);
        // N=2 tiling: extra invariant functions are skipped, mu stays above 0
        let (mu, bound) = p_operator_gap(4, 2, &contiguous_blocks(2, 2), 1e-10).unwrap();
        assert_relative_eq!(bound, 0.0);
        assert!(mu > bound - 1e-10 && mu > 0.1, "mu = {mu}");
        // overlap is rejected
        let overlapping = vec![Arc { start: 1, len: 2 }, Arc { start: 2, len: 2 }];
        assert!(p_operator_gap(4, 2, &overlapping, 1e-10).is_err());
    }

    #[test]
    fn rotation_invariance_of_dirichlet() {
        // relabeling all vertices by a rotation leaves the quadratic form
        // and hence the gap unchanged
        let spec = ChainSpec::LReversal { n: 5, max_len: 2 };
        let mut rng = crate::testutil::rng(17);
        let f = crate::testutil::random_table(5, &mut rng);
        let rotated = ObservableTable::from_fn(5, |c| {
            let mut letters = c.letters().to_vec();
            letters.rotate_left(1);
            f.values()[perm::rank_letters(&letters)]
        })
        .unwrap();
        let e1 = dirichlet(&spec, &f).unwrap();
        let e2 = dirichlet(&spec, &rotated).unwrap();
        assert_relative_eq!(e1, e2, max_relative = 1e-11);
    }

    #[test]
    fn gap_report_serializes_with_spec_fields() {
        let spec = ChainSpec::LReversal { n: 4, max_len: 2 };
        let rep = generator_gap(&spec, MethodChoice::Auto, 1e-10).unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["chain"], "l-reversal");
        assert_eq!(json["n"], 4);
        assert_eq!(json["L"], 2);
        assert_eq!(json["schema"], 1);
        assert!(json.get("theta").is_none());
        assert_eq!(json["method"], "exact-dense");
    }
}
