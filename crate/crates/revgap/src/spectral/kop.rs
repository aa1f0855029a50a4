//! The m-block coupling operator: conditional law of one m-block's contents
//! given another's, over ordered m-tuples of n letters.

use crate::chains::{falling_factorial, tuple_unrank};
use crate::error::{Error, Result};

/// Default dense cap for the coupling operator (dimension n!/(n-m)!).
pub const K_DENSE_CAP: usize = 5040;

/// Binomial coefficient for the small arguments used here.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut num = 1.0f64;
    let mut den = 1.0f64;
    for i in 0..k {
        num *= (n - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

/// The closed-form spectrum of the coupling operator on order-independent
/// functions: `λ_k = (-1)^k C(n-m-k, m-k) / C(n-m, m)` for `k = 0..=m`.
pub fn k_eigenvalues_formula(n: usize, m: usize) -> Result<Vec<f64>> {
    if m == 0 || 2 * m > n {
        return Err(Error::InvalidParams(format!(
            "coupling operator needs 1 <= m <= n/2 (got n={n}, m={m})"
        )));
    }
    let denom = binomial(n - m, m);
    Ok((0..=m)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(n - m - k, m - k) / denom
        })
        .collect())
}

/// The coupling operator as a dense symmetric stochastic matrix over
/// ordered m-tuples, built by counting compatible completions.
#[derive(Debug, Clone)]
pub struct KOperator {
    n: usize,
    m: usize,
    dim: usize,
    /// Row-major dim x dim entries.
    entries: Vec<f64>,
}

impl KOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.dim + b]
    }

    /// `(Kφ)(α) = Σ_β K(α,β) φ(β)`.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (a, slot) in out.iter_mut().enumerate() {
            let row = &self.entries[a * self.dim..(a + 1) * self.dim];
            *slot = row.iter().zip(phi).map(|(k, p)| k * p).sum();
        }
        out
    }

    /// All eigenvalues (dense solve), ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mat = faer::Mat::from_fn(self.dim, self.dim, |i, j| self.entries[i * self.dim + j]);
        let mut evs = mat.selfadjoint_eigenvalues(faer::Side::Lower);
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        evs
    }

    /// Largest row-sum deviation from 1 and largest asymmetry, as a
    /// structural diagnostic.
    pub fn stochasticity_defect(&self) -> (f64, f64) {
        let mut row_defect: f64 = 0.0;
        let mut asym: f64 = 0.0;
        for a in 0..self.dim {
            let sum: f64 = self.entries[a * self.dim..(a + 1) * self.dim].iter().sum();
            row_defect = row_defect.max((sum - 1.0).abs());
            for b in 0..a {
                asym = asym.max((self.entry(a, b) - self.entry(b, a)).abs());
            }
        }
        (row_defect, asym)
    }
}

/// Builds the coupling operator by counting: `K(α,β)` is the number of full
/// configurations with the second m-block equal to α and the first equal to
/// β, divided by the number with the second equal to α. Nonzero exactly when
/// α and β are disjoint, where every admissible β is equally likely.
pub fn build_k_operator(n: usize, m: usize) -> Result<KOperator> {
    build_k_operator_capped(n, m, K_DENSE_CAP)
}

pub fn build_k_operator_capped(n: usize, m: usize, cap: usize) -> Result<KOperator> {
    if m == 0 || 2 * m > n {
        return Err(Error::InvalidParams(format!(
            "coupling operator needs 1 <= m <= n/2 (got n={n}, m={m})"
        )));
    }
    let dim = falling_factorial(n, m);
    if dim > cap {
        return Err(Error::DenseCap { dim, cap });
    }
    let tuples: Vec<Vec<usize>> = (0..dim).map(|r| tuple_unrank(r, n, m)).collect();
    let p = 1.0 / falling_factorial(n - m, m) as f64;
    let mut entries = vec![0.0f64; dim * dim];
    if n <= 64 {
        let masks: Vec<u64> = tuples
            .iter()
            .map(|t| t.iter().fold(0u64, |acc, &l| acc | (1 << (l - 1))))
            .collect();
        for a in 0..dim {
            for b in 0..dim {
                if masks[a] & masks[b] == 0 {
                    entries[a * dim + b] = p;
                }
            }
        }
    } else {
        for a in 0..dim {
            for b in 0..dim {
                if tuples[a].iter().all(|x| !tuples[b].contains(x)) {
                    entries[a * dim + b] = p;
                }
            }
        }
    }
    Ok(KOperator { n, m, dim, entries })
}

/// Outcome of comparing the brute-force spectrum against the closed form.
#[derive(Debug, Clone)]
pub struct SpectrumComparison {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    /// Largest distance from a computed nonzero eigenvalue to the formula
    /// set, and from each formula value to the computed spectrum.
    pub max_deviation: f64,
    /// Largest magnitude among computed eigenvalues not matching any
    /// formula value (should be numerically zero).
    pub max_residual_eigenvalue: f64,
    pub pass: bool,
}

/// Checks that the distinct eigenvalues of the brute-force operator match
/// the closed form to `tol` and that the remaining spectrum is 0 to `tol`.
pub fn compare_k_spectrum(n: usize, m: usize, tol: f64) -> Result<SpectrumComparison> {
    let op = build_k_operator(n, m)?;
    let computed = op.eigenvalues();
    let formula = k_eigenvalues_formula(n, m)?;
    let mut max_deviation: f64 = 0.0;
    // every formula value must occur
    for lam in &formula {
        let nearest = computed
            .iter()
            .map(|e| (e - lam).abs())
            .fold(f64::INFINITY, f64::min);
        max_deviation = max_deviation.max(nearest);
    }
    // every computed value is either a formula value or zero
    let mut max_residual_eigenvalue: f64 = 0.0;
    for e in &computed {
        let nearest = formula
            .iter()
            .map(|lam| (e - lam).abs())
            .fold(f64::INFINITY, f64::min);
        if nearest > tol {
            max_residual_eigenvalue = max_residual_eigenvalue.max(e.abs());
        }
    }
    let pass = max_deviation <= tol && max_residual_eigenvalue <= tol;
    Ok(SpectrumComparison {
        n,
        m,
        dim: op.dim(),
        max_deviation,
        max_residual_eigenvalue,
        pass,
    })
}

/// Result of checking the action of K on a product of letter indicators.
#[derive(Debug, Clone)]
pub struct IndicatorActionReport {
    pub n: usize,
    pub m: usize,
    pub letters: Vec<usize>,
    pub eigenvalue_magnitude: f64,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Verifies pointwise that `K[χ_{j1}···χ_{jk}] = |λ_k|·(1-χ_{j1})···(1-χ_{jk})`
/// on all ordered m-tuples, for the given distinct letters.
pub fn verify_k_indicator_action(
    n: usize,
    m: usize,
    letters: &[usize],
    tol: f64,
) -> Result<IndicatorActionReport> {
    let k = letters.len();
    if k == 0 || k > m {
        return Err(Error::InvalidParams(format!(
            "need 1 <= k <= m distinct letters (got k={k}, m={m})"
        )));
    }
    let mut sorted = letters.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k || sorted.iter().any(|&l| l == 0 || l > n) {
        return Err(Error::InvalidParams("letters must be distinct and in 1..=n".into()));
    }
    let op = build_k_operator(n, m)?;
    let dim = op.dim();
    let tuples: Vec<Vec<usize>> = (0..dim).map(|r| tuple_unrank(r, n, m)).collect();
    let phi: Vec<f64> = tuples
        .iter()
        .map(|t| {
            if letters.iter().all(|l| t.contains(l)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let lhs = op.apply(&phi);
    let lam_k = k_eigenvalues_formula(n, m)?[k].abs();
    let mut max_deviation: f64 = 0.0;
    for (t, &l) in tuples.iter().zip(&lhs) {
        let rhs = if letters.iter().any(|j| t.contains(j)) {
            0.0
        } else {
            lam_k
        };
        max_deviation = max_deviation.max((l - rhs).abs());
    }
    Ok(IndicatorActionReport {
        n,
        m,
        letters: sorted,
        eigenvalue_magnitude: lam_k,
        max_deviation,
        pass: max_deviation <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn formula_values_for_known_cases() {
        let evs = k_eigenvalues_formula(6, 2).unwrap();
        assert_relative_eq!(evs[0], 1.0);
        assert_relative_eq!(evs[1], -0.5);
        assert_relative_eq!(evs[2], 1.0 / 6.0);
        // m = n/2: the operator on unordered functions is an involution
        assert_eq!(k_eigenvalues_formula(4, 2).unwrap(), vec![1.0, -1.0, 1.0]);
        // lambda_0 = 1 always
        for (n, m) in [(5, 2), (8, 3), (9, 4), (12, 1)] {
            assert_relative_eq!(k_eigenvalues_formula(n, m).unwrap()[0], 1.0);
        }
        assert!(k_eigenvalues_formula(5, 3).is_err());
    }

    #[test]
    fn three_one_matrix_by_hand() {
        let op = build_k_operator(3, 1).unwrap();
        assert_eq!(op.dim(), 3);
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 0.0 } else { 0.5 };
                assert_relative_eq!(op.entry(a, b), expected);
            }
        }
        let evs = op.eigenvalues();
        assert_relative_eq!(evs[0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(evs[1], -0.5, epsilon = 1e-12);
        assert_relative_eq!(evs[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn six_two_dimension_and_spectrum() {
        let op = build_k_operator(6, 2).unwrap();
        assert_eq!(op.dim(), 30);
        let (row_defect, asym) = op.stochasticity_defect();
        assert!(row_defect < 1e-12 && asym == 0.0);
        let cmp = compare_k_spectrum(6, 2, 1e-10).unwrap();
        assert!(cmp.pass, "{cmp:?}");
    }

    #[test]
    fn indicator_action_examples() {
        let rep = verify_k_indicator_action(6, 2, &[1, 2], 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = verify_k_indicator_action(6, 2, &[5], 1e-12).unwrap();
        assert!(rep.pass);
        assert_relative_eq!(rep.eigenvalue_magnitude, 0.5);
        assert!(verify_k_indicator_action(6, 2, &[1, 1], 1e-12).is_err());
        assert!(verify_k_indicator_action(6, 2, &[1, 2, 3], 1e-12).is_err());
    }

    #[test]
    fn dense_cap_is_enforced() {
        assert!(matches!(
            build_k_operator_capped(10, 4, 1000),
            Err(Error::DenseCap { dim: 5040, .. })
        ));
    }
}
