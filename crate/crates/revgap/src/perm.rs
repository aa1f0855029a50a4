//! Configurations on the cycle, atomic moves, block partitions and
//! permutation ranking.
//!
//! A configuration places the letters `1..=n` on the vertices `1..=n` of the
//! n-cycle. Vertices are 1-based and all vertex arithmetic is cyclic, so
//! `x + y` always reduces into `1..=n`. Everything in this module is an
//! immutable value; the operations are pure functions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Factorials up to 20! (the largest that fits in a `u64`/`usize`).
pub const FACTORIALS: [usize; 21] = {
    let mut f = [1usize; 21];
    let mut i = 1;
    while i <= 20 {
        f[i] = f[i - 1] * i;
        i += 1;
    }
    f
};

/// `n!` for `n <= 20`.
#[inline]
pub fn factorial(n: usize) -> usize {
    FACTORIALS[n]
}

/// Reduce a 0-based offset to a 1-based cyclic vertex.
#[inline]
pub(crate) fn vertex_at(x: usize, offset: usize, n: usize) -> usize {
    (x - 1 + offset) % n + 1
}

/// A permutation of the letters `1..=n` over the vertices `1..=n`.
///
/// `letters()[x - 1]` is the letter at vertex `x`. Serializes as a plain JSON
/// array of 1-based letters in vertex order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    letters: Vec<usize>,
}

impl Configuration {
    /// Builds a configuration, checking that `letters` is a bijection of
    /// `1..=n` onto itself.
    pub fn new(letters: Vec<usize>) -> Result<Self> {
        let n = letters.len();
        if n == 0 {
            return Err(Error::InvalidConfiguration("empty letter list".into()));
        }
        let mut seen = vec![false; n];
        for &l in &letters {
            if l == 0 || l > n {
                return Err(Error::InvalidConfiguration(format!(
                    "letter {l} outside 1..={n}"
                )));
            }
            if seen[l - 1] {
                return Err(Error::InvalidConfiguration(format!("letter {l} repeated")));
            }
            seen[l - 1] = true;
        }
        Ok(Self { letters })
    }

    /// The identity configuration: letter `x` at vertex `x`.
    pub fn identity(n: usize) -> Self {
        Self {
            letters: (1..=n).collect(),
        }
    }

    /// A uniform random configuration (unbiased Fisher-Yates shuffle).
    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut letters: Vec<usize> = (1..=n).collect();
        letters.shuffle(rng);
        Self { letters }
    }

    pub fn n(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    /// Letter at vertex `x` (1-based, cyclic is the caller's concern).
    pub fn letter_at(&self, x: usize) -> Result<usize> {
        let n = self.n();
        if x == 0 || x > n {
            return Err(Error::InvalidVertex { x, n });
        }
        Ok(self.letters[x - 1])
    }

    /// Vertex currently holding `letter`.
    pub fn position_of(&self, letter: usize) -> Result<usize> {
        self.letters
            .iter()
            .position(|&l| l == letter)
            .map(|i| i + 1)
            .ok_or(Error::InvalidConfiguration(format!(
                "letter {letter} not present"
            )))
    }

    pub(crate) fn into_letters(self) -> Vec<usize> {
        self.letters
    }

    pub(crate) fn from_letters_unchecked(letters: Vec<usize>) -> Self {
        Self { letters }
    }
}

/// A contiguous cyclic arc of vertices: `start, start+1, ..., start+len-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub start: usize,
    pub len: usize,
}

impl Arc {
    /// The 1-based vertices of the arc, in cyclic order.
    pub fn vertices(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |i| vertex_at(self.start, i, n))
    }

    pub fn contains(&self, x: usize, n: usize) -> bool {
        let d = (x + n - self.start) % n;
        d < self.len
    }
}

/// One atomic transition of a shuffle chain.
///
/// `Reversal`, `Transposition` and `BlockExchange` are deterministic
/// involutions; `BlockAverage` is a stochastic move that resamples the
/// letters on the union of its two arcs uniformly. A `Reversal` with
/// `len == 0` is the identity move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Move {
    /// Reverse the letters on the segment `{x, x+1, ..., x+len}` (at most n
    /// vertices; `len = n` reverses the whole cycle starting at `x`).
    Reversal { x: usize, len: usize },
    /// Swap the letters at vertices `x` and `y`.
    Transposition { x: usize, y: usize },
    /// Interchange the contents of the adjacent equal-length blocks starting
    /// at `z` and `z + len`.
    BlockExchange { z: usize, len: usize },
    /// Uniformly reshuffle the letters on `a` together with those on `b`.
    BlockAverage { a: Arc, b: Arc },
}

impl Move {
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Move::BlockAverage { .. })
    }

    /// Applies a deterministic move in place. Panics on `BlockAverage`
    /// (stochastic moves are applied by the simulator, which owns an RNG).
    pub(crate) fn apply_in_place(&self, letters: &mut [usize]) {
        match *self {
            Move::Reversal { x, len } => reverse_segment(letters, x, len),
            Move::Transposition { x, y } => letters.swap(x - 1, y - 1),
            Move::BlockExchange { z, len } => exchange_adjacent(letters, z, len),
            Move::BlockAverage { .. } => panic!("BlockAverage is not deterministic"),
        }
    }
}

/// Reverses the cyclic segment `{x, ..., x+len}`, truncated to at most n
/// vertices.
pub(crate) fn reverse_segment(letters: &mut [usize], x: usize, len: usize) {
    let n = letters.len();
    let count = (len + 1).min(n);
    let mut i = 0;
    let mut j = count - 1;
    while i < j {
        let a = (x - 1 + i) % n;
        let b = (x - 1 + j) % n;
        letters.swap(a, b);
        i += 1;
        j -= 1;
    }
}

/// Interchanges the adjacent blocks `{z..z+len-1}` and `{z+len..z+2len-1}`.
pub(crate) fn exchange_adjacent(letters: &mut [usize], z: usize, len: usize) {
    let n = letters.len();
    for i in 0..len {
        let a = (z - 1 + i) % n;
        let b = (z - 1 + len + i) % n;
        letters.swap(a, b);
    }
}

fn check_vertex(x: usize, n: usize) -> Result<()> {
    if x == 0 || x > n {
        return Err(Error::InvalidVertex { x, n });
    }
    Ok(())
}

/// Returns `η^{x,ℓ}`: the letters on the cyclic segment `{x, ..., x+ℓ}`
/// (truncated to at most n vertices) in reversed order, all else unchanged.
pub fn apply_reversal(eta: &Configuration, x: usize, len: usize) -> Result<Configuration> {
    check_vertex(x, eta.n())?;
    let mut letters = eta.letters().to_vec();
    reverse_segment(&mut letters, x, len);
    Ok(Configuration::from_letters_unchecked(letters))
}

/// Returns `η^{x,y}`: letters at `x` and `y` swapped; `η^{x,x} = η`.
pub fn apply_transposition(eta: &Configuration, x: usize, y: usize) -> Result<Configuration> {
    check_vertex(x, eta.n())?;
    check_vertex(y, eta.n())?;
    let mut letters = eta.letters().to_vec();
    letters.swap(x - 1, y - 1);
    Ok(Configuration::from_letters_unchecked(letters))
}

/// An ℓ-partition of the n-cycle: N blocks of length ℓ plus, when
/// `m = n - N·ℓ ≥ 1`, one block of length m. The partition is anchored at
/// vertex `y` (type-y: `y` is the left endpoint of the first block) and the
/// m-block sits at position `k` among the blocks counted from the anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EllPartition {
    n: usize,
    ell: usize,
    m: usize,
    num_ell_blocks: usize,
    anchor: usize,
    m_position: usize,
    blocks: Vec<Arc>,
}

impl EllPartition {
    /// Builds the type-`y` ℓ-partition of the n-cycle whose m-block is the
    /// `k`-th block counting from the anchor. `k` is ignored when `m = 0`.
    pub fn new(n: usize, ell: usize, y: usize, k: usize) -> Result<Self> {
        if ell == 0 || ell > n {
            return Err(Error::InvalidPartition(format!(
                "block length {ell} outside 1..={n}"
            )));
        }
        check_vertex(y, n)?;
        let num_ell_blocks = n / ell;
        if num_ell_blocks < 2 {
            return Err(Error::PartitionTooCoarse { n, ell });
        }
        let m = n - num_ell_blocks * ell;
        let total = num_ell_blocks + usize::from(m >= 1);
        if m >= 1 && (k == 0 || k > total) {
            return Err(Error::InvalidPartition(format!(
                "m-block position {k} outside 1..={total}"
            )));
        }
        let mut blocks = Vec::with_capacity(total);
        let mut start = y;
        for pos in 1..=total {
            let len = if m >= 1 && pos == k { m } else { ell };
            blocks.push(Arc { start, len });
            start = vertex_at(start, len, n);
        }
        Ok(Self {
            n,
            ell,
            m,
            num_ell_blocks,
            anchor: y,
            m_position: if m >= 1 { k } else { 0 },
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Remainder length `m = n - N·ℓ`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// N, the number of ℓ-blocks.
    pub fn num_ell_blocks(&self) -> usize {
        self.num_ell_blocks
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// All blocks in cyclic order starting at the anchor.
    pub fn blocks(&self) -> &[Arc] {
        &self.blocks
    }

    pub fn m_block(&self) -> Option<Arc> {
        if self.m == 0 {
            None
        } else {
            Some(self.blocks[self.m_position - 1])
        }
    }

    /// The ℓ-blocks renumbered so that block 1 comes right after the m-block
    /// (cyclically) and block N right before it. With `m = 0` this is simply
    /// the cyclic order from the anchor. Consecutive entries are adjacent on
    /// the cycle, which is what block exchanges require.
    pub fn ell_blocks(&self) -> Vec<Arc> {
        match self.m {
            0 => self.blocks.clone(),
            _ => {
                let k = self.m_position;
                let mut out = Vec::with_capacity(self.num_ell_blocks);
                out.extend_from_slice(&self.blocks[k..]);
                out.extend_from_slice(&self.blocks[..k - 1]);
                out
            }
        }
    }

    /// The `i`-th ℓ-block (1-based) in the renumbered order.
    pub fn ell_block(&self, i: usize) -> Result<Arc> {
        let blocks = self.ell_blocks();
        blocks
            .get(i.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidExchange(format!(
                "block index {i} outside 1..={}",
                blocks.len()
            )))
    }
}

/// The N+1 type-`y` ℓ-partitions (one per m-block position), or the single
/// partition when ℓ divides n.
pub fn partitions_of_type(n: usize, ell: usize, y: usize) -> Result<Vec<EllPartition>> {
    let first = EllPartition::new(n, ell, y, 1)?;
    if first.m() == 0 {
        return Ok(vec![first]);
    }
    let total = first.num_ell_blocks() + 1;
    let mut out = vec![first];
    for k in 2..=total {
        out.push(EllPartition::new(n, ell, y, k)?);
    }
    Ok(out)
}

/// Returns `η^{(i,i+1)}`: the contents of ℓ-blocks `i` and `i+1` of `p`
/// interchanged (internal order preserved). Valid for `1 ≤ i ≤ N-1`; block N
/// has the m-block (or the anchor seam) on its right, so it cannot be
/// exchanged upward.
pub fn apply_block_exchange(
    eta: &Configuration,
    p: &EllPartition,
    i: usize,
) -> Result<Configuration> {
    let z = exchange_left_endpoint(p, i)?;
    let mut letters = eta.letters().to_vec();
    exchange_adjacent(&mut letters, z, p.ell());
    Ok(Configuration::from_letters_unchecked(letters))
}

fn exchange_left_endpoint(p: &EllPartition, i: usize) -> Result<usize> {
    let nblocks = p.num_ell_blocks();
    if i == 0 || i + 1 > nblocks {
        return Err(Error::InvalidExchange(format!(
            "pair ({i}, {}) is not a pair of adjacent ell-blocks (N = {nblocks})",
            i + 1
        )));
    }
    Ok(p.ell_block(i)?.start)
}

/// Writes the exchange of ℓ-blocks `i`, `i+1` as three reversals, to be
/// applied first-to-last: with `z` the left endpoint of block `i`, these are
/// `R(z, ℓ-1)`, `R(z+ℓ, ℓ-1)`, `R(z, 2ℓ-1)`.
pub fn decompose_exchange(p: &EllPartition, i: usize) -> Result<[Move; 3]> {
    let z = exchange_left_endpoint(p, i)?;
    let ell = p.ell();
    let n = p.n();
    Ok([
        Move::Reversal { x: z, len: ell - 1 },
        Move::Reversal {
            x: vertex_at(z, ell, n),
            len: ell - 1,
        },
        Move::Reversal {
            x: z,
            len: 2 * ell - 1,
        },
    ])
}

/// Writes the transposition of vertices `x` and `x+h` (h ≥ 1) as at most two
/// reversals applied first-to-last: the inner segment `{x+1, ..., x+h-1}`
/// (reversal parameter `h-2`, empty when `h ≤ 2`) and then `R(x, h)`.
pub fn decompose_transposition(x: usize, h: usize, n: usize) -> Result<Vec<Move>> {
    check_vertex(x, n)?;
    if h == 0 {
        return Err(Error::InvalidParams("transposition distance h must be >= 1".into()));
    }
    let mut moves = Vec::with_capacity(2);
    if h > 2 {
        moves.push(Move::Reversal {
            x: vertex_at(x, 1, n),
            len: h - 2,
        });
    }
    moves.push(Move::Reversal { x, len: h });
    Ok(moves)
}

/// Lexicographic rank of a configuration via its Lehmer code;
/// `rank(identity) = 0`.
pub fn rank(eta: &Configuration) -> usize {
    rank_letters(eta.letters())
}

pub(crate) fn rank_letters(letters: &[usize]) -> usize {
    let n = letters.len();
    let mut r = 0usize;
    for i in 0..n {
        let mut smaller_right = 0usize;
        for j in i + 1..n {
            if letters[j] < letters[i] {
                smaller_right += 1;
            }
        }
        r += smaller_right * FACTORIALS[n - 1 - i];
    }
    r
}

/// Inverse of [`rank`]: the configuration of `1..=n` with the given rank.
pub fn unrank(r: usize, n: usize) -> Result<Configuration> {
    if n == 0 || n > 20 {
        return Err(Error::EnumerationCap { n, cap: 20 });
    }
    if r >= FACTORIALS[n] {
        return Err(Error::RankOutOfRange {
            rank: r,
            n,
            cap: FACTORIALS[n],
        });
    }
    let mut letters = vec![0usize; n];
    unrank_into(r, &mut letters);
    Ok(Configuration::from_letters_unchecked(letters))
}

/// Hot-path unrank writing into a caller-owned buffer (no validation).
pub(crate) fn unrank_into(r: usize, letters: &mut [usize]) {
    let n = letters.len();
    let mut avail: Vec<usize> = (1..=n).collect();
    let mut rem = r;
    for i in 0..n {
        let f = FACTORIALS[n - 1 - i];
        let idx = rem / f;
        rem %= f;
        letters[i] = avail.remove(idx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(letters: &[usize]) -> Configuration {
        Configuration::new(letters.to_vec()).unwrap()
    }

    #[test]
    fn reversal_basic_and_wraparound() {
        // definition on the identity
        let e = cfg(&[1, 2, 3, 4, 5]);
        assert_eq!(apply_reversal(&e, 1, 2).unwrap().letters(), &[3, 2, 1, 4, 5]);
        // wraparound segment {4, 1}
        let e = cfg(&[1, 2, 3, 4]);
        assert_eq!(apply_reversal(&e, 4, 1).unwrap().letters(), &[4, 2, 3, 1]);
        // len = 0 is the identity move
        assert_eq!(apply_reversal(&e, 2, 0).unwrap(), e);
        // segment truncation: len = n reverses the whole cycle starting at x
        let full = apply_reversal(&e, 2, 4).unwrap();
        assert_eq!(full.letters(), &[2, 1, 4, 3]);
        assert_eq!(full, apply_reversal(&e, 2, 3).unwrap());
    }

    #[test]
    fn reversal_rejects_bad_vertex() {
        let e = cfg(&[1, 2, 3]);
        assert!(apply_reversal(&e, 0, 1).is_err());
        assert!(apply_reversal(&e, 4, 1).is_err());
    }

    #[test]
    fn transposition_examples() {
        let e = cfg(&[1, 2, 3]);
        assert_eq!(apply_transposition(&e, 1, 3).unwrap().letters(), &[3, 2, 1]);
        assert_eq!(apply_transposition(&e, 2, 2).unwrap(), e);
        assert!(apply_transposition(&e, 5, 1).is_err());
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![1, 2, 2]).is_err());
        assert!(Configuration::new(vec![1, 4, 3]).is_err());
        assert!(Configuration::new(vec![0, 1, 2]).is_err());
        assert!(Configuration::new(vec![]).is_err());
        assert!(Configuration::new(vec![2, 3, 1]).is_ok());
    }

    #[test]
    fn partition_examples() {
        let p = EllPartition::new(7, 2, 1, 4).unwrap();
        let verts: Vec<Vec<usize>> = p.blocks().iter().map(|b| b.vertices(7).collect()).collect();
        assert_eq!(verts, vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7]]);
        assert_eq!(p.m(), 1);
        assert_eq!(p.m_block().unwrap().len, 1);

        let p = EllPartition::new(6, 2, 1, 1).unwrap();
        assert_eq!(p.m(), 0);
        assert!(p.m_block().is_none());
        assert_eq!(p.blocks().len(), 3);

        // anchored rotation: y = 3, k = 1 is the y = 1, k = 1 partition shifted by 2
        let p = EllPartition::new(7, 2, 3, 1).unwrap();
        let verts: Vec<Vec<usize>> = p.blocks().iter().map(|b| b.vertices(7).collect()).collect();
        assert_eq!(verts, vec![vec![3], vec![4, 5], vec![6, 7], vec![1, 2]]);
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(
            EllPartition::new(3, 2, 1, 1),
            Err(Error::PartitionTooCoarse { .. })
        ));
        assert!(EllPartition::new(7, 2, 1, 5).is_err());
        assert!(EllPartition::new(7, 2, 1, 0).is_err());
    }

    #[test]
    fn renumbered_ell_blocks_follow_m_block() {
        // m-block first: ell-blocks keep their cyclic order after it
        let p = EllPartition::new(7, 2, 1, 1).unwrap();
        let starts: Vec<usize> = p.ell_blocks().iter().map(|b| b.start).collect();
        assert_eq!(starts, vec![2, 4, 6]);
        // m-block last: renumbering wraps around to vertex 1
        let p = EllPartition::new(7, 2, 1, 4).unwrap();
        let starts: Vec<usize> = p.ell_blocks().iter().map(|b| b.start).collect();
        assert_eq!(starts, vec![1, 3, 5]);
        // m-block in the middle
        let p = EllPartition::new(7, 2, 1, 2).unwrap();
        let starts: Vec<usize> = p.ell_blocks().iter().map(|b| b.start).collect();
        assert_eq!(starts, vec![4, 6, 1]);
    }

    #[test]
    fn block_exchange_example_and_involution() {
        let p = EllPartition::new(4, 2, 1, 1).unwrap();
        let e = cfg(&[1, 2, 3, 4]);
        let swapped = apply_block_exchange(&e, &p, 1).unwrap();
        assert_eq!(swapped.letters(), &[3, 4, 1, 2]);
        assert_eq!(apply_block_exchange(&swapped, &p, 1).unwrap(), e);
        // i = N is not exchangeable upward
        assert!(apply_block_exchange(&e, &p, 2).is_err());
    }

    #[test]
    fn exchange_decomposition_matches_direct_exchange() {
        // exhaustive over all eta for n <= 6, all partitions and pairs
        for n in 2..=6usize {
            for ell in 1..=n / 2 {
                for y in 1..=n {
                    for p in partitions_of_type(n, ell, y).unwrap() {
                        for i in 1..p.num_ell_blocks() {
                            let moves = decompose_exchange(&p, i).unwrap();
                            for r in 0..factorial(n) {
                                let eta = unrank(r, n).unwrap();
                                let direct = apply_block_exchange(&eta, &p, i).unwrap();
                                let mut letters = eta.letters().to_vec();
                                for mv in &moves {
                                    mv.apply_in_place(&mut letters);
                                }
                                assert_eq!(letters.as_slice(), direct.letters());
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exchange_decomposition_shape() {
        let p = EllPartition::new(4, 2, 1, 1).unwrap();
        let moves = decompose_exchange(&p, 1).unwrap();
        assert_eq!(
            moves,
            [
                Move::Reversal { x: 1, len: 1 },
                Move::Reversal { x: 3, len: 1 },
                Move::Reversal { x: 1, len: 3 }
            ]
        );
        // ell = 1: two identity moves and one adjacent swap
        let p = EllPartition::new(4, 1, 2, 1).unwrap();
        let moves = decompose_exchange(&p, 1).unwrap();
        assert_eq!(
            moves,
            [
                Move::Reversal { x: 2, len: 0 },
                Move::Reversal { x: 3, len: 0 },
                Move::Reversal { x: 2, len: 1 }
            ]
        );
    }

    #[test]
    fn transposition_decomposition_matches_transposition() {
        // h = 3, x = 1 on the identity at n = 5: inner then outer
        let e = Configuration::identity(5);
        let moves = decompose_transposition(1, 3, 5).unwrap();
        let mut letters = e.letters().to_vec();
        moves[0].apply_in_place(&mut letters);
        assert_eq!(letters, vec![1, 3, 2, 4, 5]);
        moves[1].apply_in_place(&mut letters);
        assert_eq!(letters, vec![4, 2, 3, 1, 5]);

        assert_eq!(
            decompose_transposition(2, 1, 5).unwrap(),
            vec![Move::Reversal { x: 2, len: 1 }]
        );
        assert_eq!(
            decompose_transposition(2, 2, 5).unwrap(),
            vec![Move::Reversal { x: 2, len: 2 }]
        );

        // exhaustive composition check for n <= 6
        for n in 3..=6usize {
            for x in 1..=n {
                for h in 1..n {
                    let y = vertex_at(x, h, n);
                    let moves = decompose_transposition(x, h, n).unwrap();
                    for r in 0..factorial(n) {
                        let eta = unrank(r, n).unwrap();
                        let direct = apply_transposition(&eta, x, y).unwrap();
                        let mut letters = eta.letters().to_vec();
                        for mv in &moves {
                            mv.apply_in_place(&mut letters);
                        }
                        assert_eq!(letters.as_slice(), direct.letters());
                    }
                }
            }
        }
    }

    #[test]
    fn rank_identity_is_zero_and_s5_is_exactly_0_to_119() {
        for n in 1..=7 {
            assert_eq!(rank(&Configuration::identity(n)), 0);
        }
        let mut seen = vec![false; 120];
        for r in 0..120 {
            let eta = unrank(r, 5).unwrap();
            let rr = rank(&eta);
            assert!(!seen[rr]);
            seen[rr] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn unrank_range_check() {
        assert!(unrank(120, 5).is_err());
        assert!(unrank(119, 5).is_ok());
    }

    proptest! {
        #[test]
        fn rank_unrank_roundtrip(n in 1usize..=7, salt in any::<u64>()) {
            let r = (salt as usize) % factorial(n);
            let eta = unrank(r, n).unwrap();
            prop_assert_eq!(rank(&eta), r);
        }

        #[test]
        fn deterministic_moves_preserve_bijection(n in 2usize..=7, salt in any::<u64>(), x in 1usize..=7, len in 0usize..=7) {
            let x = (x - 1) % n + 1;
            let eta = unrank((salt as usize) % factorial(n), n).unwrap();
            let rev = apply_reversal(&eta, x, len).unwrap();
            prop_assert!(Configuration::new(rev.letters().to_vec()).is_ok());
            // involution
            prop_assert_eq!(apply_reversal(&rev, x, len).unwrap(), eta.clone());
            // a reversal of length >= 1 moves at least two distinct letters
            if len >= 1 {
                prop_assert!(rev != eta);
            }
        }

        #[test]
        fn partition_blocks_tile_the_cycle(n in 2usize..=64, ell in 1usize..=32, y in 1usize..=64, k in 1usize..=65) {
            let ell = (ell - 1) % n + 1;
            let y = (y - 1) % n + 1;
            if n / ell >= 2 {
                let total = n / ell + usize::from(n % ell != 0);
                let k = (k - 1) % total + 1;
                let p = EllPartition::new(n, ell, y, k).unwrap();
                let mut covered = vec![0usize; n];
                for b in p.blocks() {
                    for v in b.vertices(n) {
                        covered[v - 1] += 1;
                    }
                }
                prop_assert!(covered.iter().all(|&c| c == 1));
                prop_assert!(p.blocks().iter().any(|b| b.start == y));
                let ell_count = p.blocks().iter().filter(|b| b.len == ell).count();
                prop_assert_eq!(ell_count, p.num_ell_blocks());
            }
        }
    }

    #[test]
    fn partition_tiling_exhaustive_up_to_64() {
        for n in 2..=64usize {
            for ell in 1..=n {
                if n / ell < 2 {
                    continue;
                }
                let m = n - (n / ell) * ell;
                let total = n / ell + usize::from(m >= 1);
                for y in 1..=n {
                    for k in 1..=(if m >= 1 { total } else { 1 }) {
                        let p = EllPartition::new(n, ell, y, k).unwrap();
                        let mut covered = vec![false; n];
                        for b in p.blocks() {
                            for v in b.vertices(n) {
                                assert!(!covered[v - 1], "overlap at n={n} ell={ell} y={y} k={k}");
                                covered[v - 1] = true;
                            }
                        }
                        assert!(covered.iter().all(|&c| c), "gap at n={n} ell={ell} y={y} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn configuration_serializes_as_plain_array() {
        let e = cfg(&[2, 3, 1]);
        assert_eq!(serde_json::to_string(&e).unwrap(), "[2,3,1]");
        let back: Configuration = serde_json::from_str("[2,3,1]").unwrap();
        assert_eq!(back, e);
    }
}
