//! Regular LDPC codes: pseudo-random construction, systematic encoding and
//! sum-product decoding.

mod alist;
mod decoder;

pub use alist::{parse_alist, write_alist};
pub use decoder::{decode_spa, DecodeResult, SpaDecoder, DEFAULT_MAX_ITER};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sparse binary parity-check matrix stored by rows and by columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    n: usize,
    row_to_cols: Vec<Vec<usize>>,
    col_to_rows: Vec<Vec<usize>>,
}

impl ParityCheck {
    /// Builds the matrix from the column indices of each row.
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut col_to_rows = vec![Vec::new(); n];
        let mut row_to_cols = Vec::with_capacity(rows.len());
        for (r, mut cols) in rows.into_iter().enumerate() {
            cols.sort_unstable();
            if cols.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("row {r} repeats a column")));
            }
            for &c in &cols {
                if c >= n {
                    return Err(Error::invalid(format!(
                        "row {r} references column {c} >= {n}"
                    )));
                }
                col_to_rows[c].push(r);
            }
            row_to_cols.push(cols);
        }
        Ok(Self {
            n,
            row_to_cols,
            col_to_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.row_to_cols.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_to_cols[r]
    }

    pub fn column(&self, c: usize) -> &[usize] {
        &self.col_to_rows[c]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.row_to_cols
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.col_to_rows
    }

    pub fn edges(&self) -> usize {
        self.row_to_cols.iter().map(Vec::len).sum()
    }

    /// `(column weight, row weight)` if every column and every row agree.
    pub fn regular_weights(&self) -> Option<(usize, usize)> {
        let wc = self.col_to_rows.first()?.len();
        let wr = self.row_to_cols.first()?.len();
        let cols_ok = self.col_to_rows.iter().all(|c| c.len() == wc);
        let rows_ok = self.row_to_cols.iter().all(|r| r.len() == wr);
        (cols_ok && rows_ok).then_some((wc, wr))
    }

    /// `H · bitsᵀ = 0` over GF(2).
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.row_to_cols
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &c| acc ^ (bits[c] & 1)) == 0)
    }

    /// Number of pairs of columns that share two or more rows (4-cycles).
    pub fn four_cycles(&self) -> usize {
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for row in &self.row_to_cols {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    *pairs.entry((a, b)).or_default() += 1;
                }
            }
        }
        pairs.values().filter(|&&v| v > 1).count()
    }

    /// Same matrix with rows listed in the given order.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.m() {
            return Err(Error::dims("row permutation length differs from m"));
        }
        Self::from_rows(
            self.n,
            order.iter().map(|&r| self.row_to_cols[r].clone()).collect(),
        )
    }
}

type BitRow = Vec<u64>;

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn get_bit(row: &BitRow, i: usize) -> bool {
    (row[i / 64] >> (i % 64)) & 1 == 1
}

fn set_bit(row: &mut BitRow, i: usize) {
    row[i / 64] |= 1 << (i % 64);
}

fn xor_into(dst: &mut BitRow, src: &BitRow) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// Reduced row echelon form of `H` over GF(2): returns the reduced rows and
/// the pivot column of each.
fn row_reduce(parity: &ParityCheck) -> (Vec<BitRow>, Vec<usize>) {
    let n = parity.n();
    let mut rows: Vec<BitRow> = parity
        .rows()
        .iter()
        .map(|cols| {
            let mut r = vec![0u64; words(n)];
            for &c in cols {
                set_bit(&mut r, c);
            }
            r
        })
        .collect();
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..n {
        if next == rows.len() {
            break;
        }
        let Some(found) = (next..rows.len()).find(|&r| get_bit(&rows[r], col)) else {
            continue;
        };
        rows.swap(next, found);
        let pivot = rows[next].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != next && get_bit(row, col) {
                xor_into(row, &pivot);
            }
        }
        pivots.push(col);
        next += 1;
    }
    rows.truncate(pivots.len());
    (rows, pivots)
}

/// A binary linear code given by its parity checks, with a systematic encoder.
#[derive(Debug, Clone)]
pub struct LdpcCode {
    parity: ParityCheck,
    /// One row per information bit; bit-packed length-`n` codewords.
    generator: Vec<BitRow>,
    /// Codeword positions that carry the information bits, in order.
    info_positions: Vec<usize>,
    seed: Option<u64>,
}

impl LdpcCode {
    /// Derives the systematic generator from an arbitrary parity-check matrix.
    pub fn from_parity(parity: ParityCheck) -> Result<Self> {
        let n = parity.n();
        if n == 0 {
            return Err(Error::invalid("code length must be positive"));
        }
        let (reduced, pivots) = row_reduce(&parity);
        let mut is_pivot = vec![false; n];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        // Unit vector on info column j forces pivot bit p_r = R[r, j].
        let generator = info_positions
            .iter()
            .map(|&j| {
                let mut row = vec![0u64; words(n)];
                set_bit(&mut row, j);
                for (r, red) in reduced.iter().enumerate() {
                    if get_bit(red, j) {
                        set_bit(&mut row, pivots[r]);
                    }
                }
                row
            })
            .collect();
        Ok(Self {
            parity,
            generator,
            info_positions,
            seed: None,
        })
    }

    pub fn parity(&self) -> &ParityCheck {
        &self.parity
    }

    pub fn n(&self) -> usize {
        self.parity.n()
    }

    /// Number of information bits.
    pub fn k(&self) -> usize {
        self.info_positions.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Generator row `i` as unpacked bits.
    pub fn generator_row(&self, i: usize) -> Vec<u8> {
        (0..self.n())
            .map(|c| get_bit(&self.generator[i], c) as u8)
            .collect()
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::dims(format!(
                "expected {} information bits, got {}",
                self.k(),
                info.len()
            )));
        }
        let mut cw = vec![0u64; words(self.n())];
        for (bit, row) in info.iter().zip(&self.generator) {
            match bit {
                0 => {}
                1 => xor_into(&mut cw, row),
                other => return Err(Error::invalid(format!("bit value {other} is not 0 or 1"))),
            }
        }
        Ok((0..self.n()).map(|c| get_bit(&cw, c) as u8).collect())
    }

    /// Information bits of a codeword (or of a decoder hard decision).
    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }
}

const MAX_ATTEMPTS: usize = 64;
const MAX_SWAP_ROUNDS: usize = 2000;

/// Pseudo-random `(w_c, w_c/(1−R))`-regular code of length `n`.
///
/// Edges are matched by a random socket permutation; multi-edges and 4-cycles
/// are removed by degree-preserving edge swaps. Graphs whose parity checks are
/// linearly dependent are redrawn so that `k = n·R` exactly.
pub fn build_code(n: usize, rate: f64, column_weight: usize, seed: u64) -> Result<LdpcCode> {
    if n == 0 || column_weight == 0 || !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!(
            "invalid code parameters n={n} R={rate} w_c={column_weight}"
        )));
    }
    let checks_f = n as f64 * (1.0 - rate);
    let checks = checks_f.round() as usize;
    if (checks_f - checks as f64).abs() > 1e-9 || checks == 0 {
        return Err(Error::invalid(format!(
            "n·(1−R) = {checks_f} is not an integer"
        )));
    }
    let edges = n * column_weight;
    if !edges.is_multiple_of(checks) {
        return Err(Error::invalid(format!(
            "n·w_c = {edges} is not divisible by the {checks} checks"
        )));
    }
    let row_weight = edges / checks;
    if row_weight > n || column_weight > checks {
        return Err(Error::invalid("weights exceed matrix dimensions"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_failure = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        match draw_graph(n, checks, column_weight, row_weight, &mut rng) {
            Ok(var_checks) => {
                let mut rows = vec![Vec::with_capacity(row_weight); checks];
                for (v, cs) in var_checks.iter().enumerate() {
                    for &c in cs {
                        rows[c].push(v);
                    }
                }
                let parity = ParityCheck::from_rows(n, rows)?;
                let mut code = LdpcCode::from_parity(parity)?;
                if code.k() == n - checks {
                    code.seed = Some(seed);
                    log::debug!("LDPC code built on attempt {attempt}");
                    return Ok(code);
                }
                last_failure = format!("rank deficient (k = {})", code.k());
            }
            Err(msg) => last_failure = msg,
        }
    }
    Err(Error::Construction(format!(
        "seed {seed}: no valid ({column_weight},{row_weight}) graph after {MAX_ATTEMPTS} attempts; last failure: {last_failure}"
    )))
}

fn draw_graph<R: Rng>(
    n: usize,
    checks: usize,
    wc: usize,
    wr: usize,
    rng: &mut R,
) -> std::result::Result<Vec<Vec<usize>>, String> {
    let mut sockets: Vec<usize> = (0..checks)
        .flat_map(|c| std::iter::repeat_n(c, wr))
        .collect();
    sockets.shuffle(rng);
    // edge e belongs to variable e / wc
    for _ in 0..MAX_SWAP_ROUNDS {
        let bad = bad_edges(&sockets, n, wc);
        if bad.is_empty() {
            return Ok(sockets.chunks(wc).map(<[usize]>::to_vec).collect());
        }
        for e in bad {
            let other = rng.random_range(0..sockets.len());
            if other / wc != e / wc {
                sockets.swap(e, other);
            }
        }
    }
    Err("could not remove multi-edges and 4-cycles".into())
}

/// Edges taking part in a repeated (variable, check) pair or a 4-cycle.
fn bad_edges(sockets: &[usize], n: usize, wc: usize) -> Vec<usize> {
    let mut bad = Vec::new();
    let mut check_vars: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in 0..n {
        let cs = &sockets[v * wc..(v + 1) * wc];
        for i in 0..wc {
            if cs[..i].contains(&cs[i]) {
                bad.push(v * wc + i);
            }
            check_vars.entry(cs[i]).or_default().push(v);
        }
    }
    let mut pair_checks: HashMap<(usize, usize), usize> = HashMap::new();
    let mut sorted: Vec<_> = check_vars.into_iter().collect();
    sorted.sort_unstable_by_key(|(c, _)| *c);
    for (_, mut vars) in sorted {
        vars.sort_unstable();
        vars.dedup();
        for i in 0..vars.len() {
            for j in i + 1..vars.len() {
                *pair_checks.entry((vars[i], vars[j])).or_default() += 1;
            }
        }
    }
    let mut cyc: Vec<usize> = pair_checks
        .into_iter()
        .filter(|(_, count)| *count > 1)
        .map(|((a, _), _)| a)
        .collect();
    cyc.sort_unstable();
    cyc.dedup();
    // break each cycle by moving the first edge of one participating variable
    bad.extend(cyc.into_iter().map(|v| v * wc));
    bad.sort_unstable();
    bad.dedup();
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_code_shape() {
        let code = build_code(512, 0.5, 3, 2024).unwrap();
        assert_eq!(code.parity().m(), 256);
        assert_eq!(code.parity().regular_weights(), Some((3, 6)));
        assert_eq!(code.k(), 256);
        assert!((code.rate() - 0.5).abs() < 1e-12);
        assert_eq!(code.parity().four_cycles(), 0);
        assert_eq!(code.seed(), Some(2024));
    }

    #[test]
    fn generator_is_orthogonal_to_checks() {
        let code = build_code(512, 0.5, 3, 7).unwrap();
        for i in 0..code.k() {
            assert!(code.parity().syndrome_ok(&code.generator_row(i)), "row {i}");
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_code(128, 0.5, 3, 99).unwrap();
        let b = build_code(128, 0.5, 3, 99).unwrap();
        assert_eq!(a.parity(), b.parity());
        let c = build_code(128, 0.5, 3, 100).unwrap();
        assert_ne!(a.parity(), c.parity());
    }

    #[test]
    fn bad_parameters() {
        assert!(build_code(10, 0.33, 3, 0).is_err());
        // (5,10)-regular on 12 bits is too dense to be free of 4-cycles
        assert!(matches!(
            build_code(12, 0.5, 5, 0),
            Err(Error::Construction(_))
        ));
        assert!(build_code(0, 0.5, 3, 0).is_err());
        assert!(build_code(512, 1.0, 3, 0).is_err());
    }

    #[test]
    fn encode_is_systematic() {
        let code = build_code(128, 0.5, 3, 1).unwrap();
        let info: Vec<u8> = (0..code.k()).map(|i| (i % 3 == 0) as u8).collect();
        let cw = code.encode(&info).unwrap();
        assert!(code.parity().syndrome_ok(&cw));
        assert_eq!(code.extract_info(&cw), info);
        assert!(code.encode(&info[1..]).is_err());
    }

    #[test]
    fn rank_deficient_parity_gives_lower_rate() {
        // second row duplicates the first
        let p = ParityCheck::from_rows(4, vec![vec![0, 1], vec![0, 1], vec![2, 3]]).unwrap();
        let code = LdpcCode::from_parity(p).unwrap();
        assert_eq!(code.k(), 2);
        for i in 0..2 {
            assert!(code.parity().syndrome_ok(&code.generator_row(i)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn codewords_satisfy_parity(bits in prop::collection::vec(0u8..2, 64)) {
            static CODE: std::sync::OnceLock<LdpcCode> = std::sync::OnceLock::new();
            let code = CODE.get_or_init(|| build_code(128, 0.5, 3, 5).unwrap());
            let cw = code.encode(&bits).unwrap();
            prop_assert!(code.parity().syndrome_ok(&cw));
            prop_assert_eq!(code.extract_info(&cw), bits);
        }
    }
}
