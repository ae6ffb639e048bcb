//! Flooding sum-product decoder in the log domain (tanh rule).
//!
//! LLR convention: positive means bit 0.

use super::{LdpcCode, ParityCheck};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 50;

/// Channel LLRs are clipped to this magnitude on entry.
const INPUT_CLAMP: f64 = 60.0;
/// Keeps `atanh` finite.
const TANH_LIMIT: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    /// Hard decisions on all `n` code bits.
    pub bits: Vec<u8>,
    pub iterations_used: usize,
    pub syndrome_ok: bool,
}

/// Tanner-graph view of a parity-check matrix, reusable across decodes.
#[derive(Debug, Clone)]
pub struct SpaDecoder {
    parity: ParityCheck,
    /// For each check, the (variable, edge) pairs.
    check_edges: Vec<Vec<(usize, usize)>>,
    /// For each variable, its edge indices.
    var_edges: Vec<Vec<usize>>,
    edges: usize,
}

impl SpaDecoder {
    pub fn new(code: &LdpcCode) -> Self {
        Self::from_parity(code.parity().clone())
    }

    pub fn from_parity(parity: ParityCheck) -> Self {
        let mut var_edges = vec![Vec::new(); parity.n()];
        let mut check_edges = Vec::with_capacity(parity.m());
        let mut e = 0;
        for row in parity.rows() {
            let mut list = Vec::with_capacity(row.len());
            for &v in row {
                list.push((v, e));
                var_edges[v].push(e);
                e += 1;
            }
            check_edges.push(list);
        }
        Self {
            parity,
            check_edges,
            var_edges,
            edges: e,
        }
    }

    pub fn decode(&self, llrs: &[f64], max_iter: usize) -> Result<DecodeResult> {
        let n = self.parity.n();
        if llrs.len() != n {
            return Err(Error::dims(format!(
                "decoder expects {n} LLRs, got {}",
                llrs.len()
            )));
        }
        if llrs.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("LLRs must be finite"));
        }
        let channel: Vec<f64> = llrs
            .iter()
            .map(|l| l.clamp(-INPUT_CLAMP, INPUT_CLAMP))
            .collect();
        let mut bits: Vec<u8> = channel.iter().map(|&l| (l < 0.0) as u8).collect();
        if self.parity.syndrome_ok(&bits) {
            return Ok(DecodeResult {
                bits,
                iterations_used: 0,
                syndrome_ok: true,
            });
        }

        let mut v2c = vec![0.0; self.edges];
        let mut c2v = vec![0.0; self.edges];
        for (v, es) in self.var_edges.iter().enumerate() {
            for &e in es {
                v2c[e] = channel[v];
            }
        }
        let mut prefix = Vec::new();
        let mut tanhs = Vec::new();
        for iter in 1..=max_iter {
            for edges in &self.check_edges {
                tanhs.clear();
                tanhs.extend(edges.iter().map(|&(_, e)| (0.5 * v2c[e]).tanh()));
                // exclusive products via prefix/suffix sweeps (robust to zeros)
                prefix.clear();
                let mut acc = 1.0;
                for t in &tanhs {
                    prefix.push(acc);
                    acc *= t;
                }
                let mut suffix = 1.0;
                for (i, &(_, e)) in edges.iter().enumerate().rev() {
                    let prod = (prefix[i] * suffix).clamp(-TANH_LIMIT, TANH_LIMIT);
                    c2v[e] = 2.0 * prod.atanh();
                    suffix *= tanhs[i];
                }
            }
            for (v, es) in self.var_edges.iter().enumerate() {
                let total: f64 = channel[v] + es.iter().map(|&e| c2v[e]).sum::<f64>();
                bits[v] = (total < 0.0) as u8;
                for &e in es {
                    v2c[e] = total - c2v[e];
                }
            }
            if self.parity.syndrome_ok(&bits) {
                return Ok(DecodeResult {
                    bits,
                    iterations_used: iter,
                    syndrome_ok: true,
                });
            }
        }
        Ok(DecodeResult {
            bits,
            iterations_used: max_iter,
            syndrome_ok: false,
        })
    }
}

/// Convenience wrapper building a decoder for one call.
pub fn decode_spa(code: &LdpcCode, llrs: &[f64], max_iter: usize) -> Result<DecodeResult> {
    SpaDecoder::new(code).decode(llrs, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldpc::build_code;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strong_llrs(cw: &[u8]) -> Vec<f64> {
        cw.iter()
            .map(|&b| if b == 0 { 60.0 } else { -60.0 })
            .collect()
    }

    #[test]
    fn noiseless_codeword_decodes_immediately() {
        let code = build_code(512, 0.5, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
        let cw = code.encode(&info).unwrap();
        let out = decode_spa(&code, &strong_llrs(&cw), DEFAULT_MAX_ITER).unwrap();
        assert_eq!(out.bits, cw);
        assert!(out.iterations_used <= 1);
        assert!(out.syndrome_ok);
    }

    #[test]
    fn single_erasure_is_filled() {
        let code = build_code(512, 0.5, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
            let cw = code.encode(&info).unwrap();
            let mut llrs = strong_llrs(&cw);
            let pos = rng.random_range(0..code.n());
            llrs[pos] = 0.0;
            let out = decode_spa(&code, &llrs, DEFAULT_MAX_ITER).unwrap();
            assert_eq!(out.bits, cw);
            assert!(out.iterations_used <= 5);
            // the erased bit is the unique completion: any check on it fixes it
            let mut flipped = cw.clone();
            flipped[pos] ^= 1;
            assert!(!code.parity().syndrome_ok(&flipped));
        }
    }

    #[test]
    fn all_zero_llrs_do_not_crash() {
        let code = build_code(128, 0.5, 3, 3).unwrap();
        let out = decode_spa(&code, &vec![0.0; 128], 10).unwrap();
        // zero LLRs slice to the all-zero word, which is a codeword
        assert_eq!(out.syndrome_ok, code.parity().syndrome_ok(&out.bits));
    }

    #[test]
    fn length_and_finiteness_checks() {
        let code = build_code(128, 0.5, 3, 3).unwrap();
        assert!(matches!(
            decode_spa(&code, &[1.0; 10], 10),
            Err(Error::DimensionMismatch(_))
        ));
        let mut l = vec![1.0; 128];
        l[3] = f64::NAN;
        assert!(decode_spa(&code, &l, 10).is_err());
    }

    #[test]
    fn corrects_gaussian_noise() {
        let code = build_code(512, 0.5, 3, 11).unwrap();
        let dec = SpaDecoder::new(&code);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = 0.6f64; // BPSK Eb/N0 ≈ 4.4 dB at rate 1/2
        let mut failures = 0;
        for _ in 0..50 {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
            let cw = code.encode(&info).unwrap();
            let llrs: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let s = if b == 0 { 1.0 } else { -1.0 };
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    2.0 * (s + sigma * n) / (sigma * sigma)
                })
                .collect();
            let out = dec.decode(&llrs, DEFAULT_MAX_ITER).unwrap();
            if out.bits != cw {
                failures += 1;
            }
        }
        assert!(failures <= 2, "{failures} frame errors");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn invariant_under_row_permutation(seed in 0u64..1000) {
            static CODE: std::sync::OnceLock<LdpcCode> = std::sync::OnceLock::new();
            let code = CODE.get_or_init(|| build_code(128, 0.5, 3, 21).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
            let cw = code.encode(&info).unwrap();
            let llrs: Vec<f64> = cw
                .iter()
                .map(|&b| {
                    let n: f64 = rng.sample(rand_distr::StandardNormal);
                    (if b == 0 { 2.0 } else { -2.0 }) + 2.5 * n
                })
                .collect();
            let mut order: Vec<usize> = (0..code.parity().m()).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let permuted = SpaDecoder::from_parity(code.parity().permute_rows(&order).unwrap());
            let a = SpaDecoder::new(code).decode(&llrs, 20).unwrap();
            let b = permuted.decode(&llrs, 20).unwrap();
            prop_assert_eq!(a.bits, b.bits);
            prop_assert_eq!(a.iterations_used, b.iterations_used);
        }
    }
}
