//! Determinant strings and single-excitation tables.

use crate::error::{Error, Result};

/// `C(n, k)` for small arguments.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `n_orb`-bit strings with `n_el` set bits, in increasing numeric order.
pub fn strings(n_orb: usize, n_el: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(binomial(n_orb, n_el));
    if n_el > n_orb {
        return out;
    }
    if n_el == 0 {
        out.push(0);
        return out;
    }
    let mut s: u64 = (1u64 << n_el) - 1;
    let limit = 1u64 << n_orb;
    while s < limit {
        out.push(s);
        // Gosper's hack: next integer with the same popcount.
        let c = s & s.wrapping_neg();
        let r = s + c;
        s = (((r ^ s) >> 2) / c) | r;
    }
    out
}

/// `(-1)^(number of occupied orbitals below p)`.
#[inline]
pub fn parity_below(s: u64, p: usize) -> f64 {
    if (s & ((1u64 << p) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// One string of a fixed-size spin space.
#[derive(Debug, Clone)]
pub struct StringSpace {
    pub n_orb: usize,
    pub n_el: usize,
    pub strings: Vec<u64>,
    /// Colex ranking table: `rank = sum_k table[pos_k][k]`.
    table: Vec<Vec<usize>>,
}

/// `a+_p a_q |I> = sign |J>`, stored per source string `I`.
#[derive(Debug, Clone, Copy)]
pub struct Single {
    pub target: u32,
    pub pq: u32,
    pub sign: f64,
}

impl StringSpace {
    pub fn new(n_orb: usize, n_el: usize) -> Self {
        let table = (0..n_orb).map(|p| (0..=n_el).map(|k| binomial(p, k + 1)).collect()).collect();
        StringSpace { n_orb, n_el, strings: strings(n_orb, n_el), table }
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    /// Position of `s` in [`Self::strings`].
    #[inline]
    pub fn rank(&self, s: u64) -> usize {
        let mut r = 0;
        let mut k = 0;
        let mut bits = s;
        while bits != 0 {
            let p = bits.trailing_zeros() as usize;
            r += self.table[p][k];
            k += 1;
            bits &= bits - 1;
        }
        r
    }

    pub fn singles(&self) -> Vec<Vec<Single>> {
        let n = self.n_orb;
        self.strings
            .iter()
            .map(|&s| {
                let mut out = Vec::new();
                for q in 0..n {
                    if s & (1 << q) == 0 {
                        continue;
                    }
                    let sign_q = parity_below(s, q);
                    let s1 = s & !(1 << q);
                    for p in 0..n {
                        if s1 & (1 << p) != 0 {
                            continue;
                        }
                        let sign = sign_q * parity_below(s1, p);
                        let t = s1 | (1 << p);
                        out.push(Single { target: self.rank(t) as u32, pq: (p * n + q) as u32, sign });
                    }
                }
                out
            })
            .collect()
    }
}

/// Determinants `|I_alpha I_beta>` of one `(N_alpha, N_beta)` sector, alpha
/// strings major. Operators act as `a+_alpha ... a+_beta ...` with orbitals
/// filled in ascending order within each spin.
#[derive(Debug, Clone)]
pub struct DeterminantSpace {
    pub n_orb: usize,
    pub alpha: StringSpace,
    pub beta: StringSpace,
}

impl DeterminantSpace {
    pub fn new(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Self> {
        if n_orb > 63 {
            return Err(Error::DimensionOverBudget(n_orb, "bit-packed strings"));
        }
        Ok(DeterminantSpace { n_orb, alpha: StringSpace::new(n_orb, n_alpha), beta: StringSpace::new(n_orb, n_beta) })
    }

    pub fn sector(&self) -> (usize, usize) {
        (self.alpha.n_el, self.beta.n_el)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len() * self.beta.len()
    }

    pub fn determinant(&self, index: usize) -> (u64, u64) {
        let nb = self.beta.len();
        (self.alpha.strings[index / nb], self.beta.strings[index % nb])
    }

    /// `a+_{j alpha} c`; `target` must be the `(N_alpha + 1, N_beta)` space.
    pub fn create_alpha(&self, target: &DeterminantSpace, j: usize, c: &[f64]) -> Result<Vec<f64>> {
        self.move_alpha(target, j, c, true)
    }

    /// `a_{j alpha} c`; `target` must be the `(N_alpha - 1, N_beta)` space.
    pub fn annihilate_alpha(&self, target: &DeterminantSpace, j: usize, c: &[f64]) -> Result<Vec<f64>> {
        self.move_alpha(target, j, c, false)
    }

    fn move_alpha(&self, target: &DeterminantSpace, j: usize, c: &[f64], create: bool) -> Result<Vec<f64>> {
        let expected = if create { self.alpha.n_el + 1 } else { self.alpha.n_el.wrapping_sub(1) };
        if target.alpha.n_el != expected || target.beta.n_el != self.beta.n_el || target.n_orb != self.n_orb {
            return Err(Error::DimensionMismatch { expected, got: target.alpha.n_el });
        }
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: c.len() });
        }
        let nb = self.beta.len();
        let mut out = vec![0.0; target.dim()];
        for (ia, &s) in self.alpha.strings.iter().enumerate() {
            let occupied = s & (1 << j) != 0;
            if occupied == create {
                continue;
            }
            let sign = parity_below(s, j);
            let t = s ^ (1 << j);
            let ja = target.alpha.rank(t);
            let src = &c[ia * nb..(ia + 1) * nb];
            let dst = &mut out[ja * nb..(ja + 1) * nb];
            for (d, &x) in dst.iter_mut().zip(src) {
                *d += sign * x;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strings_are_ordered_and_ranked() {
        for n in 1..=8 {
            for k in 0..=n {
                let sp = StringSpace::new(n, k);
                assert_eq!(sp.len(), binomial(n, k));
                assert!(sp.strings.windows(2).all(|w| w[0] < w[1]));
                for (i, &s) in sp.strings.iter().enumerate() {
                    assert_eq!(s.count_ones() as usize, k);
                    assert_eq!(sp.rank(s), i);
                }
            }
        }
    }

    #[test]
    fn dimension_is_product_of_binomials() {
        let sp = DeterminantSpace::new(6, 3, 2).unwrap();
        assert_eq!(sp.dim(), 20 * 15);
        assert_eq!(DeterminantSpace::new(12, 3, 3).unwrap().dim(), 220 * 220);
    }

    #[test]
    fn anticommutator_is_identity() {
        // {a_j, a+_i} acting on a random vector in (2,1) of 4 orbitals.
        let sp = DeterminantSpace::new(4, 2, 1).unwrap();
        let up = DeterminantSpace::new(4, 3, 1).unwrap();
        let down = DeterminantSpace::new(4, 1, 1).unwrap();
        let c: Vec<f64> = (0..sp.dim()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        for i in 0..4 {
            for j in 0..4 {
                let a = up.annihilate_alpha(&sp, j, &sp.create_alpha(&up, i, &c).unwrap()).unwrap();
                let b = down.create_alpha(&sp, i, &sp.annihilate_alpha(&down, j, &c).unwrap()).unwrap();
                for k in 0..sp.dim() {
                    let expect = if i == j { c[k] } else { 0.0 };
                    assert_eq!(a[k] + b[k], expect);
                }
            }
        }
    }
}
