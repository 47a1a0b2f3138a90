//! Exact probability oracles for coin-round supermajorities.
//!
//! With all `n` witnesses flipping fair coins, the yes-count is
//! Binomial(n, 1/2). A supermajority arises when the count exceeds `2n/3` or
//! falls below `n/3`; by symmetry that is twice the upper tail.

/// An exact nonnegative rational with power-of-two denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u128,
    pub den: u128,
}

impl Fraction {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::fmt::Display for Fraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Binomial coefficients C(n, 0..=n) by Pascal's rule. Exact for n <= 60.
fn binomial_row(n: u32) -> Vec<u128> {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// `Pr[X > 2n/3]` for `X ~ Binomial(n, 1/2)`: the one-sided exact tail
/// `sum_{k=floor(2n/3)+1}^{n} C(n,k) / 2^n`.
pub fn exact_one_sided_tail(n: u32) -> Fraction {
    assert!(
        (1..=60).contains(&n),
        "exact tail supported for 1 <= n <= 60"
    );
    let row = binomial_row(n);
    let threshold = (2 * n / 3 + 1) as usize;
    let num = row[threshold.min(row.len())..].iter().sum();
    Fraction {
        num,
        den: 1u128 << n,
    }
}

/// `Pr[X > 2n/3 or X < n/3]`: twice the one-sided tail, by symmetry of the
/// fair binomial.
pub fn exact_supermajority_prob(n: u32) -> Fraction {
    let tail = exact_one_sided_tail(n);
    Fraction {
        num: 2 * tail.num,
        den: tail.den,
    }
}

/// The tail bound `e^{-n/18}` obtained from Hoeffding's inequality at
/// deviation `2/3 - 1/2`.
pub fn hoeffding_bound(n: u32) -> f64 {
    (-(n as f64) / 18.0).exp()
}

/// Expected number of coin rounds before a supermajority appears:
/// `1 / exact_supermajority_prob(n)`.
pub fn expected_coin_rounds(n: u32) -> f64 {
    let p = exact_supermajority_prob(n);
    p.den as f64 / p.num as f64
}

/// Whether a yes-count forms a supermajority either way at size `n`.
pub fn is_supermajority_split(n: u32, yes: u32) -> bool {
    3 * yes > 2 * n || 3 * (n - yes) > 2 * n
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: walk all 2^n coin outcomes and count
    /// supermajorities.
    fn enumerate_supermajority(n: u32) -> Fraction {
        assert!(n <= 20);
        let mut hits = 0u128;
        for bits in 0u32..(1 << n) {
            let yes = bits.count_ones();
            if is_supermajority_split(n, yes) {
                hits += 1;
            }
        }
        Fraction {
            num: hits,
            den: 1u128 << n,
        }
    }

    #[test]
    fn exact_values_match_hand_computation() {
        // n=7: 2*(21+7+1)/128.
        assert_eq!(exact_supermajority_prob(7), Fraction { num: 58, den: 128 });
        // n=13: 2*(715+286+78+13+1)/8192.
        assert_eq!(
            exact_supermajority_prob(13),
            Fraction {
                num: 2186,
                den: 8192
            }
        );
        // n=3: Pr[X>2 or X<1] over 8 outcomes.
        assert_eq!(exact_supermajority_prob(3), Fraction { num: 2, den: 8 });
    }

    #[test]
    fn matches_brute_force_enumeration() {
        for n in 1..=16 {
            assert_eq!(
                exact_supermajority_prob(n),
                enumerate_supermajority(n),
                "n={n}"
            );
        }
    }

    #[test]
    fn hoeffding_dominates_one_sided_tail() {
        // Spot values from the bound chain.
        assert!((hoeffding_bound(18) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((hoeffding_bound(36) - (-2.0f64).exp()).abs() < 1e-12);
        assert!((hoeffding_bound(7) - 0.6776).abs() < 1e-3);
        // One-sided tail at n=7 is 29/128.
        let t7 = exact_one_sided_tail(7);
        assert_eq!(t7, Fraction { num: 29, den: 128 });
        assert!(t7.as_f64() <= hoeffding_bound(7));
        assert!(exact_one_sided_tail(18).as_f64() <= hoeffding_bound(18));
        assert!(exact_one_sided_tail(36).as_f64() <= hoeffding_bound(36));
    }

    #[test]
    fn expected_rounds_values_and_monotonicity() {
        assert!((expected_coin_rounds(7) - 128.0 / 58.0).abs() < 1e-12);
        assert!((expected_coin_rounds(13) - 8192.0 / 2186.0).abs() < 1e-12);
        let ns = [7u32, 10, 13, 16, 19, 22];
        for w in ns.windows(2) {
            assert!(
                expected_coin_rounds(w[1]) >= expected_coin_rounds(w[0]),
                "E[R] nondecreasing from {} to {}",
                w[0],
                w[1]
            );
        }
    }
}
