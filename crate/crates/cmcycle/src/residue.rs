//! Dense polynomials over the prime field `F_p`, coefficients low to high.
//! Only what the tower construction and the irreducibility test need.

pub(crate) type FpPoly = Vec<u64>;

fn trim(mut a: FpPoly) -> FpPoly {
    while a.len() > 1 && *a.last().unwrap() == 0 {
        a.pop();
    }
    a
}

pub(crate) fn degree(a: &[u64]) -> Option<usize> {
    a.iter().rposition(|&c| c != 0)
}

fn inv_mod(a: u64, p: u64) -> u64 {
    crate::localfield::mod_pow(a, p - 2, p)
}

pub(crate) fn sub(a: &[u64], b: &[u64], p: u64) -> FpPoly {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0);
            let y = b.get(i).copied().unwrap_or(0);
            (x + p - y) % p
        })
        .collect();
    trim(out)
}

pub(crate) fn mul(a: &[u64], b: &[u64], p: u64) -> FpPoly {
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x * y) % p;
        }
    }
    trim(out)
}

pub(crate) fn eval(a: &[u64], x: u64, p: u64) -> u64 {
    a.iter().rev().fold(0, |acc, &c| (acc * x + c) % p)
}

/// Remainder of `a` modulo a nonzero `m`.
pub(crate) fn rem(a: &[u64], m: &[u64], p: u64) -> FpPoly {
    let dm = degree(m).expect("nonzero modulus");
    let lead_inv = inv_mod(m[dm], p);
    let mut r = trim(a.to_vec());
    while let Some(dr) = degree(&r) {
        if dr < dm {
            break;
        }
        let c = r[dr] * lead_inv % p;
        for i in 0..=dm {
            let t = c * m[i] % p;
            r[dr - dm + i] = (r[dr - dm + i] + p - t) % p;
        }
        r = trim(r);
    }
    r
}

pub(crate) fn gcd(a: &[u64], b: &[u64], p: u64) -> FpPoly {
    let (mut x, mut y) = (trim(a.to_vec()), trim(b.to_vec()));
    while degree(&y).is_some() {
        let r = rem(&x, &y, p);
        x = y;
        y = r;
    }
    x
}

/// `x^(p^k) mod m`.
fn frobenius_power_of_x(k: u32, m: &[u64], p: u64) -> FpPoly {
    let mut y = rem(&[0, 1], m, p);
    for _ in 0..k {
        // y <- y^p by square-and-multiply.
        let mut acc = vec![1u64];
        let mut base = y.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                acc = rem(&mul(&acc, &base, p), m, p);
            }
            base = rem(&mul(&base, &base, p), m, p);
            e >>= 1;
        }
        y = acc;
    }
    y
}

fn prime_divisors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            out.push(d);
            while n.is_multiple_of(d) {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's test for a polynomial of positive degree.
pub(crate) fn is_irreducible(f: &[u64], p: u64) -> bool {
    let Some(n) = degree(f) else { return false };
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    let x = vec![0u64, 1];
    let full = frobenius_power_of_x(n as u32, f, p);
    if degree(&sub(&full, &rem(&x, f, p), p)).is_some() {
        return false;
    }
    prime_divisors(n).into_iter().all(|r| {
        let y = frobenius_power_of_x((n / r) as u32, f, p);
        let g = gcd(f, &sub(&y, &x, p), p);
        degree(&g) == Some(0)
    })
}

/// Whether `f` (positive degree) is a power `g^k` with `g` irreducible and
/// `k >= 2`. Such residual polynomials leave irreducibility undecided.
pub(crate) fn is_proper_power_of_irreducible(f: &[u64], p: u64) -> bool {
    let Some(n) = degree(f) else { return false };
    (1..n).filter(|d| n % d == 0).any(|d| {
        // Candidate g: monic irreducible factor of degree d dividing f.
        irreducible_factor_of_degree(f, d, p).is_some_and(|g| {
            let k = n / d;
            let mut pow = vec![1u64];
            for _ in 0..k {
                pow = mul(&pow, &g, p);
            }
            let lead = f[n];
            let scaled: FpPoly = pow.iter().map(|c| c * lead % p).collect();
            trim(scaled) == trim(f.to_vec())
        })
    })
}

/// Some monic irreducible factor of degree `d`, found by exhaustive search.
fn irreducible_factor_of_degree(f: &[u64], d: usize, p: u64) -> Option<FpPoly> {
    let count = (p as usize).pow(d as u32);
    (0..count).find_map(|idx| {
        let mut g: FpPoly = (0..d).map(|i| ((idx / (p as usize).pow(i as u32)) % p as usize) as u64).collect();
        g.push(1);
        (is_irreducible(&g, p) && degree(&rem(f, &g, p)).is_none()).then_some(g)
    })
}

/// First monic irreducible polynomial of degree `n` in lexicographic order of
/// its lower coefficients.
pub(crate) fn first_irreducible(n: usize, p: u64) -> FpPoly {
    let count = (p as usize).pow(n as u32);
    (0..count)
        .map(|idx| {
            let mut g: FpPoly =
                (0..n).map(|i| ((idx / (p as usize).pow(i as u32)) % p as usize) as u64).collect();
            g.push(1);
            g
        })
        .find(|g| is_irreducible(g, p))
        .expect("irreducible polynomials exist in every degree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn irreducibility_examples() {
        // x^2 + 1 is irreducible mod 3 but not mod 5.
        assert!(is_irreducible(&[1, 0, 1], 3));
        assert!(!is_irreducible(&[1, 0, 1], 5));
        // x^4 + x + 2 over F_3.
        let f = first_irreducible(4, 3);
        assert_eq!(degree(&f), Some(4));
        assert!(is_irreducible(&f, 3));
        // (x^2 + 1)^2 mod 3.
        let sq = mul(&[1, 0, 1], &[1, 0, 1], 3);
        assert!(!is_irreducible(&sq, 3));
        assert!(is_proper_power_of_irreducible(&sq, 3));
        assert!(!is_proper_power_of_irreducible(&mul(&[1, 1], &[2, 1], 3), 3));
    }

    #[test]
    fn count_of_irreducible_quadratics() {
        for p in [3u64, 5, 7] {
            let n = (0..p * p).filter(|&i| is_irreducible(&[i % p, i / p, 1], p)).count() as u64;
            assert_eq!(n, (p * p - p) / 2);
        }
    }
}
