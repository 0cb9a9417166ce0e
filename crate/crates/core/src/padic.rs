//! Cardinalities written in base `p`, and elements that carry them.
//!
//! Echo instances contain multisets with `p^(p^k1 + … + p^kn)` copies of an
//! element. Such numbers are far too large to expand, but every operation
//! the enumeration and the echo conditions need (addition, multiplication,
//! p-power tests, division by a p-power, block decomposition) is cheap on
//! the base-`p` digit expansion with big-integer exponents.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::semantics::{Element, MSet};

/// A natural number `Σ d_e · p^e` stored as its non-zero base-`p` digits
/// `e ↦ d_e` with `1 ≤ d_e < p`. The representation is canonical, so the
/// derived equality is numeric equality (for a fixed base).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SymCount {
    p: u64,
    digits: BTreeMap<BigUint, u64>,
}

impl SymCount {
    pub fn zero(p: u64) -> Self {
        assert!(p >= 2, "base must be at least 2");
        SymCount { p, digits: BTreeMap::new() }
    }

    pub fn one(p: u64) -> Self {
        SymCount::from_u64(1, p)
    }

    pub fn from_u64(n: u64, p: u64) -> Self {
        let mut out = SymCount::zero(p);
        let mut n = n;
        let mut e = 0u64;
        while n > 0 {
            let d = n % p;
            if d != 0 {
                out.digits.insert(BigUint::from(e), d);
            }
            n /= p;
            e += 1;
        }
        out
    }

    pub fn from_biguint(n: &BigUint, p: u64) -> Self {
        let mut out = SymCount::zero(p);
        let mut n = n.clone();
        let pb = BigUint::from(p);
        let mut e = 0u64;
        while !n.is_zero() {
            let d = (&n % &pb).to_u64().expect("digit fits");
            if d != 0 {
                out.digits.insert(BigUint::from(e), d);
            }
            n /= &pb;
            e += 1;
        }
        out
    }

    /// `p^e`.
    pub fn p_pow(p: u64, e: BigUint) -> Self {
        let mut out = SymCount::zero(p);
        out.digits.insert(e, 1);
        out
    }

    /// `p^(p^k)`.
    pub fn double_pow(p: u64, k: u64) -> Self {
        SymCount::p_pow(p, BigUint::from(p).pow(k as u32))
    }

    pub fn base(&self) -> u64 {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    /// Non-zero digits `(exponent, digit)` in increasing exponent order.
    pub fn digits(&self) -> impl Iterator<Item = (&BigUint, u64)> {
        self.digits.iter().map(|(e, d)| (e, *d))
    }

    /// Sum of the digits: the number of p-power blocks in the canonical
    /// block decomposition.
    pub fn digit_sum(&self) -> u64 {
        self.digits.values().sum()
    }

    fn add_digit(&mut self, e: BigUint, d: u64) {
        let mut e = e;
        let mut carry = d;
        while carry > 0 {
            let cur = self.digits.remove(&e).unwrap_or(0);
            let s = cur + carry;
            let (digit, next) = (s % self.p, s / self.p);
            if digit != 0 {
                self.digits.insert(e.clone(), digit);
            }
            carry = next;
            e += 1u32;
        }
    }

    pub fn add(&self, other: &SymCount) -> SymCount {
        assert_eq!(self.p, other.p, "mixed bases");
        let mut out = self.clone();
        for (e, d) in &other.digits {
            out.add_digit(e.clone(), *d);
        }
        out
    }

    pub fn mul(&self, other: &SymCount) -> SymCount {
        assert_eq!(self.p, other.p, "mixed bases");
        let mut out = SymCount::zero(self.p);
        for (e1, d1) in &self.digits {
            for (e2, d2) in &other.digits {
                let prod = (*d1 as u128) * (*d2 as u128);
                let p = self.p as u128;
                let (lo, hi) = ((prod % p) as u64, (prod / p) as u64);
                let e = e1 + e2;
                if lo != 0 {
                    out.add_digit(e.clone(), lo);
                }
                if hi != 0 {
                    out.add_digit(e + 1u32, hi);
                }
            }
        }
        out
    }

    /// Multiply by a small natural number.
    pub fn scale(&self, k: u64) -> SymCount {
        self.mul(&SymCount::from_u64(k, self.p))
    }

    /// Subtraction without borrows: succeeds only when every digit of
    /// `other` is at most the corresponding digit of `self`, or when both
    /// values are small enough to subtract directly.
    pub fn checked_sub(&self, other: &SymCount) -> Option<SymCount> {
        if let (Some(a), Some(b)) = (self.to_u64(), other.to_u64()) {
            return a.checked_sub(b).map(|d| SymCount::from_u64(d, self.p));
        }
        let mut out = self.clone();
        for (e, d) in &other.digits {
            let cur = out.digits.get(e).copied().unwrap_or(0);
            if cur < *d {
                return None;
            }
            if cur == *d {
                out.digits.remove(e);
            } else {
                out.digits.insert(e.clone(), cur - d);
            }
        }
        Some(out)
    }

    /// The exponent `e` when this number is exactly `p^e`.
    pub fn p_power_exponent(&self) -> Option<&BigUint> {
        if self.digits.len() == 1 {
            let (e, d) = self.digits.iter().next().expect("one digit");
            if *d == 1 {
                return Some(e);
            }
        }
        None
    }

    /// The `k` when this number is exactly `p^(p^k)`.
    pub fn double_power_exponent(&self) -> Option<u64> {
        let e = self.p_power_exponent()?;
        let digits = SymCount::from_biguint(e, self.p);
        let k = digits.p_power_exponent()?;
        k.to_u64()
    }

    /// `self / p^l` when the division is exact.
    pub fn div_p_power(&self, l: &BigUint) -> Option<SymCount> {
        let mut out = SymCount::zero(self.p);
        for (e, d) in &self.digits {
            if e < l {
                return None;
            }
            out.digits.insert(e - l, *d);
        }
        Some(out)
    }

    /// The value, when it fits in a `u64`.
    pub fn to_u64(&self) -> Option<u64> {
        let mut acc: u64 = 0;
        for (e, d) in &self.digits {
            let e = e.to_u32()?;
            let pe = self.p.checked_pow(e)?;
            acc = acc.checked_add(pe.checked_mul(*d)?)?;
        }
        Some(acc)
    }

    /// The value as a big integer, when its largest exponent is at most
    /// `max_exponent`.
    pub fn to_biguint(&self, max_exponent: u32) -> Option<BigUint> {
        let mut acc = BigUint::zero();
        for (e, d) in &self.digits {
            let e = e.to_u32().filter(|e| *e <= max_exponent)?;
            acc += BigUint::from(self.p).pow(e) * *d;
        }
        Some(acc)
    }

    /// The residue modulo `p`: the digit at exponent 0.
    pub fn residue(&self) -> u64 {
        self.digits.get(&BigUint::zero()).copied().unwrap_or(0)
    }

    fn fmt_exponent(e: &BigUint, p: u64) -> String {
        let ed = SymCount::from_biguint(e, p);
        let mut terms = Vec::new();
        for (t, d) in ed.digits.iter() {
            let term = format!("p^{t}");
            if d == &1 {
                terms.push(term);
            } else {
                terms.push(format!("{d}*{term}"));
            }
        }
        if terms.len() == 1 && !terms[0].contains('*') {
            format!("p^({})", terms[0])
        } else {
            format!("p^({})", terms.join(" + "))
        }
    }
}

impl PartialOrd for SymCount {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Numeric order (the base is compared first so the order is total).
impl Ord for SymCount {
    fn cmp(&self, other: &Self) -> Ordering {
        self.p.cmp(&other.p).then_with(|| {
            let mut a = self.digits.iter().rev();
            let mut b = other.digits.iter().rev();
            loop {
                match (a.next(), b.next()) {
                    (None, None) => return Ordering::Equal,
                    (Some(_), None) => return Ordering::Greater,
                    (None, Some(_)) => return Ordering::Less,
                    (Some((e1, d1)), Some((e2, d2))) => {
                        let c = e1.cmp(e2).then(d1.cmp(d2));
                        if c != Ordering::Equal {
                            return c;
                        }
                    }
                }
            }
        })
    }
}

/// Small values print as decimals; large ones as sums of `d*p^(…)` terms
/// whose exponents are themselves written in base `p`.
impl fmt::Display for SymCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(v) = self.to_u64().filter(|v| *v < 1_000_000) {
            if self.digits.keys().all(|e| e.is_zero()) || v < self.p {
                return write!(f, "{v}");
            }
        }
        if self.digits.is_empty() {
            return write!(f, "0");
        }
        let mut terms = Vec::new();
        for (e, d) in self.digits.iter().rev() {
            let base = if e.is_zero() { String::new() } else { SymCount::fmt_exponent(e, self.p) };
            terms.push(match (base.is_empty(), *d) {
                (true, d) => format!("{d}"),
                (false, 1) => base,
                (false, d) => format!("{d}*{base}"),
            });
        }
        write!(f, "{}", terms.join(" + "))
    }
}

/// A member of an interpreted object whose multiplicities are [`SymCount`]s.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum PElem {
    Atom(String),
    Star,
    Pair(Box<PElem>, Box<PElem>),
    Bag(BTreeMap<PElem, SymCount>),
    Bar(Box<PElem>),
}

impl PElem {
    pub fn atom(s: &str) -> Self {
        PElem::Atom(s.to_string())
    }
    pub fn pair(a: PElem, b: PElem) -> Self {
        PElem::Pair(Box::new(a), Box::new(b))
    }
    pub fn bar(a: PElem) -> Self {
        PElem::Bar(Box::new(a))
    }
    pub fn empty() -> Self {
        PElem::Bag(BTreeMap::new())
    }

    /// A homogeneous bag `{x : n}` (empty when `n = 0`).
    pub fn block(x: PElem, n: SymCount) -> Self {
        let mut m = BTreeMap::new();
        if !n.is_zero() {
            m.insert(x, n);
        }
        PElem::Bag(m)
    }

    pub fn from_element(e: &Element, p: u64) -> Self {
        match e {
            Element::Atom(a) => PElem::Atom(a.clone()),
            Element::Star => PElem::Star,
            Element::Pair(a, b) => PElem::pair(PElem::from_element(a, p), PElem::from_element(b, p)),
            Element::Bar(a) => PElem::bar(PElem::from_element(a, p)),
            Element::MSet(m) => PElem::Bag(
                m.iter().map(|(x, n)| (PElem::from_element(x, p), SymCount::from_biguint(n, p))).collect(),
            ),
        }
    }

    /// The explicit element, when every multiplicity is small enough to
    /// expand (largest exponent at most `max_exponent`).
    pub fn to_element(&self, max_exponent: u32) -> Option<Element> {
        Some(match self {
            PElem::Atom(a) => Element::Atom(a.clone()),
            PElem::Star => Element::Star,
            PElem::Pair(a, b) => Element::pair(a.to_element(max_exponent)?, b.to_element(max_exponent)?),
            PElem::Bar(a) => Element::bar(a.to_element(max_exponent)?),
            PElem::Bag(m) => {
                let mut out = MSet::new();
                for (x, n) in m {
                    out.insert(x.to_element(max_exponent)?, n.to_biguint(max_exponent)?);
                }
                Element::MSet(out)
            }
        })
    }

    /// The same member with every bar removed.
    pub fn unbarred(&self) -> PElem {
        match self {
            PElem::Atom(_) | PElem::Star => self.clone(),
            PElem::Pair(a, b) => PElem::pair(a.unbarred(), b.unbarred()),
            PElem::Bar(a) => a.unbarred(),
            PElem::Bag(m) => {
                let mut out: BTreeMap<PElem, SymCount> = BTreeMap::new();
                for (x, n) in m {
                    let k = x.unbarred();
                    let v = match out.remove(&k) {
                        Some(c) => c.add(n),
                        None => n.clone(),
                    };
                    out.insert(k, v);
                }
                PElem::Bag(out)
            }
        }
    }

    pub fn as_bag(&self) -> Option<&BTreeMap<PElem, SymCount>> {
        match self {
            PElem::Bag(m) => Some(m),
            PElem::Bar(a) => a.as_bag(),
            _ => None,
        }
    }

    /// Cardinality of a bag, in base `p`.
    pub fn cardinality(&self, p: u64) -> Option<SymCount> {
        self.as_bag().map(|m| m.values().fold(SymCount::zero(p), |acc, n| acc.add(n)))
    }

    /// Bag union.
    pub fn bag_sum(a: &BTreeMap<PElem, SymCount>, b: &BTreeMap<PElem, SymCount>) -> BTreeMap<PElem, SymCount> {
        let mut out = a.clone();
        for (x, n) in b {
            let v = match out.remove(x) {
                Some(c) => c.add(n),
                None => n.clone(),
            };
            out.insert(x.clone(), v);
        }
        out
    }
}

impl fmt::Display for PElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PElem::Atom(a) => write!(f, "{a}"),
            PElem::Star => write!(f, "*"),
            PElem::Pair(a, b) => write!(f, "({a},{b})"),
            PElem::Bar(a) => write!(f, "bar({a})"),
            PElem::Bag(m) => {
                write!(f, "{{")?;
                for (i, (x, n)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    if n.to_u64() == Some(1) {
                        write!(f, "{x}")?;
                    } else {
                        write!(f, "{x}:{n}")?;
                    }
                }
                write!(f, "}}")
            }
        }
    }
}

/// Is `n` prime? (Trial division; the primes used here are small.)
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The smallest prime strictly greater than `n`.
pub fn next_prime_above(n: u64) -> u64 {
    let mut q = n + 1;
    while !is_prime(q) {
        q += 1;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carries_and_products() {
        let p = 3;
        let a = SymCount::from_u64(8, p);
        let b = SymCount::from_u64(7, p);
        assert_eq!(a.add(&b).to_u64(), Some(15));
        assert_eq!(a.mul(&b).to_u64(), Some(56));
        assert_eq!(SymCount::from_u64(27, p).p_power_exponent(), Some(&BigUint::from(3u32)));
        assert_eq!(SymCount::from_u64(27, p).double_power_exponent(), Some(1));
        assert_eq!(SymCount::from_u64(3, p).double_power_exponent(), Some(0));
        assert_eq!(SymCount::from_u64(9, p).double_power_exponent(), None);
    }

    #[test]
    fn symbolic_display() {
        let p = 5;
        let n = SymCount::p_pow(p, BigUint::from(5u32).pow(3) + BigUint::from(5u32));
        assert_eq!(n.to_string(), "p^(p^1 + p^3)");
        assert_eq!(SymCount::double_pow(p, 7).to_string(), "p^(p^7)");
        assert_eq!(SymCount::from_u64(3, p).to_string(), "3");
    }

    #[test]
    fn huge_exponents_stay_cheap() {
        let p = 7;
        let a = SymCount::double_pow(p, 40);
        let b = SymCount::double_pow(p, 41);
        let prod = a.mul(&b);
        let e = prod.p_power_exponent().unwrap();
        assert_eq!(e, &(BigUint::from(7u32).pow(40) + BigUint::from(7u32).pow(41)));
        assert!(a < b);
        assert_eq!(prod.div_p_power(&BigUint::from(7u32).pow(40)), Some(b));
    }
}
