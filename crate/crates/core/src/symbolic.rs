//! Admissible words over the symbols 1..=m and the shadowing families.
//!
//! A word marks a periodic orbit once a starting point and an orientation are
//! fixed; the canonical form quotients both out so a spectrum store never
//! holds the same geometric orbit twice.

use std::fmt;

use crate::error::{Error, Result};

/// A finite admissible symbol sequence: no equal neighbours, cyclically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    symbols: Vec<u32>,
}

impl Word {
    pub fn new(symbols: Vec<u32>, m: u32) -> Result<Self> {
        for &s in &symbols {
            if s < 1 || s > m {
                return Err(Error::SymbolOutOfRange(s, m));
            }
        }
        if !is_admissible(&symbols) {
            return Err(Error::Inadmissible(render(&symbols)));
        }
        Ok(Word { symbols })
    }

    /// Parse the CLI rendering: digit string for symbols <= 9, comma-separated
    /// otherwise.
    pub fn parse(text: &str, m: u32) -> Result<Self> {
        let symbols: Vec<u32> = if text.contains(',') {
            text.split(',')
                .map(|p| p.trim().parse::<u32>().map_err(|_| Error::Inadmissible(text.into())))
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| c.to_digit(10).ok_or_else(|| Error::Inadmissible(text.into())))
                .collect::<Result<_>>()?
        };
        Word::new(symbols, m)
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The same trajectory traversed backwards.
    pub fn transpose(&self) -> Word {
        let mut symbols = self.symbols.clone();
        symbols.reverse();
        Word { symbols }
    }

    pub fn rotate(&self, k: usize) -> Word {
        let n = self.symbols.len();
        let symbols = (0..n).map(|i| self.symbols[(i + k) % n]).collect();
        Word { symbols }
    }

    /// True if some rotation reads (s1 .. s_{q-1} s_q s_{q-1} .. s1 s0):
    /// a palindrome anchored at the two centers s0 and s_q.
    pub fn is_palindromic(&self) -> bool {
        let p = self.symbols.len();
        if p % 2 != 0 {
            return false;
        }
        'outer: for r in 0..p {
            let w = self.rotate(r);
            // candidate centers at positions 0 and p/2 of the rotated word;
            // require w[i] == w[p - i] for i = 1..p/2.
            for i in 1..p / 2 {
                if w.symbols[i] != w.symbols[p - i] {
                    continue 'outer;
                }
            }
            return true;
        }
        false
    }

    /// Indices of the two palindromic centers (perpendicular bounces), for the
    /// first rotation that exhibits the symmetry. Returned in the word's own
    /// indexing. None if the word is not palindromic.
    pub fn palindromic_centers(&self) -> Option<(usize, usize)> {
        let p = self.symbols.len();
        if p % 2 != 0 {
            return None;
        }
        'outer: for r in 0..p {
            let w = self.rotate(r);
            for i in 1..p / 2 {
                if w.symbols[i] != w.symbols[p - i] {
                    continue 'outer;
                }
            }
            return Some((r % p, (r + p / 2) % p));
        }
        None
    }

    pub fn canonicalize(&self) -> CanonicalWord {
        let n = self.symbols.len();
        let t = self.transpose();
        let mut best: Option<Word> = None;
        for k in 0..n {
            for cand in [self.rotate(k), t.rotate(k)] {
                if best.as_ref().map_or(true, |b| cand < *b) {
                    best = Some(cand);
                }
            }
        }
        CanonicalWord(best.expect("non-empty word"))
    }

    /// Word repeated n times (same geometric orbit traversed n times).
    pub fn repeat(&self, n: usize) -> Word {
        let mut symbols = Vec::with_capacity(self.symbols.len() * n);
        for _ in 0..n {
            symbols.extend_from_slice(&self.symbols);
        }
        Word { symbols }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.symbols))
    }
}

fn render(symbols: &[u32]) -> String {
    if symbols.iter().all(|&s| s <= 9) {
        symbols.iter().map(|s| s.to_string()).collect()
    } else {
        symbols
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Cyclic admissibility: no equal neighbours, first != last.
pub fn is_admissible(symbols: &[u32]) -> bool {
    let p = symbols.len();
    if p < 2 {
        return false;
    }
    for j in 0..p {
        if symbols[j] == symbols[(j + 1) % p] {
            return false;
        }
    }
    true
}

/// Lexicographically minimal representative over all rotations of the word
/// and of its transpose.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalWord(Word);

impl CanonicalWord {
    pub fn word(&self) -> &Word {
        &self.0
    }
}

impl fmt::Display for CanonicalWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The period-two shadowing family (tau1 sigma0 | (sigma1 sigma0)^n) with the
/// three-symbol convention tau1 = 3, sigma = (1 2): word (32|(12)^n), length
/// 2n + 2.
pub fn build_hn(n: usize) -> Word {
    build_tau_sigma_n(
        &Word::new(vec![1, 2], 3).expect("(12) is admissible"),
        3,
        n,
        3,
    )
    .expect("default family is admissible")
}

/// The Theorem-A family word tau sigma^n = (tau1 sigma0 | sigma^n) for a
/// period-two sigma = (sigma1 sigma0). Length 2n + 2.
pub fn build_tau_sigma_n(sigma: &Word, tau1: u32, n: usize, m: u32) -> Result<Word> {
    if sigma.len() != 2 {
        return Err(Error::InadmissibleTau(format!(
            "tau-sigma-n family needs a period-two sigma, got {sigma}"
        )));
    }
    let s1 = sigma.symbols()[0];
    let s0 = sigma.symbols()[1];
    if tau1 == s0 || tau1 == s1 {
        return Err(Error::InadmissibleTau(format!(
            "tau1 = {tau1} must differ from both symbols of sigma = {sigma}"
        )));
    }
    let mut symbols = vec![tau1, s0];
    for _ in 0..n {
        symbols.push(s1);
        symbols.push(s0);
    }
    Word::new(symbols, m)
}

/// The general-period family h_n'(sigma, tau) = (tau+ sigma^n tau- sigmabar^n);
/// length 2np + 2. Constraints: tau+ != sigma_1 and tau- != sigma_p.
pub fn build_hn_general(sigma: &Word, tau: (u32, u32), n: usize, m: u32) -> Result<Word> {
    let (tau_minus, tau_plus) = tau;
    let s_first = sigma.symbols()[0];
    let s_last = *sigma.symbols().last().expect("non-empty word");
    if tau_plus == s_first {
        return Err(Error::InadmissibleTau(format!(
            "tau+ = {tau_plus} collides with the first symbol of sigma = {sigma}"
        )));
    }
    if tau_minus == s_last {
        return Err(Error::InadmissibleTau(format!(
            "tau- = {tau_minus} collides with the last symbol of sigma = {sigma}"
        )));
    }
    if n == 0 && tau_plus == tau_minus {
        return Err(Error::InadmissibleTau(
            "n = 0 with tau+ = tau- collapses to an inadmissible doubled symbol".into(),
        ));
    }
    let mut symbols = vec![tau_plus];
    for _ in 0..n {
        symbols.extend_from_slice(sigma.symbols());
    }
    symbols.push(tau_minus);
    let rev: Vec<u32> = sigma.symbols().iter().rev().copied().collect();
    for _ in 0..n {
        symbols.extend_from_slice(&rev);
    }
    Word::new(symbols, m)
}
