//! Polynomial parsing and the two-sided normal form
//! `s_1 mu_1 + ... + s_l mu_l = s_{l+1} mu_{l+1} + ... + s_r mu_r`.
//!
//! Grammar (whitespace insignificant):
//! `poly := term (('+'|'-') term)*`
//! `term := [coeff] factor*`
//! `coeff := int ['/' int]`
//! `factor := ident ['^' uint]` with idents `x1`, `x2`, ...

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{rat_to_string, Rat};

/// Canonical polynomial: combined monomials with nonzero rational
/// coefficients over variables `x1 ... xn`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// `(coefficient, exponent vector of length n)`, sorted by exponent
    /// vector, descending.
    pub monomials: Vec<(Rat, Vec<u32>)>,
    pub n: usize,
}

impl Polynomial {
    pub fn evaluate(&self, point: &[Rat]) -> Result<Rat> {
        if point.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "polynomial has {} variables, point has {}",
                self.n,
                point.len()
            )));
        }
        let mut acc = Rat::zero();
        for (coeff, exps) in &self.monomials {
            let mut term = coeff.clone();
            for (x, &e) in point.iter().zip(exps) {
                for _ in 0..e {
                    term *= x;
                }
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Total degree sum per monomial, used in size accounting.
    pub fn degrees(&self) -> Vec<u32> {
        self.monomials
            .iter()
            .map(|(_, e)| e.iter().sum())
            .collect()
    }
}

/// One side's term in the normal form: a positive coefficient and an
/// explicit variable sequence (1-based indices; empty for a constant term).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalTerm {
    pub coeff: Rat,
    pub vars: Vec<usize>,
}

/// `f = 0` rewritten with the positive monomials on the left and the negated
/// negative monomials on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub left: Vec<NormalTerm>,
    pub right: Vec<NormalTerm>,
    pub n: usize,
}

impl NormalForm {
    pub fn term_count(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &NormalTerm> {
        self.left.iter().chain(self.right.iter())
    }

    /// Reconstructs the polynomial `sum(left) - sum(right)`.
    pub fn reconstruct(&self) -> Polynomial {
        let mut monomials: Vec<(Rat, Vec<u32>)> = Vec::new();
        let mut push = |coeff: Rat, vars: &[usize]| {
            let mut exps = vec![0u32; self.n];
            for &v in vars {
                exps[v - 1] += 1;
            }
            monomials.push((coeff, exps));
        };
        for t in &self.left {
            push(t.coeff.clone(), &t.vars);
        }
        for t in &self.right {
            push(-t.coeff.clone(), &t.vars);
        }
        canonicalize(monomials, self.n)
    }
}

mod normal_form_serde {
    use super::*;
    use crate::exact::parse_rat;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct TermRepr {
        coeff: String,
        vars: Vec<usize>,
    }

    #[derive(Serialize, Deserialize)]
    struct Repr {
        left: Vec<TermRepr>,
        right: Vec<TermRepr>,
        n: usize,
    }

    fn to_repr(terms: &[NormalTerm]) -> Vec<TermRepr> {
        terms
            .iter()
            .map(|t| TermRepr {
                coeff: rat_to_string(&t.coeff),
                vars: t.vars.clone(),
            })
            .collect()
    }

    fn from_repr(terms: Vec<TermRepr>) -> Result<Vec<NormalTerm>> {
        terms
            .into_iter()
            .map(|t| {
                Ok(NormalTerm {
                    coeff: parse_rat(&t.coeff)?,
                    vars: t.vars,
                })
            })
            .collect()
    }

    impl Serialize for NormalForm {
        fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
            Repr {
                left: to_repr(&self.left),
                right: to_repr(&self.right),
                n: self.n,
            }
            .serialize(ser)
        }
    }

    impl<'de> Deserialize<'de> for NormalForm {
        fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
            let r = Repr::deserialize(de)?;
            Ok(NormalForm {
                left: from_repr(r.left).map_err(|e| D::Error::custom(e.to_string()))?,
                right: from_repr(r.right).map_err(|e| D::Error::custom(e.to_string()))?,
                n: r.n,
            })
        }
    }
}

fn canonicalize(monomials: Vec<(Rat, Vec<u32>)>, n: usize) -> Polynomial {
    let mut combined: Vec<(Vec<u32>, Rat)> = Vec::new();
    for (coeff, exps) in monomials {
        match combined.iter_mut().find(|(e, _)| *e == exps) {
            Some((_, c)) => *c += coeff,
            None => combined.push((exps, coeff)),
        }
    }
    combined.retain(|(_, c)| !c.is_zero());
    combined.sort_by(|(e1, _), (e2, _)| e2.cmp(e1));
    Polynomial {
        monomials: combined.into_iter().map(|(e, c)| (c, e)).collect(),
        n,
    }
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn uint(&mut self) -> Result<u64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected a number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("number too large"))
    }

    fn coeff(&mut self) -> Result<Rat> {
        let num = self.uint()?;
        if self.peek() == Some(b'/') {
            self.pos += 1;
            let den = self.uint()?;
            if den == 0 {
                return Err(self.err("zero denominator"));
            }
            Ok(Rat::new(num.into(), den.into()))
        } else {
            Ok(Rat::from_integer(num.into()))
        }
    }

    /// `x<digits>`; returns the 1-based variable index.
    fn ident(&mut self) -> Result<usize> {
        self.skip_ws();
        if self.bytes.get(self.pos) != Some(&b'x') {
            return Err(self.err("expected a variable `x<k>`"));
        }
        self.pos += 1;
        let idx = self.uint()? as usize;
        if idx == 0 {
            return Err(self.err("variable indices start at 1"));
        }
        Ok(idx)
    }
}

/// Parses the textual polynomial into canonical combined form. Rejects the
/// zero polynomial (its zero locus is everything).
pub fn parse_poly(text: &str) -> Result<Polynomial> {
    let mut sc = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
    };
    // (coefficient, list of (var index, power))
    let mut raw: Vec<(Rat, Vec<(usize, u32)>)> = Vec::new();
    let mut sign = Rat::one();
    // Optional leading sign.
    if sc.peek() == Some(b'-') {
        sign = -sign;
        sc.pos += 1;
    } else if sc.peek() == Some(b'+') {
        sc.pos += 1;
    }
    loop {
        // One term: optional coefficient, then factors.
        let mut coeff = sign.clone();
        let mut saw_anything = false;
        if matches!(sc.peek(), Some(c) if c.is_ascii_digit()) {
            coeff *= sc.coeff()?;
            saw_anything = true;
        }
        let mut powers: Vec<(usize, u32)> = Vec::new();
        while sc.peek() == Some(b'x') {
            let idx = sc.ident()?;
            let power = if sc.peek() == Some(b'^') {
                sc.pos += 1;
                let p = sc.uint()?;
                u32::try_from(p).map_err(|_| sc.err("exponent too large"))?
            } else {
                1
            };
            powers.push((idx, power));
            saw_anything = true;
        }
        if !saw_anything {
            return Err(sc.err("expected a term"));
        }
        raw.push((coeff, powers));

        match sc.peek() {
            None => break,
            Some(b'+') => {
                sign = Rat::one();
                sc.pos += 1;
            }
            Some(b'-') => {
                sign = -Rat::one();
                sc.pos += 1;
            }
            Some(c) => return Err(sc.err(format!("unexpected character `{}`", c as char))),
        }
    }

    let n = raw
        .iter()
        .flat_map(|(_, ps)| ps.iter().map(|&(i, _)| i))
        .max()
        .unwrap_or(0);
    let monomials = raw
        .into_iter()
        .map(|(coeff, ps)| {
            let mut exps = vec![0u32; n];
            for (idx, power) in ps {
                exps[idx - 1] += power;
            }
            (coeff, exps)
        })
        .collect();
    let poly = canonicalize(monomials, n);
    if poly.monomials.is_empty() {
        return Err(Error::ZeroPolynomial);
    }
    Ok(poly)
}

/// Splits `f = 0` into the two-sided normal form, expanding each monomial
/// into an explicit variable sequence (`x^2` becomes `x, x`). Constant terms
/// become empty sequences.
pub fn normalize(f: &Polynomial) -> NormalForm {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (coeff, exps) in &f.monomials {
        let mut vars = Vec::new();
        for (i, &e) in exps.iter().enumerate() {
            for _ in 0..e {
                vars.push(i + 1);
            }
        }
        if coeff.is_positive() {
            left.push(NormalTerm {
                coeff: coeff.clone(),
                vars,
            });
        } else {
            right.push(NormalTerm {
                coeff: -coeff.clone(),
                vars,
            });
        }
    }
    NormalForm {
        left,
        right,
        n: f.n,
    }
}

pub fn poly_to_string(f: &Polynomial) -> String {
    let mut out = String::new();
    for (idx, (coeff, exps)) in f.monomials.iter().enumerate() {
        let neg = coeff.is_negative();
        let mag = coeff.abs();
        if idx == 0 {
            if neg {
                out.push_str("-");
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let vars: Vec<String> = exps
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| {
                if e == 1 {
                    format!("x{}", i + 1)
                } else {
                    format!("x{}^{}", i + 1, e)
                }
            })
            .collect();
        if vars.is_empty() || !mag.is_one() {
            out.push_str(&rat_to_string(&mag));
            if !vars.is_empty() {
                out.push(' ');
            }
        }
        out.push_str(&vars.join(" "));
    }
    out
}
