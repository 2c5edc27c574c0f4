//! Exact rational scalars, dense matrices, conventional rank, and the
//! rank-one factor representation shared by every other module.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exact rational number: arbitrary-precision, always in lowest terms with a
/// positive denominator (maintained by `num_rational`).
pub type Rat = num_rational::BigRational;

/// Shorthand for an integer rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Shorthand for `p/q`. Panics on `q = 0`.
pub fn ratio(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

/// Parses `"p/q"` or `"p"` (optionally signed).
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    let parse_int = |t: &str, pos: usize| -> Result<BigInt> {
        BigInt::from_str(t.trim()).map_err(|_| Error::Parse {
            pos,
            msg: format!("invalid integer `{t}`"),
        })
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let num = parse_int(p, 0)?;
            let den = parse_int(q, p.len() + 1)?;
            if den.is_zero() {
                return Err(Error::DivisionByZero);
            }
            Ok(Rat::new(num, den))
        }
        None => Ok(Rat::from_integer(parse_int(s, 0)?)),
    }
}

/// Renders a rational as `"p/q"`, or `"p"` when the denominator is one.
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Extremely large values fall back to a quotient of approximations.
        let n = r.numer().to_f64().unwrap_or(f64::INFINITY);
        let d = r.denom().to_f64().unwrap_or(f64::INFINITY);
        n / d
    })
}

pub(crate) mod rat_serde {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rat, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&rat_to_string(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Rat, D::Error> {
        let s = String::deserialize(de)?;
        parse_rat(&s).map_err(|e| D::Error::custom(e.to_string()))
    }
}

/// Dense row-major matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Rat>,
}

impl fmt::Debug for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RatMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| rat_to_string(self.get(i, j)))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl RatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Rat::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch("ragged row lengths".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Convenience constructor from integer literals.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|row| row.iter().map(|&x| rat(x)).collect())
                .collect(),
        )
        .expect("literal rows have equal lengths")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Rat] {
        &self.entries
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|e| !e.is_negative())
    }

    pub fn max_entry(&self) -> Rat {
        self.entries
            .iter()
            .max()
            .cloned()
            .unwrap_or_else(Rat::zero)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(rat_to_f64).collect()
    }

    pub fn add_assign(&mut self, other: &RatMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += b;
        }
        Ok(())
    }

    /// Submatrix on the given (strictly increasing) row and column index sets.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> RatMatrix {
        let mut m = RatMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.set(a, b, self.get(i, j).clone());
            }
        }
        m
    }

    /// Conventional rank over the rationals via fraction-free (Bareiss-style)
    /// Gaussian elimination. Exact; no intermediate fraction growth beyond
    /// the minors of the input.
    pub fn rank(&self) -> usize {
        // Clear denominators row by row first so elimination runs on BigInt.
        let mut m: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|i| {
                let lcm = (0..self.cols).fold(BigInt::one(), |acc, j| {
                    num_integer::lcm(acc, self.get(i, j).denom().clone())
                });
                (0..self.cols)
                    .map(|j| {
                        let e = self.get(i, j);
                        e.numer() * (&lcm / e.denom())
                    })
                    .collect()
            })
            .collect();

        let (nr, nc) = (self.rows, self.cols);
        let mut rank = 0;
        let mut prev_pivot = BigInt::one();
        let mut row = 0;
        for col in 0..nc {
            if row == nr {
                break;
            }
            // Find a pivot in this column.
            let Some(p) = (row..nr).find(|&r| !m[r][col].is_zero()) else {
                continue;
            };
            m.swap(row, p);
            for r in row + 1..nr {
                for c in col + 1..nc {
                    let val = &m[row][col] * &m[r][c] - &m[r][col] * &m[row][c];
                    m[r][c] = &val / &prev_pivot;
                }
                m[r][col] = BigInt::zero();
            }
            prev_pivot = m[row][col].clone();
            row += 1;
            rank += 1;
        }
        rank
    }
}

pub fn rat_rank(a: &RatMatrix) -> usize {
    a.rank()
}

impl Serialize for RatMatrix {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            rows: usize,
            cols: usize,
            entries: Vec<Vec<String>>,
        }
        let entries = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| rat_to_string(self.get(i, j))).collect())
            .collect();
        Repr {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for RatMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            rows: usize,
            cols: usize,
            entries: Vec<Vec<String>>,
        }
        let repr = Repr::deserialize(de)?;
        if repr.entries.len() != repr.rows
            || repr.entries.iter().any(|r| r.len() != repr.cols)
        {
            return Err(D::Error::custom("entry grid does not match rows x cols"));
        }
        let mut entries = Vec::with_capacity(repr.rows * repr.cols);
        for row in &repr.entries {
            for s in row {
                entries.push(parse_rat(s).map_err(|e| D::Error::custom(e.to_string()))?);
            }
        }
        Ok(RatMatrix {
            rows: repr.rows,
            cols: repr.cols,
            entries,
        })
    }
}

/// One rank-one nonnegative factor, stored as an outer product `u * v^T`.
///
/// Canonical scaling: the first nonzero entry of `u` equals 1 (the scale is
/// pushed into `v`), so lexicographic comparison of factors is independent of
/// the internal split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankOneFactor {
    Exact {
        #[serde(with = "rat_vec_serde")]
        u: Vec<Rat>,
        #[serde(with = "rat_vec_serde")]
        v: Vec<Rat>,
    },
    Numeric {
        #[serde(with = "f64_vec_serde")]
        u: Vec<f64>,
        #[serde(with = "f64_vec_serde")]
        v: Vec<f64>,
    },
}

// Numeric entries travel as decimal strings; the `{:?}` formatting always
// carries a `.` or exponent, so the untagged decode never confuses them
// with exact rational strings.
mod f64_vec_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        strs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<f64>, D::Error> {
        let strs = Vec::<String>::deserialize(de)?;
        strs.iter()
            .map(|s| s.parse::<f64>().map_err(|e| D::Error::custom(e.to_string())))
            .collect()
    }
}

mod rat_vec_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rat], ser: S) -> std::result::Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(rat_to_string).collect();
        strs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<Rat>, D::Error> {
        let strs = Vec::<String>::deserialize(de)?;
        strs.iter()
            .map(|s| parse_rat(s).map_err(|e| D::Error::custom(e.to_string())))
            .collect()
    }
}

impl RankOneFactor {
    /// Builds an exact factor and applies the canonical scaling. Errors if
    /// any entry is negative.
    pub fn exact(u: Vec<Rat>, v: Vec<Rat>) -> Result<Self> {
        if u.iter().chain(&v).any(|x| x.is_negative()) {
            return Err(Error::TemplateMismatch(
                "rank-one factor with a negative entry".into(),
            ));
        }
        let mut f = RankOneFactor::Exact { u, v };
        f.canonicalize();
        Ok(f)
    }

    pub fn numeric(u: Vec<f64>, v: Vec<f64>) -> Self {
        let mut f = RankOneFactor::Numeric { u, v };
        f.canonicalize();
        f
    }

    fn canonicalize(&mut self) {
        match self {
            RankOneFactor::Exact { u, v } => {
                if let Some(pivot) = u.iter().find(|x| !x.is_zero()).cloned() {
                    for x in u.iter_mut() {
                        *x /= &pivot;
                    }
                    for y in v.iter_mut() {
                        *y *= &pivot;
                    }
                }
            }
            RankOneFactor::Numeric { u, v } => {
                if let Some(pivot) = u.iter().copied().find(|x| *x != 0.0) {
                    for x in u.iter_mut() {
                        *x /= pivot;
                    }
                    for y in v.iter_mut() {
                        *y *= pivot;
                    }
                }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, RankOneFactor::Exact { .. })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            RankOneFactor::Exact { u, v } => (u.len(), v.len()),
            RankOneFactor::Numeric { u, v } => (u.len(), v.len()),
        }
    }

    /// Dense matrix with entry `(i, j) = u[i] * v[j]`. Exact factors only.
    pub fn to_matrix(&self) -> Result<RatMatrix> {
        match self {
            RankOneFactor::Exact { u, v } => {
                let mut m = RatMatrix::zeros(u.len(), v.len());
                for (i, ui) in u.iter().enumerate() {
                    for (j, vj) in v.iter().enumerate() {
                        m.set(i, j, ui * vj);
                    }
                }
                Ok(m)
            }
            RankOneFactor::Numeric { .. } => Err(Error::ShapeMismatch(
                "numeric factor has no exact matrix form".into(),
            )),
        }
    }

    /// Dense f64 entries, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            RankOneFactor::Exact { u, v } => {
                let uf: Vec<f64> = u.iter().map(rat_to_f64).collect();
                let vf: Vec<f64> = v.iter().map(rat_to_f64).collect();
                uf.iter().flat_map(|x| vf.iter().map(move |y| x * y)).collect()
            }
            RankOneFactor::Numeric { u, v } => u
                .iter()
                .flat_map(|x| v.iter().map(move |y| x * y))
                .collect(),
        }
    }

    pub fn entry_f64(&self, i: usize, j: usize) -> f64 {
        match self {
            RankOneFactor::Exact { u, v } => rat_to_f64(&u[i]) * rat_to_f64(&v[j]),
            RankOneFactor::Numeric { u, v } => u[i] * v[j],
        }
    }

    pub fn entry_exact(&self, i: usize, j: usize) -> Option<Rat> {
        match self {
            RankOneFactor::Exact { u, v } => Some(&u[i] * &v[j]),
            RankOneFactor::Numeric { .. } => None,
        }
    }

    pub fn min_entry_f64(&self) -> f64 {
        let (min_u, max_u) = min_max(match self {
            RankOneFactor::Exact { u, .. } => u.iter().map(rat_to_f64).collect(),
            RankOneFactor::Numeric { u, .. } => u.clone(),
        });
        let (min_v, max_v) = min_max(match self {
            RankOneFactor::Exact { v, .. } => v.iter().map(rat_to_f64).collect(),
            RankOneFactor::Numeric { v, .. } => v.clone(),
        });
        // Entry extrema are attained at the vector extrema.
        [min_u * min_v, min_u * max_v, max_u * min_v, max_u * max_v]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

fn min_max(v: Vec<f64>) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Lexicographic comparison of the dense row-major entry sequences of the
/// represented matrices. Both factors must have the same shape and the same
/// exactness mode.
pub fn lex_compare(f: &RankOneFactor, g: &RankOneFactor) -> Result<Ordering> {
    if f.shape() != g.shape() {
        return Err(Error::ShapeMismatch(format!(
            "factor shapes {:?} vs {:?}",
            f.shape(),
            g.shape()
        )));
    }
    match (f, g) {
        (RankOneFactor::Exact { .. }, RankOneFactor::Exact { .. }) => {
            let (rows, cols) = f.shape();
            for i in 0..rows {
                for j in 0..cols {
                    let a = f.entry_exact(i, j).unwrap();
                    let b = g.entry_exact(i, j).unwrap();
                    match a.cmp(&b) {
                        Ordering::Equal => continue,
                        ord => return Ok(ord),
                    }
                }
            }
            Ok(Ordering::Equal)
        }
        (RankOneFactor::Numeric { .. }, RankOneFactor::Numeric { .. }) => {
            let (rows, cols) = f.shape();
            for i in 0..rows {
                for j in 0..cols {
                    let a = f.entry_f64(i, j);
                    let b = g.entry_f64(i, j);
                    match a.partial_cmp(&b).unwrap_or(Ordering::Equal) {
                        Ordering::Equal => continue,
                        ord => return Ok(ord),
                    }
                }
            }
            Ok(Ordering::Equal)
        }
        _ => Err(Error::ShapeMismatch(
            "cannot compare exact and numeric factors".into(),
        )),
    }
}
