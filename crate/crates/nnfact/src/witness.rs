//! Forward map (root to exact factorization) and backward map
//! (factorization to root).
//!
//! The factor templates here are the heart of the construction: for every
//! gadget there is a fixed family of rank-one factors, rational in the
//! variable values, whose sum reproduces the gadget cells exactly. The
//! builder instantiates the templates layer by layer and certifies itself by
//! comparing the exact sum against the compiled matrix entrywise.

use std::cmp::Ordering;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::compiler::{Block, Instance, Layer};
use crate::error::{Error, Result};
use crate::exact::{lex_compare, rat_to_f64, RankOneFactor, Rat, RatMatrix};
use crate::gadgets::{GammaTrace, ProductTrace, SumTrace, VarGadgetTrace};
use crate::incomplete::Assignment;

/// Ordered list of `k` rank-one nonnegative factors, strictly decreasing
/// under the lexicographic factor order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub k: usize,
    pub exact: bool,
    pub factors: Vec<RankOneFactor>,
}

impl Factorization {
    /// Sorts the factors into canonical (descending) order and rejects ties.
    /// All factors must share one shape and one exactness mode.
    pub fn new(mut factors: Vec<RankOneFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInstance("empty factor list".into()));
        }
        let exact = factors[0].is_exact();
        let shape = factors[0].shape();
        for f in &factors {
            if f.is_exact() != exact || f.shape() != shape {
                return Err(Error::ShapeMismatch(
                    "factors disagree in shape or exactness".into(),
                ));
            }
        }
        let mut cmp_err = None;
        factors.sort_by(|a, b| match lex_compare(a, b) {
            Ok(ord) => ord.reverse(),
            Err(e) => {
                cmp_err = Some(e);
                Ordering::Equal
            }
        });
        if let Some(e) = cmp_err {
            return Err(e);
        }
        for w in factors.windows(2) {
            if lex_compare(&w[0], &w[1])? == Ordering::Equal {
                return Err(Error::DegenerateFactorization);
            }
        }
        Ok(Factorization {
            k: factors.len(),
            exact,
            factors,
        })
    }

    /// Checks the stored header against the factor list (after JSON input).
    pub fn validate(&self) -> Result<()> {
        if self.k != self.factors.len()
            || self.factors.iter().any(|f| f.is_exact() != self.exact)
        {
            return Err(Error::InvalidInstance(
                "factorization header disagrees with the factor list".into(),
            ));
        }
        Ok(())
    }

    /// Exact entrywise sum of the factors.
    pub fn sum_exact(&self) -> Result<RatMatrix> {
        let (rows, cols) = self.factors[0].shape();
        let mut acc = RatMatrix::zeros(rows, cols);
        for f in &self.factors {
            acc.add_assign(&f.to_matrix()?)?;
        }
        Ok(acc)
    }

    /// Floating entrywise sum, row-major.
    pub fn sum_f64(&self) -> Vec<f64> {
        let (rows, cols) = self.factors[0].shape();
        let mut acc = vec![0.0; rows * cols];
        for f in &self.factors {
            for (a, x) in acc.iter_mut().zip(f.to_f64()) {
                *a += x;
            }
        }
        acc
    }

    /// Numeric copy (used by tests that feed exact witnesses to the
    /// floating-point paths).
    pub fn to_numeric(&self) -> Factorization {
        let factors = self
            .factors
            .iter()
            .map(|f| match f {
                RankOneFactor::Exact { u, v } => RankOneFactor::numeric(
                    u.iter().map(rat_to_f64).collect(),
                    v.iter().map(rat_to_f64).collect(),
                ),
                numeric => numeric.clone(),
            })
            .collect();
        Factorization {
            k: self.k,
            exact: false,
            factors,
        }
    }
}

/// Factor under construction: sparse outer-product pair in the coordinates
/// of the current (growing) matrix.
type Raw = (Vec<Rat>, Vec<Rat>);

struct Builder {
    rows: usize,
    cols: usize,
    factors: Vec<Raw>,
}

fn value(a: &Assignment, name: &str) -> Result<Rat> {
    a.get(name)
        .cloned()
        .ok_or_else(|| Error::MissingVariable(name.to_string()))
}

impl Builder {
    fn new(rows: usize, cols: usize) -> Self {
        Builder {
            rows,
            cols,
            factors: Vec::new(),
        }
    }

    fn blank(&self) -> Raw {
        (vec![Rat::zero(); self.rows], vec![Rat::zero(); self.cols])
    }

    /// The four factors closing a variable gadget whose blue entries carry
    /// the effective value `x`: with `s = N - x`,
    ///
    /// ```text
    /// f1 = (blue: s/M, n1: 1) (blue cols: M, d1: M, d2: M)
    /// f2 = (blue: 1 - s/M, n2: 1) (d2: M, d3: M)
    /// f3 = (blue: s/M, n3: 1) (d3: M, d4: M)
    /// f4 = (blue: 1 - s/M, n4: 1) (d1: M, d4: M)
    /// ```
    ///
    /// Each new column receives M in total, each blue cell receives `s`
    /// (the remaining `x` comes from the factors of the host block), and
    /// nonnegativity holds exactly when `0 <= s <= M`.
    fn push_var_gadget(&mut self, t: &VarGadgetTrace, x: &Rat) -> Result<()> {
        let s = &t.n - x;
        if s.is_negative() || s > t.m {
            return Err(Error::TemplateMismatch(format!(
                "variable gadget value outside [N - M, N] at row {}",
                t.blue_row
            )));
        }
        let lo = &s / &t.m;
        let hi = Rat::one() - &lo;
        let [n1, n2, n3, n4] = t.new_rows;
        let [d1, d2, d3, d4] = t.new_cols;

        let mut f1 = self.blank();
        f1.0[t.blue_row] = lo.clone();
        f1.0[n1] = Rat::one();
        for &bc in &t.blue_cols {
            f1.1[bc] = t.m.clone();
        }
        f1.1[d1] = t.m.clone();
        f1.1[d2] = t.m.clone();

        let mut f2 = self.blank();
        f2.0[t.blue_row] = hi.clone();
        f2.0[n2] = Rat::one();
        f2.1[d2] = t.m.clone();
        f2.1[d3] = t.m.clone();

        let mut f3 = self.blank();
        f3.0[t.blue_row] = lo;
        f3.0[n3] = Rat::one();
        f3.1[d3] = t.m.clone();
        f3.1[d4] = t.m.clone();

        let mut f4 = self.blank();
        f4.0[t.blue_row] = hi;
        f4.0[n4] = Rat::one();
        f4.1[d1] = t.m.clone();
        f4.1[d4] = t.m.clone();

        self.factors.extend([f1, f2, f3, f4]);
        Ok(())
    }

    /// Sum block: one core factor per term (`y`-row, `L`-row weighted by the
    /// coefficient, pinning row), then the variable gadget on each pinning
    /// row at the term's value.
    fn push_sum(&mut self, t: &SumTrace, a: &Assignment) -> Result<()> {
        for i in 0..t.term_count() {
            let y = match &t.slots[i] {
                Some(name) => value(a, name)?,
                None => Rat::one(),
            };
            let mut core = self.blank();
            core.0[t.y_rows[i]] = Rat::one();
            core.0[t.l_row] = t.coeffs[i].clone();
            if let Some(br) = t.blue_rows[i] {
                core.0[br] = Rat::one();
            }
            core.1[t.col0] = y.clone();
            core.1[t.unit_cols[i]] = Rat::one();
            self.factors.push(core);
            if let Some(vg) = &t.nested[i] {
                self.push_var_gadget(vg, &y)?;
            }
        }
        Ok(())
    }

    /// Product block: the 3x3 core as an outer product of `(u1, 1, 1)` and
    /// `(u2, 1, 1)`, then the two gadgets at the input values.
    fn push_product(&mut self, t: &ProductTrace, a: &Assignment) -> Result<()> {
        let u1 = value(a, &t.u1)?;
        let u2 = value(a, &t.u2)?;
        let mut core = self.blank();
        core.0[t.rows[0]] = u1.clone();
        core.0[t.rows[1]] = Rat::one();
        core.0[t.rows[2]] = Rat::one();
        core.1[t.cols[0]] = u2.clone();
        core.1[t.cols[1]] = Rat::one();
        core.1[t.cols[2]] = Rat::one();
        self.factors.push(core);
        self.push_var_gadget(&t.nested[0], &u1)?;
        self.push_var_gadget(&t.nested[1], &u2)
    }

    /// One Γ layer: re-embeds the existing factors along the row/column
    /// maps, then adds, with `c = 1/(M - x)`,
    ///
    /// - per occurrence `t` the reciprocal factor
    ///   `h_t = (green: 1, g_t: 1, occ row: M - x) (q_t: c, occ col: 1)`,
    /// - the green four-factor cycle closure with `s = N - c`
    ///   (the cycle rows act as the gadget rows for the green row, rotated
    ///   by one position, with every `q`-column blue for the first factor),
    /// - the nested variable gadget factors at value `c`.
    fn apply_gamma(&mut self, g: &GammaTrace, a: &Assignment) -> Result<()> {
        let x = value(a, &g.var)?;
        let denom = &g.m - &x;
        if !denom.is_positive() {
            return Err(Error::TemplateMismatch(format!(
                "value of `{}` reaches the layer parameter M",
                g.var
            )));
        }
        let c = denom.recip();

        let old = std::mem::take(&mut self.factors);
        self.rows = g.out_rows;
        self.cols = g.out_cols;
        for (u, v) in old {
            let mut nu = vec![Rat::zero(); self.rows];
            let mut nv = vec![Rat::zero(); self.cols];
            for (i, x) in u.into_iter().enumerate() {
                nu[g.row_map[i]] = x;
            }
            for (j, x) in v.into_iter().enumerate() {
                nv[g.col_map[j]] = x;
            }
            self.factors.push((nu, nv));
        }

        let green = g.t_rows[4];
        for t in 0..g.tau {
            let mut h = self.blank();
            h.0[green] = Rat::one();
            h.0[g.g_rows[t]] = Rat::one();
            h.0[g.occ_rows[t]] = denom.clone();
            h.1[g.q_cols[t]] = c.clone();
            h.1[g.occ_cols[t]] = Rat::one();
            self.factors.push(h);
        }

        let s = &g.n - &c;
        if s.is_negative() || s > g.n {
            return Err(Error::TemplateMismatch(format!(
                "green value for `{}` escapes [0, N]",
                g.var
            )));
        }
        let lo = &s / &g.n;
        let hi = Rat::one() - &lo;
        let [w1, w2, w3, w4] = g.w_cols;
        // (green weight, cycle row, two w-columns); the first factor also
        // covers the q-columns shared between the green row and row t4.
        let spec: [(&Rat, usize, usize, usize, bool); 4] = [
            (&lo, g.t_rows[3], w4, w1, true),
            (&hi, g.t_rows[0], w1, w2, false),
            (&lo, g.t_rows[1], w2, w3, false),
            (&hi, g.t_rows[2], w3, w4, false),
        ];
        for (w, row, ca, cb, q_cols) in spec {
            let mut f = self.blank();
            f.0[green] = w.clone();
            f.0[row] = Rat::one();
            f.1[ca] = g.n.clone();
            f.1[cb] = g.n.clone();
            if q_cols {
                for &qc in &g.q_cols {
                    f.1[qc] = g.n.clone();
                }
            }
            self.factors.push(f);
        }

        for vg in &g.nested {
            self.push_var_gadget(vg, &c)?;
        }
        Ok(())
    }
}

/// The four closing factors of a single variable gadget at the effective
/// value `x`, in an ambient `rows x cols` matrix. Used to certify rank
/// bounds of gadget outputs directly.
pub fn var_gadget_factors(
    trace: &VarGadgetTrace,
    x: &Rat,
    rows: usize,
    cols: usize,
) -> Result<Vec<RankOneFactor>> {
    let mut b = Builder::new(rows, cols);
    b.push_var_gadget(trace, x)?;
    b.factors
        .into_iter()
        .map(|(u, v)| RankOneFactor::exact(u, v))
        .collect()
}

/// The exact factor family of one assembled gadget block at the given
/// variable values, in an ambient `rows x cols` matrix.
pub fn block_factors(
    block: &Block,
    a: &Assignment,
    rows: usize,
    cols: usize,
) -> Result<Vec<RankOneFactor>> {
    let mut b = Builder::new(rows, cols);
    match block {
        Block::Sum { trace } => b.push_sum(trace, a)?,
        Block::Product { trace } => b.push_product(trace, a)?,
    }
    b.factors
        .into_iter()
        .map(|(u, v)| RankOneFactor::exact(u, v))
        .collect()
}

/// Builds the exact size-`k` factorization of the compiled matrix attached
/// to the root `a` of the polynomial. Fails on non-roots (reporting the
/// exact value of `f`), on points outside the cube, and on any internal
/// template discrepancy.
pub fn build_witness(inst: &Instance, point: &[Rat]) -> Result<Factorization> {
    let a = inst.extended_assignment(point)?;
    let f = inst.normal_form.reconstruct();
    let val = f.evaluate(point)?;
    if !val.is_zero() {
        return Err(Error::NotARoot(val));
    }

    let mut b = Builder::new(0, 0);
    for layer in &inst.layers {
        match layer {
            Layer::Assembly { blocks } => {
                // Assembly shape = input shape of the first Γ layer.
                let (rows, cols) = inst
                    .gammas()
                    .next()
                    .map(|g| (g.in_rows, g.in_cols))
                    .ok_or_else(|| Error::InvalidInstance("no Γ layers".into()))?;
                b.rows = rows;
                b.cols = cols;
                for block in blocks {
                    match block {
                        Block::Sum { trace } => b.push_sum(trace, &a)?,
                        Block::Product { trace } => b.push_product(trace, &a)?,
                    }
                }
            }
            Layer::Gamma { trace } => b.apply_gamma(trace, &a)?,
        }
    }

    let factors = b
        .factors
        .into_iter()
        .map(|(u, v)| RankOneFactor::exact(u, v))
        .collect::<Result<Vec<_>>>()?;
    let fac = Factorization::new(factors)?;
    if fac.k != inst.k {
        return Err(Error::TemplateMismatch(format!(
            "{} factors produced, instance promises {}",
            fac.k, inst.k
        )));
    }
    // Self-certification: the exact sum must reproduce the matrix.
    let sum = fac.sum_exact()?;
    if sum != inst.matrix {
        return Err(Error::TemplateMismatch(
            "factor sum differs from the compiled matrix".into(),
        ));
    }
    Ok(fac)
}

/// Reads the original variables back out of a factorization via the probe
/// table: the unique factor with a nonzero entry at the selector cell of
/// `xᵢ`'s Γ layer carries `M - xᵢ` at the anchor cell. Exact factorizations
/// yield exact values; numeric ones are resolved within `tol` and clipped
/// to `[0, 1]`.
pub fn extract_root(inst: &Instance, fac: &Factorization, tol: f64) -> Result<Vec<Rat>> {
    fac.validate()?;
    let mut out = Vec::with_capacity(inst.n);
    for name in inst.x_names() {
        let probe = inst
            .probes
            .get(&name)
            .ok_or_else(|| Error::ProbeFailure(format!("no probe for `{name}`")))?;
        let (si, sj) = probe.selector;
        let hits: Vec<&RankOneFactor> = fac
            .factors
            .iter()
            .filter(|f| f.entry_f64(si, sj).abs() > tol)
            .collect();
        if hits.len() != 1 {
            return Err(Error::ProbeFailure(format!(
                "{} factors active at the selector cell of `{name}`",
                hits.len()
            )));
        }
        let (ai, aj) = probe.anchor;
        let x = match hits[0].entry_exact(ai, aj) {
            Some(g) => &probe.m_param - g,
            None => {
                let g = hits[0].entry_f64(ai, aj);
                Rat::from_float(rat_to_f64(&probe.m_param) - g).ok_or_else(|| {
                    Error::ProbeFailure(format!("non-finite anchor value for `{name}`"))
                })?
            }
        };
        let (lo, hi) = (Rat::zero(), Rat::one());
        let slack = Rat::from_float(tol).unwrap_or_else(Rat::zero);
        if x < &lo - &slack || x > &hi + &slack {
            return Err(Error::ProbeFailure(format!(
                "recovered value for `{name}` is outside the unit cube"
            )));
        }
        out.push(x.clamp(lo, hi));
    }
    Ok(out)
}

/// Verification mode for [`verify_factorization`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerifyMode {
    Exact,
    Tol(f64),
}

/// Outcome of checking a claimed factorization against a target matrix.
/// Carries every measurement; `all_ok` aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub count_ok: bool,
    pub shape_ok: bool,
    pub rank_one_ok: bool,
    pub min_entry: f64,
    pub nonnegative_ok: bool,
    pub residual: f64,
    pub residual_ok: bool,
    /// Exact mode only: the factor sum equals the target entrywise.
    pub sum_exact: Option<bool>,
    pub lex_ok: bool,
}

impl VerifyReport {
    pub fn all_ok(&self) -> bool {
        self.count_ok
            && self.shape_ok
            && self.rank_one_ok
            && self.nonnegative_ok
            && self.lex_ok
            && self.residual_ok
    }
}

impl std::fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "count:        {}", if self.count_ok { "ok" } else { "FAIL" })?;
        writeln!(f, "shape:        {}", if self.shape_ok { "ok" } else { "FAIL" })?;
        writeln!(f, "rank one:     {}", if self.rank_one_ok { "ok" } else { "FAIL" })?;
        writeln!(
            f,
            "nonnegative:  {} (min entry {:.3e})",
            if self.nonnegative_ok { "ok" } else { "FAIL" },
            self.min_entry
        )?;
        writeln!(f, "residual:     {:.3e}", self.residual)?;
        if let Some(exact) = self.sum_exact {
            writeln!(f, "exact sum:    {}", if exact { "ok" } else { "FAIL" })?;
        }
        writeln!(f, "lex order:    {}", if self.lex_ok { "ok" } else { "FAIL" })
    }
}

/// Checks a claimed size-`k` factorization of `m`: factor count, shapes,
/// structural rank-one form, nonnegativity, sum residual (max norm), and
/// strict lexicographic descent. Never errors; failures live in the report.
pub fn verify_factorization(
    m: &RatMatrix,
    k: usize,
    fac: &Factorization,
    mode: VerifyMode,
) -> VerifyReport {
    let tol = match mode {
        VerifyMode::Exact => 0.0,
        VerifyMode::Tol(t) => t,
    };
    let count_ok = fac.factors.len() == k && fac.k == k;
    let shape_ok = fac
        .factors
        .iter()
        .all(|f| f.shape() == (m.rows(), m.cols()));
    // Factors are stored as outer products, so rank <= 1 is structural; a
    // factor contributing nothing is still flagged.
    let rank_one_ok = fac
        .factors
        .iter()
        .all(|f| f.to_f64().iter().any(|x| *x != 0.0));

    let min_entry = fac
        .factors
        .iter()
        .map(|f| f.min_entry_f64())
        .fold(f64::INFINITY, f64::min);
    let nonnegative_ok = if fac.exact {
        fac.factors.iter().all(|f| match f {
            RankOneFactor::Exact { u, v } => !u.iter().chain(v).any(|x| x.is_negative()),
            RankOneFactor::Numeric { .. } => false,
        })
    } else {
        min_entry >= -tol
    };

    let (residual, sum_exact) = if fac.exact && shape_ok {
        match fac.sum_exact() {
            Ok(sum) => {
                let mut worst = Rat::zero();
                for (a, b) in sum.entries().iter().zip(m.entries()) {
                    let d = (a - b).abs();
                    if d > worst {
                        worst = d;
                    }
                }
                (rat_to_f64(&worst), Some(worst.is_zero()))
            }
            Err(_) => (f64::INFINITY, Some(false)),
        }
    } else if shape_ok {
        let sum = fac.sum_f64();
        let target = m.to_f64();
        let worst = sum
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        (worst, None)
    } else {
        (f64::INFINITY, None)
    };

    let lex_ok = shape_ok
        && fac.factors.windows(2).all(|w| {
            matches!(lex_compare(&w[0], &w[1]), Ok(Ordering::Greater))
        });

    let residual_ok = match mode {
        VerifyMode::Exact => sum_exact == Some(true),
        VerifyMode::Tol(t) => residual <= t,
    };
    VerifyReport {
        count_ok,
        shape_ok,
        rank_one_ok,
        min_entry,
        nonnegative_ok,
        residual,
        residual_ok,
        sum_exact,
        lex_ok,
    }
}
