//! The four matrix gadgets: variable gadget, the Γ variable eliminator,
//! the sum gadget and the product gadget, each returning the constructed
//! incomplete matrix together with a trace of every index and parameter the
//! witness builder later needs.
//!
//! Row/column maps are order-preserving injections; the Γ construction keeps
//! the input rows and columns in their original relative order (the
//! factorization space is invariant under line permutations, so the block
//! layout is a presentation choice).

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{rat_to_string, Rat};
use crate::incomplete::{Cell, IncompleteMatrix, VarRange};

/// Trace of one variable-gadget application: which row carried the blue
/// entries, where the four new rows/columns landed, and the parameters.
///
/// The gadget turns the blue constant `N` into an effective variable ranging
/// in `[max(0, N - M), N]` at the cost of four extra factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarGadgetTrace {
    pub blue_row: usize,
    pub blue_cols: Vec<usize>,
    pub new_rows: [usize; 4],
    pub new_cols: [usize; 4],
    #[serde(with = "crate::exact::rat_serde")]
    pub m: Rat,
    /// Common value of the blue entries.
    #[serde(with = "crate::exact::rat_serde")]
    pub n: Rat,
}

impl VarGadgetTrace {
    /// Same trace shifted into a larger matrix.
    pub fn offset(&self, dr: usize, dc: usize) -> Self {
        Self {
            blue_row: self.blue_row + dr,
            blue_cols: self.blue_cols.iter().map(|&c| c + dc).collect(),
            new_rows: self.new_rows.map(|r| r + dr),
            new_cols: self.new_cols.map(|c| c + dc),
            m: self.m.clone(),
            n: self.n.clone(),
        }
    }

    /// Effective range of the encoded variable.
    pub fn var_low(&self) -> Rat {
        let d = &self.n - &self.m;
        if d.is_negative() {
            Rat::zero()
        } else {
            d
        }
    }

    pub fn var_high(&self) -> Rat {
        self.n.clone()
    }
}

/// Trace of one Γ application eliminating the variable `var` with `tau`
/// occurrences. Indices are absolute coordinates in the output matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTrace {
    pub var: String,
    pub tau: usize,
    #[serde(with = "crate::exact::rat_serde")]
    pub m: Rat,
    #[serde(with = "crate::exact::rat_serde")]
    pub n: Rat,
    #[serde(with = "crate::exact::rat_serde")]
    pub p: Rat,
    #[serde(with = "crate::exact::rat_serde")]
    pub q: Rat,
    pub in_rows: usize,
    pub in_cols: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    /// Input row `i` lands at output row `row_map[i]`.
    pub row_map: Vec<usize>,
    pub col_map: Vec<usize>,
    /// The five structural top rows (three cycle rows, the `[N,0,0,N]` row,
    /// and the green row).
    pub t_rows: [usize; 5],
    /// The four leading columns carrying the cycle pattern.
    pub w_cols: [usize; 4],
    /// Selector rows, one per occurrence (the `Q`-diagonal rows).
    pub g_rows: Vec<usize>,
    pub q_cols: Vec<usize>,
    /// Images of the occurrence cells (the magenta anchors, now holding `M`).
    pub occ_rows: Vec<usize>,
    pub occ_cols: Vec<usize>,
    /// One nested variable gadget per occurrence, on `(g_rows[t], q_cols[t])`.
    pub nested: Vec<VarGadgetTrace>,
}

/// Trace of a sum-gadget block `S(s_1 y_1 + ... + s_l y_l = L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTrace {
    pub coeffs: Vec<Rat>,
    /// `Some(name)` for a variable slot, `None` for a pinned constant 1.
    pub slots: Vec<Option<String>>,
    pub l_var: String,
    pub n: Rat,
    pub y_rows: Vec<usize>,
    pub l_row: usize,
    /// Pinning row per term; pinned slots have none.
    pub blue_rows: Vec<Option<usize>>,
    pub col0: usize,
    pub unit_cols: Vec<usize>,
    pub nested: Vec<Option<VarGadgetTrace>>,
}

/// Trace of a product-gadget block `P(u1 * u2 = v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductTrace {
    pub u1: String,
    pub u2: String,
    pub v: String,
    pub rows: [usize; 3],
    pub cols: [usize; 3],
    /// Gadget on the blue 1 at `(rows[0], cols[2])`, then `(rows[2], cols[0])`.
    pub nested: [VarGadgetTrace; 2],
}

/// A term slot in the sum gadget.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Var(String),
    Pinned,
}

fn serde_rat_vec<S: serde::Serializer>(v: &[Rat], ser: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&rat_to_string(r))?;
    }
    seq.end()
}

fn deserde_rat_vec<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<Vec<Rat>, D::Error> {
    use serde::de::Error as _;
    let strs = Vec::<String>::deserialize(de)?;
    strs.iter()
        .map(|s| crate::exact::parse_rat(s).map_err(|e| D::Error::custom(e.to_string())))
        .collect()
}

// SumTrace.coeffs needs string-encoded rationals like every other field.
// (Serde derive above uses the helpers through this manual impl hook.)
impl SumTrace {
    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn offset(&self, dr: usize, dc: usize) -> Self {
        Self {
            coeffs: self.coeffs.clone(),
            slots: self.slots.clone(),
            l_var: self.l_var.clone(),
            n: self.n.clone(),
            y_rows: self.y_rows.iter().map(|&r| r + dr).collect(),
            l_row: self.l_row + dr,
            blue_rows: self.blue_rows.iter().map(|b| b.map(|r| r + dr)).collect(),
            col0: self.col0 + dc,
            unit_cols: self.unit_cols.iter().map(|&c| c + dc).collect(),
            nested: self
                .nested
                .iter()
                .map(|t| t.as_ref().map(|t| t.offset(dr, dc)))
                .collect(),
        }
    }
}

impl ProductTrace {
    pub fn offset(&self, dr: usize, dc: usize) -> Self {
        Self {
            u1: self.u1.clone(),
            u2: self.u2.clone(),
            v: self.v.clone(),
            rows: self.rows.map(|r| r + dr),
            cols: self.cols.map(|c| c + dc),
            nested: [self.nested[0].offset(dr, dc), self.nested[1].offset(dr, dc)],
        }
    }
}

/// Appends the 4x4 variable gadget with parameter `m_param` to the blue
/// entries `(blue_row, c)` for `c` in `blue_cols`, which must all hold the
/// same nonnegative constant `N`.
pub fn variable_gadget(
    a: &IncompleteMatrix,
    blue_row: usize,
    blue_cols: &[usize],
    m_param: Rat,
) -> Result<(IncompleteMatrix, VarGadgetTrace)> {
    if !m_param.is_positive() {
        return Err(Error::GadgetPrecondition(
            "variable gadget parameter M must be positive".into(),
        ));
    }
    if blue_cols.is_empty() {
        return Err(Error::GadgetPrecondition("no blue entries given".into()));
    }
    if blue_row >= a.rows() || blue_cols.iter().any(|&c| c >= a.cols()) {
        return Err(Error::GadgetPrecondition("blue entry out of bounds".into()));
    }
    let mut seen = blue_cols.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != blue_cols.len() {
        return Err(Error::GadgetPrecondition("repeated blue column".into()));
    }
    let n_blue = match a.get(blue_row, blue_cols[0]) {
        Cell::Constant(c) if !c.is_negative() => c.clone(),
        _ => {
            return Err(Error::GadgetPrecondition(
                "blue entries must be nonnegative constants".into(),
            ))
        }
    };
    for &c in blue_cols {
        match a.get(blue_row, c) {
            Cell::Constant(v) if *v == n_blue => {}
            _ => {
                return Err(Error::GadgetPrecondition(
                    "blue entries must all equal the same constant".into(),
                ))
            }
        }
    }

    let (r, c) = (a.rows(), a.cols());
    let mut g = a.resized(r + 4, c + 4);
    // Row of the blue entries gets M at each new column.
    for dj in 0..4 {
        g.set_constant(blue_row, c + dj, m_param.clone());
    }
    // First new row: M at every blue column.
    for &bc in blue_cols {
        g.set_constant(r, bc, m_param.clone());
    }
    // The 4x4 cycle block on (new rows) x (new columns).
    const CYCLE: [[u8; 4]; 4] = [[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1]];
    for (di, row) in CYCLE.iter().enumerate() {
        for (dj, &bit) in row.iter().enumerate() {
            if bit == 1 {
                g.set_constant(r + di, c + dj, m_param.clone());
            }
        }
    }

    let trace = VarGadgetTrace {
        blue_row,
        blue_cols: blue_cols.to_vec(),
        new_rows: [r, r + 1, r + 2, r + 3],
        new_cols: [c, c + 1, c + 2, c + 3],
        m: m_param,
        n: n_blue,
    };
    Ok((g, trace))
}

/// Parameter recipe for eliminating a variable ranging in `[low, high]`:
/// `M = high + 1`, `P = 1/(M - low)`, `Q = 1/(M - high) = 1`, `N = Q`.
/// Requires `high > low` strictly.
pub fn gamma_params_for_range(low: &Rat, high: &Rat) -> Result<(Rat, Rat, Rat, Rat)> {
    if high <= low {
        return Err(Error::GadgetPrecondition(format!(
            "degenerate range [{}, {}]: the eliminator needs Q > P strictly",
            rat_to_string(low),
            rat_to_string(high)
        )));
    }
    let m = high + Rat::one();
    let p = (&m - low).recip();
    let q = Rat::one();
    let n = q.clone();
    Ok((m, n, p, q))
}

/// Eliminates the variable `x` from `B` by the Γ construction: builds the
/// wrapper matrix with the occurrence diagonal set to `M`, then applies the
/// variable gadget with parameter `Q - P` to each `Q`-diagonal entry. The
/// output no longer contains `x`; the factorization size budget grows by
/// `5 * tau + 4`.
pub fn gamma_wrap(
    b: &IncompleteMatrix,
    x: &str,
    m: Rat,
    n: Rat,
    p: Rat,
    q: Rat,
) -> Result<(IncompleteMatrix, GammaTrace)> {
    let occ = b.occurrences(x);
    let tau = occ.len();
    if tau == 0 {
        return Err(Error::GadgetPrecondition(format!(
            "variable `{x}` does not occur"
        )));
    }
    {
        let profile = &b.occurrence_profile()[x];
        if !profile.rows_distinct || !profile.cols_distinct {
            return Err(Error::GadgetPrecondition(format!(
                "occurrences of `{x}` repeat a row or column"
            )));
        }
    }
    if !(p.is_positive() && q > p && n >= q) {
        return Err(Error::GadgetPrecondition(
            "parameters must satisfy N >= Q > P > 0".into(),
        ));
    }
    if m < p.recip() {
        return Err(Error::GadgetPrecondition(
            "parameter M must satisfy M >= 1/P".into(),
        ));
    }
    let range = b
        .range_of(x)
        .ok_or_else(|| Error::MissingVariable(x.to_string()))?;
    let (expect_low, expect_high) = (&m - p.recip(), &m - q.recip());
    if range.low != expect_low || range.high != expect_high {
        return Err(Error::GadgetPrecondition(format!(
            "range of `{x}` is [{}, {}] but the parameters encode [{}, {}]",
            rat_to_string(&range.low),
            rat_to_string(&range.high),
            rat_to_string(&expect_low),
            rat_to_string(&expect_high),
        )));
    }

    let (br, bc) = (b.rows(), b.cols());
    let rows1 = br + tau + 5;
    let cols1 = bc + tau + 4;
    let row_map: Vec<usize> = (0..br).map(|i| 5 + tau + i).collect();
    let col_map: Vec<usize> = (0..bc).map(|j| 4 + tau + j).collect();
    let g_rows: Vec<usize> = (0..tau).map(|t| 5 + t).collect();
    let q_cols: Vec<usize> = (0..tau).map(|t| 4 + t).collect();

    let mut g = IncompleteMatrix::constants(rows1, cols1);
    // Cycle rows on the four leading columns.
    const CYCLE: [[u8; 4]; 4] = [[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1]];
    for (i, row) in CYCLE.iter().enumerate() {
        for (j, &bit) in row.iter().enumerate() {
            if bit == 1 {
                g.set_constant(i, j, n.clone());
            }
        }
    }
    // Row 3 (the [N,0,0,N] row) carries N over the Q-columns.
    for &qc in &q_cols {
        g.set_constant(3, qc, n.clone());
    }
    // Green row: N on the leading four columns and the Q-columns, 1 at the
    // occurrence columns.
    for j in 0..4 {
        g.set_constant(4, j, n.clone());
    }
    for &qc in &q_cols {
        g.set_constant(4, qc, n.clone());
    }
    for (t, &(_, jt)) in occ.iter().enumerate() {
        let _ = t;
        g.set_constant(4, col_map[jt], Rat::one());
    }
    // Selector rows: Q on the diagonal, 1 at the matching occurrence column.
    for (t, &(_, jt)) in occ.iter().enumerate() {
        g.set_constant(g_rows[t], q_cols[t], q.clone());
        g.set_constant(g_rows[t], col_map[jt], Rat::one());
    }
    // Embed B, replacing x-cells by the constant M; occurrence rows get the
    // unit entry in their Q-column.
    for i in 0..br {
        for j in 0..bc {
            let cell = match b.get(i, j) {
                Cell::Var(name) if name == x => Cell::Constant(m.clone()),
                other => other.clone(),
            };
            g.set_cell_raw(row_map[i], col_map[j], cell);
        }
    }
    for (t, &(it, _)) in occ.iter().enumerate() {
        g.set_constant(row_map[it], q_cols[t], Rat::one());
    }
    for (_, r) in b.ranges().iter().filter(|(k, _)| k.as_str() != x) {
        g.insert_range(r.clone());
    }
    g.retain_used_ranges();

    // Nested variable gadgets with parameter Q - P on each Q-diagonal entry.
    let vg_param = &q - &p;
    let mut nested = Vec::with_capacity(tau);
    for t in 0..tau {
        let (next, trace) = variable_gadget(&g, g_rows[t], &[q_cols[t]], vg_param.clone())?;
        g = next;
        nested.push(trace);
    }

    let trace = GammaTrace {
        var: x.to_string(),
        tau,
        m,
        n,
        p,
        q,
        in_rows: br,
        in_cols: bc,
        out_rows: g.rows(),
        out_cols: g.cols(),
        row_map,
        col_map: col_map.clone(),
        t_rows: [0, 1, 2, 3, 4],
        w_cols: [0, 1, 2, 3],
        g_rows,
        q_cols,
        occ_rows: occ.iter().map(|&(i, _)| 5 + tau + i).collect(),
        occ_cols: occ.iter().map(|&(_, j)| 4 + tau + j).collect(),
        nested,
    };
    debug_assert_eq!(trace.out_rows, br + 5 * tau + 5);
    debug_assert_eq!(trace.out_cols, bc + 5 * tau + 4);
    Ok((g, trace))
}

/// Builds the sum-gadget block `S(s_1 y_1 + ... + s_l y_l = L)`.
///
/// A `Slot::Pinned` term places a literal constant 1 in the y-position and
/// has no pinning row or gadget; it contributes its coefficient to `L` and a
/// single factor to the block's base rank. Variable slots range in `[0,1]`,
/// `L` ranges in `[0, N]`.
pub fn sum_gadget(
    terms: &[(Rat, Slot)],
    l_var: &str,
    n_param: Rat,
) -> Result<(IncompleteMatrix, SumTrace)> {
    if terms.is_empty() {
        return Err(Error::GadgetPrecondition("sum gadget needs a term".into()));
    }
    let coeff_sum: Rat = terms.iter().map(|(s, _)| s.clone()).sum();
    if n_param < coeff_sum {
        return Err(Error::GadgetPrecondition(format!(
            "N = {} is below the coefficient sum {}",
            rat_to_string(&n_param),
            rat_to_string(&coeff_sum)
        )));
    }
    for (s, slot) in terms {
        let ok = match slot {
            Slot::Var(_) => s.is_positive(),
            // A pinned zero term encodes an empty side of the equation.
            Slot::Pinned => !s.is_negative(),
        };
        if !ok {
            return Err(Error::GadgetPrecondition(
                "coefficients must be positive (nonnegative for pinned slots)".into(),
            ));
        }
    }

    let l = terms.len();
    let n_blue: usize = terms
        .iter()
        .filter(|(_, s)| matches!(s, Slot::Var(_)))
        .count();
    let rows = l + 1 + n_blue;
    let cols = 1 + l;
    let mut s_mat = IncompleteMatrix::constants(rows, cols);

    let y_rows: Vec<usize> = (0..l).collect();
    let l_row = l;
    let mut blue_rows = Vec::with_capacity(l);
    let mut next_blue = l + 1;
    for (i, (coeff, slot)) in terms.iter().enumerate() {
        match slot {
            Slot::Var(name) => {
                s_mat.set_var(i, 0, VarRange::new(name.clone(), Rat::zero(), Rat::one())?)?;
                s_mat.set_constant(next_blue, 0, Rat::one());
                s_mat.set_constant(next_blue, 1 + i, Rat::one());
                blue_rows.push(Some(next_blue));
                next_blue += 1;
            }
            Slot::Pinned => {
                s_mat.set_constant(i, 0, Rat::one());
                blue_rows.push(None);
            }
        }
        s_mat.set_constant(i, 1 + i, Rat::one());
        s_mat.set_constant(l_row, 1 + i, coeff.clone());
    }
    s_mat.set_var(
        l_row,
        0,
        VarRange::new(l_var.to_string(), Rat::zero(), n_param.clone())?,
    )?;

    // Variable gadgets with parameter 1 on every blue pinning entry.
    let mut nested: Vec<Option<VarGadgetTrace>> = vec![None; l];
    for (i, blue) in blue_rows.iter().enumerate() {
        if let Some(brow) = *blue {
            let (next, trace) = variable_gadget(&s_mat, brow, &[0], Rat::one())?;
            s_mat = next;
            nested[i] = Some(trace);
        }
    }

    let trace = SumTrace {
        coeffs: terms.iter().map(|(s, _)| s.clone()).collect(),
        slots: terms
            .iter()
            .map(|(_, slot)| match slot {
                Slot::Var(v) => Some(v.clone()),
                Slot::Pinned => None,
            })
            .collect(),
        l_var: l_var.to_string(),
        n: n_param,
        y_rows,
        l_row,
        blue_rows,
        col0: 0,
        unit_cols: (1..=l).collect(),
        nested,
    };
    Ok((s_mat, trace))
}

/// Builds the product-gadget block `P(u1 * u2 = v)`: the 3x3 core with the
/// two blue 1s replaced by variable gadgets with parameter 1. All three
/// variables range in `[0,1]`.
pub fn product_gadget(u1: &str, u2: &str, v: &str) -> Result<(IncompleteMatrix, ProductTrace)> {
    if v == u1 || v == u2 {
        return Err(Error::GadgetPrecondition(
            "product output variable must be distinct from the inputs".into(),
        ));
    }
    let unit = |name: &str| VarRange::new(name.to_string(), Rat::zero(), Rat::one());
    let mut pmat = IncompleteMatrix::constants(3, 3);
    pmat.set_var(0, 0, unit(v)?)?;
    pmat.set_var(0, 1, unit(u1)?)?;
    pmat.set_constant(0, 2, Rat::one());
    pmat.set_var(1, 0, unit(u2)?)?;
    pmat.set_constant(1, 1, Rat::one());
    pmat.set_constant(1, 2, Rat::one());
    pmat.set_constant(2, 0, Rat::one());
    pmat.set_constant(2, 1, Rat::one());
    pmat.set_constant(2, 2, Rat::one());

    let (pmat, top) = variable_gadget(&pmat, 0, &[2], Rat::one())?;
    let (pmat, bottom) = variable_gadget(&pmat, 2, &[0], Rat::one())?;

    let trace = ProductTrace {
        u1: u1.to_string(),
        u2: u2.to_string(),
        v: v.to_string(),
        rows: [0, 1, 2],
        cols: [0, 1, 2],
        nested: [top, bottom],
    };
    Ok((pmat, trace))
}

// Manual serde for SumTrace.coeffs (string-encoded rationals).
mod sum_trace_serde {
    use super::*;

    impl Serialize for SumTrace {
        fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
            #[derive(Serialize)]
            struct Repr<'a> {
                #[serde(serialize_with = "serde_rat_vec")]
                coeffs: &'a [Rat],
                slots: &'a [Option<String>],
                l_var: &'a str,
                n: String,
                y_rows: &'a [usize],
                l_row: usize,
                blue_rows: &'a [Option<usize>],
                col0: usize,
                unit_cols: &'a [usize],
                nested: &'a [Option<VarGadgetTrace>],
            }
            Repr {
                coeffs: &self.coeffs,
                slots: &self.slots,
                l_var: &self.l_var,
                n: rat_to_string(&self.n),
                y_rows: &self.y_rows,
                l_row: self.l_row,
                blue_rows: &self.blue_rows,
                col0: self.col0,
                unit_cols: &self.unit_cols,
                nested: &self.nested,
            }
            .serialize(ser)
        }
    }

    impl<'de> Deserialize<'de> for SumTrace {
        fn deserialize<D: serde::Deserializer<'de>>(
            de: D,
        ) -> std::result::Result<Self, D::Error> {
            use serde::de::Error as _;
            #[derive(Deserialize)]
            struct Repr {
                #[serde(deserialize_with = "deserde_rat_vec")]
                coeffs: Vec<Rat>,
                slots: Vec<Option<String>>,
                l_var: String,
                n: String,
                y_rows: Vec<usize>,
                l_row: usize,
                blue_rows: Vec<Option<usize>>,
                col0: usize,
                unit_cols: Vec<usize>,
                nested: Vec<Option<VarGadgetTrace>>,
            }
            let r = Repr::deserialize(de)?;
            Ok(SumTrace {
                coeffs: r.coeffs,
                slots: r.slots,
                l_var: r.l_var,
                n: crate::exact::parse_rat(&r.n).map_err(|e| D::Error::custom(e.to_string()))?,
                y_rows: r.y_rows,
                l_row: r.l_row,
                blue_rows: r.blue_rows,
                col0: r.col0,
                unit_cols: r.unit_cols,
                nested: r.nested,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, ratio, RatMatrix};
    use crate::incomplete::Assignment;

    fn cell_value(m: &IncompleteMatrix, i: usize, j: usize) -> Rat {
        match m.get(i, j) {
            Cell::Constant(c) => c.clone(),
            Cell::Var(v) => panic!("expected constant at ({i},{j}), found var {v}"),
        }
    }

    #[test]
    fn variable_gadget_one_by_one() {
        let a = IncompleteMatrix::from_matrix(&RatMatrix::from_i64(&[&[1]]));
        let (g, trace) = variable_gadget(&a, 0, &[0], rat(1)).unwrap();
        assert_eq!((g.rows(), g.cols()), (5, 5));
        let expected = RatMatrix::from_i64(&[
            &[1, 1, 1, 1, 1],
            &[1, 1, 1, 0, 0],
            &[0, 0, 1, 1, 0],
            &[0, 0, 0, 1, 1],
            &[0, 1, 0, 0, 1],
        ]);
        let dense = g.complete(&Assignment::new()).unwrap();
        assert_eq!(dense, expected);
        assert_eq!(trace.var_low(), rat(0));
        assert_eq!(trace.var_high(), rat(1));
    }

    #[test]
    fn variable_gadget_shape_and_zeros() {
        let mut a = IncompleteMatrix::constants(3, 4);
        for j in 0..4 {
            a.set_constant(0, j, rat(7));
            a.set_constant(1, j, rat(2));
            a.set_constant(2, j, rat(5));
        }
        let (g, trace) = variable_gadget(&a, 2, &[1, 3], rat(3)).unwrap();
        assert_eq!((g.rows(), g.cols()), (7, 8));
        // Rows of the untouched part are zero over the new columns.
        for i in 0..2 {
            for j in 4..8 {
                assert_eq!(cell_value(&g, i, j), rat(0));
            }
        }
        // Blue row carries M over the new columns.
        for j in 4..8 {
            assert_eq!(cell_value(&g, 2, j), rat(3));
        }
        // First new row has M at every blue column, zero elsewhere in A.
        assert_eq!(cell_value(&g, 3, 1), rat(3));
        assert_eq!(cell_value(&g, 3, 3), rat(3));
        assert_eq!(cell_value(&g, 3, 0), rat(0));
        assert_eq!(trace.new_rows, [3, 4, 5, 6]);
        assert_eq!(trace.new_cols, [4, 5, 6, 7]);
        assert_eq!(trace.var_low(), rat(2)); // max(0, 5 - 3)
        assert_eq!(trace.var_high(), rat(5));
    }

    #[test]
    fn variable_gadget_rejects_unequal_blues() {
        let a = IncompleteMatrix::from_matrix(&RatMatrix::from_i64(&[&[1, 2]]));
        assert!(variable_gadget(&a, 0, &[0, 1], rat(1)).is_err());
    }

    #[test]
    fn variable_gadget_rejects_nonpositive_parameter() {
        let a = IncompleteMatrix::from_matrix(&RatMatrix::from_i64(&[&[1]]));
        assert!(variable_gadget(&a, 0, &[0], rat(0)).is_err());
    }

    fn simple_incomplete_with_x(tau: usize) -> IncompleteMatrix {
        // tau occurrences of x on the diagonal of a (tau+1) x (tau+1)
        // all-ones matrix, range [0,1].
        let mut b = IncompleteMatrix::constants(tau + 1, tau + 1);
        for i in 0..tau + 1 {
            for j in 0..tau + 1 {
                b.set_constant(i, j, rat(1));
            }
        }
        for t in 0..tau {
            b.set_var(t, t, VarRange::new("x", rat(0), rat(1)).unwrap())
                .unwrap();
        }
        b
    }

    #[test]
    fn gamma_parameter_recipe_unit_range() {
        let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
        assert_eq!(m, rat(2));
        assert_eq!(p, ratio(1, 2));
        assert_eq!(q, rat(1));
        assert!(n >= q && q > p && p.is_positive() && m >= p.recip());
        // The encoded range is [M - 1/P, M - 1/Q] = [0, 1].
        assert_eq!(&m - p.recip(), rat(0));
        assert_eq!(&m - q.recip(), rat(1));
    }

    #[test]
    fn gamma_shape_recurrence() {
        for tau in 1..4 {
            let b = simple_incomplete_with_x(tau);
            let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
            let (g, trace) = gamma_wrap(&b, "x", m, n, p, q).unwrap();
            assert_eq!(g.rows(), b.rows() + 5 * tau + 5);
            assert_eq!(g.cols(), b.cols() + 5 * tau + 4);
            assert_eq!(trace.tau, tau);
            assert!(g.occurrences("x").is_empty());
        }
    }

    #[test]
    fn gamma_preserves_other_variables() {
        let mut b = simple_incomplete_with_x(2);
        b.set_var(2, 0, VarRange::new("z", rat(0), rat(1)).unwrap())
            .unwrap();
        let before = b.occurrence_profile()["z"].clone();
        let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
        let (g, trace) = gamma_wrap(&b, "x", m, n, p, q).unwrap();
        let after = g.occurrence_profile()["z"].clone();
        assert_eq!(before, after);
        // The occurrence moved exactly along the row/col maps.
        assert_eq!(
            g.occurrences("z"),
            vec![(trace.row_map[2], trace.col_map[0])]
        );
    }

    #[test]
    fn gamma_anchor_cells_hold_documented_values() {
        let b = simple_incomplete_with_x(2);
        let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
        let (g, trace) = gamma_wrap(&b, "x", m.clone(), n.clone(), p, q.clone()).unwrap();
        for t in 0..trace.tau {
            // Magenta anchors hold M.
            assert_eq!(cell_value(&g, trace.occ_rows[t], trace.occ_cols[t]), m);
            // Selector cells hold 1.
            assert_eq!(cell_value(&g, trace.g_rows[t], trace.occ_cols[t]), rat(1));
            // Q-diagonal holds Q.
            assert_eq!(cell_value(&g, trace.g_rows[t], trace.q_cols[t]), q);
            // Green row holds N over the Q-columns.
            assert_eq!(cell_value(&g, trace.t_rows[4], trace.q_cols[t]), n);
        }
    }

    #[test]
    fn gamma_rejects_repeating_rows() {
        let mut b = IncompleteMatrix::constants(2, 3);
        for i in 0..2 {
            for j in 0..3 {
                b.set_constant(i, j, rat(1));
            }
        }
        let r = VarRange::new("x", rat(0), rat(1)).unwrap();
        b.set_var(0, 0, r.clone()).unwrap();
        b.set_var(0, 2, r).unwrap();
        let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
        assert!(gamma_wrap(&b, "x", m, n, p, q).is_err());
    }

    #[test]
    fn gamma_rejects_mismatched_range() {
        let mut b = IncompleteMatrix::constants(1, 1);
        b.set_var(0, 0, VarRange::new("x", rat(0), ratio(1, 2)).unwrap())
            .unwrap();
        // Parameters encode [0, 1], but x is declared on [0, 1/2].
        let (m, n, p, q) = gamma_params_for_range(&rat(0), &rat(1)).unwrap();
        assert!(gamma_wrap(&b, "x", m, n, p, q).is_err());
    }

    #[test]
    fn gamma_rejects_degenerate_range() {
        assert!(gamma_params_for_range(&rat(1), &rat(1)).is_err());
    }

    #[test]
    fn sum_gadget_shapes_and_core() {
        let terms = vec![
            (rat(1), Slot::Var("y1".into())),
            (rat(2), Slot::Var("y2".into())),
        ];
        let (s, trace) = sum_gadget(&terms, "L", rat(3)).unwrap();
        // 2 y-rows + L-row + 2 pinning rows + 2 gadgets of 4 rows.
        assert_eq!((s.rows(), s.cols()), (13, 11));
        assert_eq!(trace.blue_rows, vec![Some(3), Some(4)]);
        // Variable-free core has 5l lines each way.
        let core = s.remove_variable_lines();
        assert_eq!((core.rows(), core.cols()), (10, 10));
    }

    #[test]
    fn sum_gadget_pinned_term() {
        let terms = vec![(rat(1), Slot::Pinned)];
        let (s, trace) = sum_gadget(&terms, "L", rat(1)).unwrap();
        // One y-row (constant 1) and the L-row; no pinning rows, no gadgets.
        assert_eq!((s.rows(), s.cols()), (2, 2));
        assert_eq!(trace.nested, vec![None]);
        assert_eq!(cell_value(&s, 0, 0), rat(1));
        // Core keeps the pinned row (it has no variables).
        let core = s.remove_variable_lines();
        assert_eq!((core.rows(), core.cols()), (1, 1));
    }

    #[test]
    fn sum_gadget_rejects_small_n() {
        let terms = vec![(rat(2), Slot::Var("y".into()))];
        assert!(sum_gadget(&terms, "L", rat(1)).is_err());
    }

    #[test]
    fn sum_gadget_rejects_nonpositive_var_coeff() {
        let terms = vec![(rat(0), Slot::Var("y".into()))];
        assert!(sum_gadget(&terms, "L", rat(1)).is_err());
    }

    #[test]
    fn product_gadget_shape() {
        let (p, trace) = product_gadget("u1", "u2", "v").unwrap();
        assert_eq!((p.rows(), p.cols()), (11, 11));
        assert_eq!(trace.nested[0].blue_row, 0);
        assert_eq!(trace.nested[0].blue_cols, vec![2]);
        assert_eq!(trace.nested[1].blue_row, 2);
        assert_eq!(trace.nested[1].blue_cols, vec![0]);
        // All constants nonnegative.
        let vars = p.variables();
        assert_eq!(vars, vec!["u1", "u2", "v"]);
    }

    #[test]
    fn product_gadget_repeated_input_variable() {
        let (p, _) = product_gadget("x", "x", "v").unwrap();
        let profile = p.occurrence_profile();
        let x = &profile["x"];
        assert_eq!((x.count, x.rows_distinct, x.cols_distinct), (2, true, true));
    }

    #[test]
    fn gadget_outputs_are_nonnegative() {
        let terms = vec![(ratio(1, 3), Slot::Var("y".into())), (rat(2), Slot::Pinned)];
        let (s, _) = sum_gadget(&terms, "L", rat(3)).unwrap();
        let mut a = Assignment::new();
        a.set("y", ratio(1, 2));
        a.set("L", rat(1));
        assert!(s.complete(&a).unwrap().is_nonnegative());
    }
}
