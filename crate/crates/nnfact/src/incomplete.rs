//! Incomplete matrices: constant cells mixed with named variables ranging
//! over nonnegative segments, plus completion and rank-one completion
//! solving by minor propagation in log space.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{parse_rat, rat_to_f64, rat_to_string, Rat, RatMatrix};

/// A variable together with its declared range segment `[low, high]` in the
/// nonnegative rationals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarRange {
    pub name: String,
    #[serde(with = "crate::exact::rat_serde")]
    pub low: Rat,
    #[serde(with = "crate::exact::rat_serde")]
    pub high: Rat,
}

impl VarRange {
    pub fn new(name: impl Into<String>, low: Rat, high: Rat) -> Result<Self> {
        let name = name.into();
        if low.is_negative() || high < low {
            return Err(Error::GadgetPrecondition(format!(
                "range for `{name}` must satisfy 0 <= low <= high"
            )));
        }
        Ok(Self { name, low, high })
    }

    pub fn contains(&self, v: &Rat) -> bool {
        *v >= self.low && *v <= self.high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Constant(Rat),
    Var(String),
}

/// Exact assignment of rational values to variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment(pub BTreeMap<String, Rat>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, v: Rat) {
        self.0.insert(name.into(), v);
    }

    pub fn get(&self, name: &str) -> Option<&Rat> {
        self.0.get(name)
    }
}

/// Floating-point assignment, produced by the numeric completion solver.
pub type NumericAssignment = BTreeMap<String, f64>;

/// Matrix whose cells are exact nonnegative constants or named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct IncompleteMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    ranges: BTreeMap<String, VarRange>,
}

/// Per-variable occurrence data: count and whether all occurrence rows
/// (resp. columns) are pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceProfile {
    pub count: usize,
    pub rows_distinct: bool,
    pub cols_distinct: bool,
}

impl IncompleteMatrix {
    pub fn constants(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![Cell::Constant(Rat::zero()); rows * cols],
            ranges: BTreeMap::new(),
        }
    }

    pub fn from_matrix(m: &RatMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            cells: m.entries().iter().cloned().map(Cell::Constant).collect(),
            ranges: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.cols + j]
    }

    pub fn set_constant(&mut self, i: usize, j: usize, v: Rat) {
        self.cells[i * self.cols + j] = Cell::Constant(v);
    }

    /// Places a variable cell; the range must be declared (or agree with the
    /// already-declared range of the same name).
    pub fn set_var(&mut self, i: usize, j: usize, range: VarRange) -> Result<()> {
        if let Some(existing) = self.ranges.get(&range.name) {
            if *existing != range {
                return Err(Error::GadgetPrecondition(format!(
                    "conflicting ranges declared for `{}`",
                    range.name
                )));
            }
        }
        self.cells[i * self.cols + j] = Cell::Var(range.name.clone());
        self.ranges.insert(range.name.clone(), range);
        Ok(())
    }

    pub fn ranges(&self) -> &BTreeMap<String, VarRange> {
        &self.ranges
    }

    /// Copy of the matrix with extra zero rows/columns appended.
    pub fn resized(&self, rows: usize, cols: usize) -> IncompleteMatrix {
        assert!(rows >= self.rows && cols >= self.cols);
        let mut out = IncompleteMatrix::constants(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.cells[i * cols + j] = self.get(i, j).clone();
            }
        }
        out.ranges = self.ranges.clone();
        out
    }

    pub(crate) fn set_cell_raw(&mut self, i: usize, j: usize, cell: Cell) {
        self.cells[i * self.cols + j] = cell;
    }

    pub(crate) fn insert_range(&mut self, range: VarRange) {
        self.ranges.insert(range.name.clone(), range);
    }

    pub(crate) fn retain_used_ranges(&mut self) {
        let used = self.variables();
        self.ranges.retain(|name, _| used.iter().any(|u| u == name));
    }

    pub fn range_of(&self, name: &str) -> Option<&VarRange> {
        self.ranges.get(name)
    }

    /// Occurrence cells of a variable in row-major order.
    pub fn occurrences(&self, name: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if matches!(self.get(i, j), Cell::Var(v) if v == name) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Variable names actually present in some cell, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .cells
            .iter()
            .filter_map(|c| match c {
                Cell::Var(v) => Some(v.clone()),
                Cell::Constant(_) => None,
            })
            .collect();
        names.sort();
        names.dedup();
        names
    }

    /// Replaces every variable cell by its assigned value.
    pub fn complete(&self, a: &Assignment) -> Result<RatMatrix> {
        let mut m = RatMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = match self.get(i, j) {
                    Cell::Constant(c) => c.clone(),
                    Cell::Var(name) => {
                        let val = a
                            .get(name)
                            .ok_or_else(|| Error::MissingVariable(name.clone()))?;
                        let range = &self.ranges[name];
                        if !range.contains(val) {
                            return Err(Error::OutOfRange {
                                name: name.clone(),
                                value: val.clone(),
                                low: range.low.clone(),
                                high: range.high.clone(),
                            });
                        }
                        val.clone()
                    }
                };
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    /// Floating completion; range checks use the given tolerance.
    pub fn complete_f64(&self, a: &NumericAssignment, tol: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for cell in &self.cells {
            match cell {
                Cell::Constant(c) => out.push(rat_to_f64(c)),
                Cell::Var(name) => {
                    let val = *a
                        .get(name)
                        .ok_or_else(|| Error::MissingVariable(name.clone()))?;
                    let range = &self.ranges[name];
                    if val < rat_to_f64(&range.low) - tol || val > rat_to_f64(&range.high) + tol {
                        return Err(Error::CompletionInfeasible(format!(
                            "value {val} for `{name}` outside its range"
                        )));
                    }
                    out.push(val);
                }
            }
        }
        Ok(out)
    }

    /// The complete submatrix on rows and columns containing no variable.
    pub fn remove_variable_lines(&self) -> RatMatrix {
        let var_row: Vec<bool> = (0..self.rows)
            .map(|i| (0..self.cols).any(|j| matches!(self.get(i, j), Cell::Var(_))))
            .collect();
        let var_col: Vec<bool> = (0..self.cols)
            .map(|j| (0..self.rows).any(|i| matches!(self.get(i, j), Cell::Var(_))))
            .collect();
        let rows: Vec<usize> = (0..self.rows).filter(|&i| !var_row[i]).collect();
        let cols: Vec<usize> = (0..self.cols).filter(|&j| !var_col[j]).collect();
        let mut m = RatMatrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                if let Cell::Constant(c) = self.get(i, j) {
                    m.set(a, b, c.clone());
                }
            }
        }
        m
    }

    /// Occurrence counts plus row/column distinctness flags per variable.
    pub fn occurrence_profile(&self) -> BTreeMap<String, OccurrenceProfile> {
        let mut out = BTreeMap::new();
        for name in self.variables() {
            let occ = self.occurrences(&name);
            let mut rows: Vec<usize> = occ.iter().map(|&(i, _)| i).collect();
            let mut cols: Vec<usize> = occ.iter().map(|&(_, j)| j).collect();
            rows.sort_unstable();
            cols.sort_unstable();
            let rows_distinct = rows.windows(2).all(|w| w[0] != w[1]);
            let cols_distinct = cols.windows(2).all(|w| w[0] != w[1]);
            out.insert(
                name,
                OccurrenceProfile {
                    count: occ.len(),
                    rows_distinct,
                    cols_distinct,
                },
            );
        }
        out
    }

    /// All numeric assignments under which some completion has rank one,
    /// found by propagating the rank-one scaling structure from the constant
    /// cells and solving the resulting consistency system in log space.
    ///
    /// Constants must be strictly positive (a zero constant forces an entire
    /// zero line and is out of scope for the gadget matrices this serves).
    /// Returns one assignment when the system pins every variable; errors
    /// with the unconstrained cells when it does not.
    pub fn rank1_complete(&self, tol: f64) -> Result<Vec<NumericAssignment>> {
        let vars = self.variables();
        if self.rows == 0 || self.cols == 0 {
            return Ok(vec![NumericAssignment::new()]);
        }
        for cell in &self.cells {
            if let Cell::Constant(c) = cell {
                if c.is_negative() || c.is_zero() {
                    return Err(Error::CompletionInfeasible(
                        "rank-one completion requires strictly positive constants".into(),
                    ));
                }
            }
        }

        // Unknowns: log row scales, log column scales, log value per variable.
        let n_unknowns = self.rows + self.cols + vars.len();
        let var_index: BTreeMap<&str, usize> = vars
            .iter()
            .enumerate()
            .map(|(k, v)| (v.as_str(), self.rows + self.cols + k))
            .collect();

        let mut system: Vec<Vec<f64>> = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut row = vec![0.0; n_unknowns + 1];
                row[i] = 1.0;
                row[self.rows + j] = 1.0;
                match self.get(i, j) {
                    Cell::Constant(c) => row[n_unknowns] = rat_to_f64(c).ln(),
                    Cell::Var(name) => row[var_index[name.as_str()]] = -1.0,
                }
                system.push(row);
            }
        }

        let sol = solve_log_system(system, n_unknowns, tol)?;

        // Variables whose log value moves along some null direction are
        // unconstrained by propagation.
        let mut loose = Vec::new();
        for name in &vars {
            if !sol.determined[var_index[name.as_str()]] {
                loose.extend(self.occurrences(name));
            }
        }
        if !loose.is_empty() {
            return Err(Error::UnderDetermined(loose));
        }

        let mut assignment = NumericAssignment::new();
        for name in &vars {
            let value = sol.values[var_index[name.as_str()]].exp();
            let range = &self.ranges[name];
            if value < rat_to_f64(&range.low) - tol || value > rat_to_f64(&range.high) + tol {
                return Err(Error::CompletionInfeasible(format!(
                    "propagated value {value} for `{name}` leaves its range"
                )));
            }
            assignment.insert(name.clone(), value);
        }
        Ok(vec![assignment])
    }
}

struct LogSolution {
    values: Vec<f64>,
    determined: Vec<bool>,
}

/// Gaussian elimination with partial pivoting on an augmented system.
/// Reports per-unknown whether its value is independent of the free columns.
fn solve_log_system(
    mut m: Vec<Vec<f64>>,
    n_unknowns: usize,
    tol: f64,
) -> Result<LogSolution> {
    let eps = 1e-10;
    let n_rows = m.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n_unknowns];
    let mut row = 0;
    for col in 0..n_unknowns {
        if row == n_rows {
            break;
        }
        let (best, best_val) = (row..n_rows)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best_val < eps {
            continue;
        }
        m.swap(row, best);
        let inv = 1.0 / m[row][col];
        for c in col..=n_unknowns {
            m[row][c] *= inv;
        }
        for r in 0..n_rows {
            if r != row && m[r][col].abs() > 0.0 {
                let f = m[r][col];
                for c in col..=n_unknowns {
                    m[r][c] -= f * m[row][c];
                }
            }
        }
        pivot_of_col[col] = Some(row);
        row += 1;
    }

    // Inconsistent rows mean no rank-one completion matches the constants.
    for r in row..n_rows {
        if m[r][n_unknowns].abs() > tol.max(1e-8) {
            return Err(Error::CompletionInfeasible(
                "constant cells are inconsistent with rank one".into(),
            ));
        }
    }

    let free_cols: Vec<usize> = (0..n_unknowns)
        .filter(|&c| pivot_of_col[c].is_none())
        .collect();
    let mut values = vec![0.0; n_unknowns];
    let mut determined = vec![false; n_unknowns];
    for col in 0..n_unknowns {
        if let Some(r) = pivot_of_col[col] {
            values[col] = m[r][n_unknowns];
            determined[col] = free_cols.iter().all(|&fc| m[r][fc].abs() < eps * 10.0);
        }
    }
    Ok(LogSolution { values, determined })
}

// ---------------------------------------------------------------------------
// JSON format: cells as `"p/q"` or `{"var": "x1"}`, ranges as string pairs.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellRepr {
    Constant(String),
    Var { var: String },
}

#[derive(Serialize, Deserialize)]
struct IncompleteRepr {
    rows: usize,
    cols: usize,
    cells: Vec<Vec<CellRepr>>,
    ranges: BTreeMap<String, (String, String)>,
}

impl Serialize for IncompleteMatrix {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let cells = (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| match self.get(i, j) {
                        Cell::Constant(c) => CellRepr::Constant(rat_to_string(c)),
                        Cell::Var(v) => CellRepr::Var { var: v.clone() },
                    })
                    .collect()
            })
            .collect();
        let ranges = self
            .ranges
            .iter()
            .map(|(k, r)| (k.clone(), (rat_to_string(&r.low), rat_to_string(&r.high))))
            .collect();
        IncompleteRepr {
            rows: self.rows,
            cols: self.cols,
            cells,
            ranges,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for IncompleteMatrix {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = IncompleteRepr::deserialize(de)?;
        if repr.cells.len() != repr.rows || repr.cells.iter().any(|r| r.len() != repr.cols) {
            return Err(D::Error::custom("cell grid does not match rows x cols"));
        }
        let mut ranges = BTreeMap::new();
        for (name, (lo, hi)) in &repr.ranges {
            let range = VarRange::new(
                name.clone(),
                parse_rat(lo).map_err(|e| D::Error::custom(e.to_string()))?,
                parse_rat(hi).map_err(|e| D::Error::custom(e.to_string()))?,
            )
            .map_err(|e| D::Error::custom(e.to_string()))?;
            ranges.insert(name.clone(), range);
        }
        let mut cells = Vec::with_capacity(repr.rows * repr.cols);
        for row in &repr.cells {
            for cell in row {
                cells.push(match cell {
                    CellRepr::Constant(s) => {
                        Cell::Constant(parse_rat(s).map_err(|e| D::Error::custom(e.to_string()))?)
                    }
                    CellRepr::Var { var } => {
                        if !ranges.contains_key(var) {
                            return Err(D::Error::custom(format!("no range for `{var}`")));
                        }
                        Cell::Var(var.clone())
                    }
                });
            }
        }
        Ok(IncompleteMatrix {
            rows: repr.rows,
            cols: repr.cols,
            cells,
            ranges,
        })
    }
}
