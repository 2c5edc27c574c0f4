//! Numeric nonnegative factorization search (alternating column-wise
//! nonnegative least squares) and nonnegative-rank bounds: conventional rank
//! plus rectangle covering of the support from below, accepted search ranks
//! from above. Desk-scale verification machinery, not a prover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rat_rank, RankOneFactor, RatMatrix};
use crate::witness::Factorization;

/// Search configuration. Deterministic: a fixed config (including the seed)
/// always produces the same output, regardless of the thread budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence tolerance on the residual improvement per sweep.
    pub tol: f64,
    /// Acceptance threshold on the max-norm residual.
    pub threshold: f64,
    pub seed: u64,
    pub threads: usize,
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.restarts == 0 || self.max_iters == 0 || self.threads == 0 {
            return Err(Error::InvalidInstance(
                "solver counts must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) || !(self.threshold > 0.0) {
            return Err(Error::InvalidInstance(
                "solver tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            k: 1,
            restarts: 20,
            max_iters: 500,
            tol: 1e-12,
            threshold: 1e-8,
            seed: 1,
            threads: 1,
        }
    }
}

/// Dense row-major floating matrix, the solver's working format.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_exact(m: &RatMatrix) -> Self {
        DenseMatrix {
            rows: m.rows(),
            cols: m.cols(),
            data: m.to_f64(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }
}

/// Nonnegative-rank bounds with certificates.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub lower: usize,
    /// Whether the rectangle-covering part of the lower bound is exact.
    pub lower_exact: bool,
    /// Smallest accepted rank, if any rank up to the scan limit was accepted.
    pub upper: Option<usize>,
    pub upper_certificate: Option<Factorization>,
    /// Rectangles (row set, column set) covering the support.
    pub cover: Vec<Rectangle>,
}

/// All-nonzero combinatorial rectangle of the support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rectangle {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

struct Candidate {
    residual: f64,
    w: Vec<f64>, // rows x k
    h: Vec<f64>, // k x cols
}

/// Alternating nonnegative-least-squares search for `W H ~ A` with `k`
/// inner columns. Returns the best factorization over all restarts if its
/// max-norm residual meets the acceptance threshold.
pub fn nmf_search(a: &DenseMatrix, cfg: &SolveConfig) -> Result<Option<Factorization>> {
    cfg.validate()?;
    if !a.is_nonnegative() {
        return Err(Error::InvalidInstance(
            "search input must be nonnegative".into(),
        ));
    }
    let run = || -> Option<Candidate> {
        (0..cfg.restarts)
            .into_par_iter()
            .map(|r| (r, run_restart(a, cfg, cfg.seed.wrapping_add(r as u64))))
            .min_by(|(i, x), (j, y)| {
                x.residual
                    .total_cmp(&y.residual)
                    .then_with(|| i.cmp(j))
            })
            .map(|(_, c)| c)
    };
    let best = if cfg.threads == 1 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidInstance(e.to_string()))?;
        pool.install(run)
    };
    let best = match best {
        Some(b) if b.residual <= cfg.threshold => b,
        _ => return Ok(None),
    };
    debug_assert!(best.residual <= cfg.threshold);

    let factors = (0..cfg.k)
        .map(|r| {
            let u: Vec<f64> = (0..a.rows).map(|i| best.w[i * cfg.k + r]).collect();
            let v: Vec<f64> = (0..a.cols).map(|j| best.h[r * a.cols + j]).collect();
            RankOneFactor::numeric(u, v)
        })
        .collect();
    Ok(Some(Factorization::new(factors)?))
}

fn run_restart(a: &DenseMatrix, cfg: &SolveConfig, seed: u64) -> Candidate {
    let (m, n, k) = (a.rows, a.cols, cfg.k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = a.data.iter().sum::<f64>() / (m * n) as f64;
    let scale = (mean.max(1e-12) / k as f64).sqrt();
    let mut w: Vec<f64> = (0..m * k).map(|_| rng.gen::<f64>() * scale).collect();
    let mut h: Vec<f64> = (0..k * n).map(|_| rng.gen::<f64>() * scale).collect();

    let mut prev = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        hals_sweep(&a.data, m, n, k, &mut w, &mut h);
        let res = max_residual(&a.data, m, n, k, &w, &h);
        if (prev - res).abs() < cfg.tol {
            break;
        }
        prev = res;
    }
    Candidate {
        residual: max_residual(&a.data, m, n, k, &w, &h),
        w,
        h,
    }
}

/// One column-wise update pass over W, then over the rows of H.
fn hals_sweep(a: &[f64], m: usize, n: usize, k: usize, w: &mut [f64], h: &mut [f64]) {
    // Update W given H: gram = H H^T (k x k), cross = A H^T (m x k).
    let mut gram = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..k {
            gram[r * k + s] = (0..n).map(|j| h[r * n + j] * h[s * n + j]).sum();
        }
    }
    for r in 0..k {
        let denom = gram[r * k + r].max(1e-15);
        for i in 0..m {
            let cross: f64 = (0..n).map(|j| a[i * n + j] * h[r * n + j]).sum();
            let wg: f64 = (0..k).map(|s| w[i * k + s] * gram[s * k + r]).sum();
            w[i * k + r] = (w[i * k + r] + (cross - wg) / denom).max(0.0);
        }
    }
    // Update H given W.
    let mut gram = vec![0.0; k * k];
    for r in 0..k {
        for s in 0..k {
            gram[r * k + s] = (0..m).map(|i| w[i * k + r] * w[i * k + s]).sum();
        }
    }
    for r in 0..k {
        let denom = gram[r * k + r].max(1e-15);
        for j in 0..n {
            let cross: f64 = (0..m).map(|i| a[i * n + j] * w[i * k + r]).sum();
            let hg: f64 = (0..k).map(|s| gram[r * k + s] * h[s * n + j]).sum();
            h[r * n + j] = (h[r * n + j] + (cross - hg) / denom).max(0.0);
        }
    }
}

fn max_residual(a: &[f64], m: usize, n: usize, k: usize, w: &[f64], h: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..n {
            let approx: f64 = (0..k).map(|r| w[i * k + r] * h[r * n + j]).sum();
            worst = worst.max((a[i * n + j] - approx).abs());
        }
    }
    worst
}

/// Smallest rank up to `kmax` at which the search accepts, with the
/// accepted factorization as certificate.
pub fn rankplus_upper(
    a: &DenseMatrix,
    kmax: usize,
    cfg: &SolveConfig,
) -> Result<(Option<usize>, Option<Factorization>)> {
    for k in 1..=kmax {
        let mut c = cfg.clone();
        c.k = k;
        if let Some(fac) = nmf_search(a, &c)? {
            return Ok((Some(k), Some(fac)));
        }
    }
    Ok((None, None))
}

/// Lower bound: max of the conventional rank and the rectangle-covering
/// number of the support (exact enumeration when the support touches at
/// most 20 lines, greedy otherwise).
pub fn rankplus_lower(a: &RatMatrix) -> BoundsReport {
    let rank = rat_rank(a);
    let (cover, exact) = cover_support(a);
    BoundsReport {
        lower: rank.max(cover.len()),
        lower_exact: exact,
        upper: None,
        upper_certificate: None,
        cover,
    }
}

/// Both bounds in one report.
pub fn rankplus_bounds(a: &RatMatrix, kmax: usize, cfg: &SolveConfig) -> Result<BoundsReport> {
    let mut report = rankplus_lower(a);
    let (upper, cert) = rankplus_upper(&DenseMatrix::from_exact(a), kmax, cfg)?;
    report.upper = upper;
    report.upper_certificate = cert;
    Ok(report)
}

/// Support rows as column bitmasks; empty rows dropped, indices kept.
fn support_rows(a: &RatMatrix) -> Vec<(usize, u64)> {
    use num_traits::Zero;
    (0..a.rows())
        .filter_map(|i| {
            let mask = (0..a.cols())
                .filter(|&j| !a.get(i, j).is_zero())
                .fold(0u64, |acc, j| acc | (1 << j));
            (mask != 0).then_some((i, mask))
        })
        .collect()
}

fn cover_support(a: &RatMatrix) -> (Vec<Rectangle>, bool) {
    use num_traits::Zero;
    let rows = support_rows(a);
    let nonzero_cols: Vec<usize> = (0..a.cols())
        .filter(|&j| (0..a.rows()).any(|i| !a.get(i, j).is_zero()))
        .collect();
    if rows.is_empty() {
        return (Vec::new(), true);
    }
    let lines = rows.len() + nonzero_cols.len();
    if lines <= 20 && a.cols() <= 64 {
        (exact_cover(&rows), true)
    } else {
        (greedy_cover(&rows), false)
    }
}

/// All maximal rectangles: closures of row subsets. The support has at most
/// 20 lines, so one of the two dimensions has at most 10 of them.
fn maximal_rectangles(rows: &[(usize, u64)]) -> Vec<(Vec<usize>, u64)> {
    let n = rows.len();
    let mut out: Vec<(Vec<usize>, u64)> = Vec::new();
    for subset in 1u32..(1 << n) {
        let mut cols = u64::MAX;
        for (b, (_, mask)) in rows.iter().enumerate() {
            if subset & (1 << b) != 0 {
                cols &= mask;
            }
        }
        if cols == 0 {
            continue;
        }
        // Close upward: take every row whose support contains the columns.
        let full: Vec<usize> = rows
            .iter()
            .filter(|(_, mask)| mask & cols == cols)
            .map(|&(i, _)| i)
            .collect();
        if !out.iter().any(|(r, c)| *c == cols && *r == full) {
            out.push((full, cols));
        }
    }
    out
}

fn exact_cover(rows: &[(usize, u64)]) -> Vec<Rectangle> {
    let rects = maximal_rectangles(rows);
    let cells: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&(i, mask)| {
            (0..64)
                .filter(move |j| mask & (1 << j) != 0)
                .map(move |j| (i, j))
        })
        .collect();
    let covers_cell = |rect: &(Vec<usize>, u64), cell: (usize, usize)| {
        rect.0.contains(&cell.0) && rect.1 & (1 << cell.1) != 0
    };
    // Branch and bound on the first uncovered cell.
    let mut best: Option<Vec<usize>> = None;
    let mut chosen: Vec<usize> = Vec::new();
    fn recurse(
        cells: &[(usize, usize)],
        rects: &[(Vec<usize>, u64)],
        covers_cell: &dyn Fn(&(Vec<usize>, u64), (usize, usize)) -> bool,
        chosen: &mut Vec<usize>,
        best: &mut Option<Vec<usize>>,
    ) {
        if let Some(b) = best {
            if chosen.len() >= b.len() {
                return;
            }
        }
        let uncovered = cells
            .iter()
            .find(|&&cell| !chosen.iter().any(|&r| covers_cell(&rects[r], cell)));
        let cell = match uncovered {
            None => {
                *best = Some(chosen.clone());
                return;
            }
            Some(&c) => c,
        };
        for (ri, rect) in rects.iter().enumerate() {
            if covers_cell(rect, cell) {
                chosen.push(ri);
                recurse(cells, rects, covers_cell, chosen, best);
                chosen.pop();
            }
        }
    }
    recurse(&cells, &rects, &covers_cell, &mut chosen, &mut best);
    let best = best.unwrap_or_default();
    best.iter()
        .map(|&r| Rectangle {
            rows: rects[r].0.clone(),
            cols: (0..64).filter(|j| rects[r].1 & (1 << j) != 0).collect(),
        })
        .collect()
}

/// Greedy cover: for each uncovered cell, take all rows containing its
/// column and their common columns.
fn greedy_cover(rows: &[(usize, u64)]) -> Vec<Rectangle> {
    let mut covered: std::collections::BTreeSet<(usize, usize)> = Default::default();
    let mut out = Vec::new();
    for &(i, mask) in rows {
        for j in 0..64 {
            if mask & (1 << j) == 0 || covered.contains(&(i, j)) {
                continue;
            }
            let rect_rows: Vec<usize> = rows
                .iter()
                .filter(|(_, m)| m & (1 << j) != 0)
                .map(|&(r, _)| r)
                .collect();
            let common = rows
                .iter()
                .filter(|(_, m)| m & (1 << j) != 0)
                .fold(u64::MAX, |acc, (_, m)| acc & m);
            for &r in &rect_rows {
                for c in 0..64 {
                    if common & (1 << c) != 0 {
                        covered.insert((r, c));
                    }
                }
            }
            out.push(Rectangle {
                rows: rect_rows,
                cols: (0..64).filter(|c| common & (1 << c) != 0).collect(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, ratio};

    fn cfg(k: usize) -> SolveConfig {
        SolveConfig {
            k,
            restarts: 20,
            max_iters: 500,
            tol: 1e-14,
            threshold: 1e-8,
            seed: 7,
            threads: 1,
        }
    }

    #[test]
    fn finds_rank_one_outer_product() {
        let u = [0.3, 0.7, 0.2, 0.9, 0.5];
        let v = [0.4, 0.1, 0.8, 0.6, 0.2];
        let data: Vec<f64> = u.iter().flat_map(|x| v.iter().map(move |y| x * y)).collect();
        let a = DenseMatrix::new(5, 5, data).unwrap();
        let fac = nmf_search(&a, &cfg(1)).unwrap().expect("rank-one input");
        let sum = fac.sum_f64();
        let worst = sum
            .iter()
            .zip(&a.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "residual {worst}");
    }

    #[test]
    fn identity_needs_three_parts() {
        let a = DenseMatrix::from_exact(&RatMatrix::identity(3));
        assert!(nmf_search(&a, &cfg(2)).unwrap().is_none());
        assert!(nmf_search(&a, &cfg(3)).unwrap().is_some());
    }

    #[test]
    fn rank_one_completion_of_running_example() {
        // The 3x3 completion at the propagated values is rank one.
        let r2 = 2f64.sqrt();
        let data = vec![1.0, 1.0, 0.5f64.sqrt(), r2, r2, 1.0, 2.0, 2.0, r2];
        let a = DenseMatrix::new(3, 3, data).unwrap();
        assert!(nmf_search(&a, &cfg(1)).unwrap().is_some());
    }

    #[test]
    fn search_is_seed_deterministic() {
        let a = DenseMatrix::from_exact(&RatMatrix::from_i64(&[&[1, 2], &[3, 4]]));
        let f1 = nmf_search(&a, &cfg(2)).unwrap();
        let f2 = nmf_search(&a, &cfg(2)).unwrap();
        assert_eq!(f1, f2);
        // Thread budget must not change the outcome.
        let mut c = cfg(2);
        c.threads = 4;
        let f3 = nmf_search(&a, &c).unwrap();
        assert_eq!(f1, f3);
    }

    #[test]
    fn upper_bound_scan() {
        let a = DenseMatrix::from_exact(&RatMatrix::identity(2));
        let (upper, cert) = rankplus_upper(&a, 4, &cfg(1)).unwrap();
        assert_eq!(upper, Some(2));
        assert_eq!(cert.unwrap().k, 2);
    }

    #[test]
    fn lower_bound_all_ones() {
        let a = RatMatrix::from_i64(&[&[1, 1], &[1, 1]]);
        let report = rankplus_lower(&a);
        assert_eq!(report.lower, 1);
        assert!(report.lower_exact);
    }

    #[test]
    fn lower_bound_identity() {
        let report = rankplus_lower(&RatMatrix::identity(3));
        assert_eq!(report.lower, 3);
        assert!(report.lower_exact);
        assert_eq!(report.cover.len(), 3);
    }

    #[test]
    fn lower_bound_cycle_pattern() {
        // The 4x4 cycle support: conventional rank 3, cover number 4.
        let a = RatMatrix::from_i64(&[
            &[1, 1, 0, 0],
            &[0, 1, 1, 0],
            &[0, 0, 1, 1],
            &[1, 0, 0, 1],
        ]);
        assert_eq!(rat_rank(&a), 3);
        let report = rankplus_lower(&a);
        assert_eq!(report.lower, 4);
        assert!(report.lower_exact);
    }

    #[test]
    fn bounds_bracket_each_other() {
        let a = RatMatrix::from_i64(&[&[1, 1, 0], &[0, 1, 1], &[1, 0, 1]]);
        let report = rankplus_bounds(&a, 4, &cfg(1)).unwrap();
        if let Some(upper) = report.upper {
            assert!(report.lower <= upper, "{} > {upper}", report.lower);
        }
    }

    #[test]
    fn greedy_cover_used_beyond_line_limit() {
        // 15 x 15 identity has 30 nonzero lines: greedy path.
        let a = RatMatrix::identity(15);
        let report = rankplus_lower(&a);
        assert_eq!(report.lower, 15);
        assert!(!report.lower_exact);
    }

    #[test]
    fn rejects_negative_input() {
        let a = DenseMatrix::new(1, 2, vec![1.0, -1.0]).unwrap();
        assert!(nmf_search(&a, &cfg(1)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(1);
        c.restarts = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.threshold = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn completed_variable_range_scan_is_monotone_none() {
        // Scan x over [0,1] at rank 1 on a rank-3 family: never accepted.
        for t in [0, 1, 2] {
            let x = ratio(t, 2);
            let mut m = RatMatrix::from_i64(&[&[2, 2, 2, 2], &[1, 0, 0, 1], &[1, 1, 0, 0]]);
            m.set(2, 2, x.clone());
            m.set(2, 3, x);
            let a = DenseMatrix::from_exact(&m);
            assert!(nmf_search(&a, &cfg(1)).unwrap().is_none());
        }
        let _ = rat(0);
    }
}
