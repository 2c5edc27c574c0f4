//! The end-to-end reduction: normalize the polynomial, assemble the
//! block-diagonal incomplete matrix from sum and product gadgets, then
//! eliminate every variable with the Γ wrapper, emitting a complete
//! `Instance` whose size-`k` nonnegative factorizations encode the roots.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{Rat, RatMatrix};
use crate::gadgets::{
    gamma_params_for_range, gamma_wrap, product_gadget, sum_gadget, GammaTrace, ProductTrace,
    Slot, SumTrace,
};
use crate::incomplete::{Assignment, IncompleteMatrix};
use crate::poly::{normalize, NormalForm, NormalTerm, Polynomial};

/// One assembled gadget block, with all trace indices in absolute
/// coordinates of the block-diagonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gadget", rename_all = "snake_case")]
pub enum Block {
    Sum { trace: SumTrace },
    Product { trace: ProductTrace },
}

/// A construction layer: the initial block assembly, then one Γ layer per
/// eliminated variable, in elimination order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Assembly { blocks: Vec<Block> },
    Gamma { trace: GammaTrace },
}

/// Where a compiled variable can be read back out of a factorization: the
/// unique factor with a nonzero entry at `selector` carries
/// `m_param - value` at `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub layer: usize,
    pub anchor: (usize, usize),
    pub selector: (usize, usize),
    #[serde(with = "crate::exact::rat_serde")]
    pub m_param: Rat,
}

/// Compiled output: the complete nonnegative matrix, the target
/// factorization size, and the layered construction trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub matrix: RatMatrix,
    pub k: usize,
    pub n: usize,
    pub claimed_rho: usize,
    pub layers: Vec<Layer>,
    pub probes: BTreeMap<String, Probe>,
    pub normal_form: NormalForm,
}

impl Instance {
    pub fn blocks(&self) -> &[Block] {
        match &self.layers[0] {
            Layer::Assembly { blocks } => blocks,
            Layer::Gamma { .. } => unreachable!("assembly is always the first layer"),
        }
    }

    pub fn gammas(&self) -> impl Iterator<Item = &GammaTrace> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Gamma { trace } => Some(trace),
            Layer::Assembly { .. } => None,
        })
    }

    /// `k` recomputed independently from the stored layers.
    pub fn recompute_k(&self) -> usize {
        self.claimed_rho
            + self
                .gammas()
                .map(|g| 5 * g.tau + 4)
                .sum::<usize>()
    }

    /// Names of the original variables, `x1 ... xn`.
    pub fn x_names(&self) -> Vec<String> {
        (1..=self.n).map(|i| format!("x{i}")).collect()
    }

    /// Parses a point given as `"x1=1/2,x2=3/4"` into variable order.
    /// Every original variable must be assigned exactly once.
    pub fn parse_point(&self, s: &str) -> Result<Vec<Rat>> {
        let names = self.x_names();
        let mut values: Vec<Option<Rat>> = vec![None; self.n];
        for (pos, part) in s.split(',').map(str::trim).enumerate() {
            let (name, value) = part.split_once('=').ok_or_else(|| Error::Parse {
                pos,
                msg: format!("expected `name=value`, found `{part}`"),
            })?;
            let idx = names
                .iter()
                .position(|x| x == name.trim())
                .ok_or_else(|| Error::MissingVariable(name.trim().to_string()))?;
            if values[idx].is_some() {
                return Err(Error::Parse {
                    pos,
                    msg: format!("`{}` assigned twice", name.trim()),
                });
            }
            values[idx] = Some(crate::exact::parse_rat(value.trim())?);
        }
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::MissingVariable(format!("x{}", i + 1))))
            .collect()
    }

    /// Extends a point of the cube to an assignment of every variable of the
    /// intermediate incomplete matrix: auxiliary `v` variables get prefix
    /// products, `L` gets the common side value.
    pub fn extended_assignment(&self, point: &[Rat]) -> Result<Assignment> {
        if point.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coordinates, got {}",
                self.n,
                point.len()
            )));
        }
        for (i, v) in point.iter().enumerate() {
            if *v < Rat::zero() || *v > Rat::from_integer(1.into()) {
                return Err(Error::OutOfCube {
                    name: format!("x{}", i + 1),
                    value: v.clone(),
                });
            }
        }
        let mut a = Assignment::new();
        for (i, v) in point.iter().enumerate() {
            a.set(format!("x{}", i + 1), v.clone());
        }
        let nf = &self.normal_form;
        let mut left_sum = Rat::zero();
        for (idx, term) in nf.terms().enumerate() {
            let term_no = idx + 1;
            let mut prefix = Rat::from_integer(1.into());
            for (j, &var) in term.vars.iter().enumerate() {
                prefix *= &point[var - 1];
                if j >= 1 {
                    a.set(aux_name(term_no, j + 1), prefix.clone());
                }
            }
            if idx < nf.left.len() {
                left_sum += &term.coeff * prefix;
            }
        }
        a.set("L", left_sum);
        Ok(a)
    }
}

/// Name of the auxiliary variable `v_{i,j}` (1-based term index, j >= 2).
pub fn aux_name(term: usize, j: usize) -> String {
    format!("v{term}_{j}")
}

fn slot_for_term(term_no: usize, term: &NormalTerm) -> Slot {
    match term.vars.len() {
        0 => Slot::Pinned,
        1 => Slot::Var(format!("x{}", term.vars[0])),
        m => Slot::Var(aux_name(term_no, m)),
    }
}

/// Assembles the block-diagonal incomplete matrix: one sum gadget per side
/// of the equation (sharing the variable `L`) and one product gadget per
/// auxiliary prefix product. Returns the matrix, the absolute block traces,
/// and the claimed base rank of the variable-free core.
pub fn build_h(nf: &NormalForm) -> Result<(IncompleteMatrix, Vec<Block>, usize)> {
    let coeff_sum: Rat = nf.terms().map(|t| t.coeff.clone()).sum();

    let side_terms = |terms: &[NormalTerm], base: usize| -> Vec<(Rat, Slot)> {
        if terms.is_empty() {
            // One-sided equation: the empty side pins L to zero.
            vec![(Rat::zero(), Slot::Pinned)]
        } else {
            terms
                .iter()
                .enumerate()
                .map(|(i, t)| (t.coeff.clone(), slot_for_term(base + i + 1, t)))
                .collect()
        }
    };
    let left = side_terms(&nf.left, 0);
    let right = side_terms(&nf.right, nf.left.len());

    let mut pieces: Vec<(IncompleteMatrix, Block)> = Vec::new();
    let (s1, t1) = sum_gadget(&left, "L", coeff_sum.clone())?;
    pieces.push((s1, Block::Sum { trace: t1 }));
    let (s2, t2) = sum_gadget(&right, "L", coeff_sum)?;
    pieces.push((s2, Block::Sum { trace: t2 }));

    for (idx, term) in nf.terms().enumerate() {
        let term_no = idx + 1;
        for j in 2..=term.vars.len() {
            let u1 = if j == 2 {
                format!("x{}", term.vars[0])
            } else {
                aux_name(term_no, j - 1)
            };
            let u2 = format!("x{}", term.vars[j - 1]);
            let v = aux_name(term_no, j);
            let (p, t) = product_gadget(&u1, &u2, &v)?;
            pieces.push((p, Block::Product { trace: t }));
        }
    }

    // Base rank of the variable-free core: 5 per variable sum term, 1 per
    // pinned term, 9 per product block.
    let mut rho = 0usize;
    for (mat, block) in &pieces {
        let _ = mat;
        match block {
            Block::Sum { trace } => {
                for slot in &trace.slots {
                    rho += if slot.is_some() { 5 } else { 1 };
                }
            }
            Block::Product { .. } => rho += 9,
        }
    }

    let rows: usize = pieces.iter().map(|(m, _)| m.rows()).sum();
    let cols: usize = pieces.iter().map(|(m, _)| m.cols()).sum();
    let mut h = IncompleteMatrix::constants(rows, cols);
    let mut blocks = Vec::with_capacity(pieces.len());
    let (mut ro, mut co) = (0usize, 0usize);
    for (mat, block) in pieces {
        for i in 0..mat.rows() {
            for j in 0..mat.cols() {
                h.set_cell_raw(ro + i, co + j, mat.get(i, j).clone());
            }
        }
        for range in mat.ranges().values() {
            h.insert_range(range.clone());
        }
        blocks.push(match block {
            Block::Sum { trace } => Block::Sum {
                trace: trace.offset(ro, co),
            },
            Block::Product { trace } => Block::Product {
                trace: trace.offset(ro, co),
            },
        });
        ro += mat.rows();
        co += mat.cols();
    }

    // Block-diagonality makes row/column repeats impossible; check anyway.
    for (name, profile) in h.occurrence_profile() {
        if !profile.rows_distinct || !profile.cols_distinct {
            return Err(Error::GadgetPrecondition(format!(
                "variable `{name}` repeats a row or column in the assembly"
            )));
        }
    }
    Ok((h, blocks, rho))
}

/// The canonical elimination order: original variables by index, then the
/// auxiliary prefix products in (term, position) order, then `L`.
fn elimination_order(nf: &NormalForm) -> Vec<String> {
    let mut order: Vec<String> = (1..=nf.n).map(|i| format!("x{i}")).collect();
    for (idx, term) in nf.terms().enumerate() {
        for j in 2..=term.vars.len() {
            order.push(aux_name(idx + 1, j));
        }
    }
    order.push("L".to_string());
    order
}

/// Applies the Γ eliminator once per variable, in canonical order, with
/// parameters chosen by the range recipe.
pub fn eliminate_all(
    h: IncompleteMatrix,
    blocks: Vec<Block>,
    claimed_rho: usize,
    nf: &NormalForm,
) -> Result<Instance> {
    for i in 1..=nf.n {
        if h.range_of(&format!("x{i}")).is_none() {
            return Err(Error::InvalidInstance(format!(
                "variable x{i} does not occur in the polynomial"
            )));
        }
    }

    let in_shape = (h.rows(), h.cols());
    let mut current = h;
    let mut gammas: Vec<GammaTrace> = Vec::new();
    for name in elimination_order(nf) {
        let range = current
            .range_of(&name)
            .ok_or_else(|| Error::MissingVariable(name.clone()))?
            .clone();
        let (m, n, p, q) = gamma_params_for_range(&range.low, &range.high)?;
        let (next, trace) = gamma_wrap(&current, &name, m, n, p, q)?;
        current = next;
        gammas.push(trace);
    }
    if !current.variables().is_empty() {
        return Err(Error::InvalidInstance(format!(
            "variables left after elimination: {:?}",
            current.variables()
        )));
    }

    // Size recurrences are tight by construction; keep them as hard checks.
    let extra_rows: usize = gammas.iter().map(|g| 5 * g.tau + 5).sum();
    let extra_cols: usize = gammas.iter().map(|g| 5 * g.tau + 4).sum();
    if current.rows() != in_shape.0 + extra_rows || current.cols() != in_shape.1 + extra_cols {
        return Err(Error::InvalidInstance("shape recurrence violated".into()));
    }

    let matrix = current.complete(&Assignment::new())?;
    if !matrix.is_nonnegative() {
        return Err(Error::InvalidInstance("compiled matrix is negative".into()));
    }

    // Probes: first occurrence of each variable in its Γ layer, with the
    // anchor and selector cells pushed forward through the later layers.
    let mut probes = BTreeMap::new();
    for (idx, gamma) in gammas.iter().enumerate() {
        let push = |mut cell: (usize, usize)| {
            for later in &gammas[idx + 1..] {
                cell = (later.row_map[cell.0], later.col_map[cell.1]);
            }
            cell
        };
        probes.insert(
            gamma.var.clone(),
            Probe {
                layer: idx + 1, // layer 0 is the assembly
                anchor: push((gamma.occ_rows[0], gamma.occ_cols[0])),
                selector: push((gamma.g_rows[0], gamma.occ_cols[0])),
                m_param: gamma.m.clone(),
            },
        );
    }

    let k = claimed_rho + gammas.iter().map(|g| 5 * g.tau + 4).sum::<usize>();
    let mut layers = vec![Layer::Assembly { blocks }];
    layers.extend(gammas.into_iter().map(|trace| Layer::Gamma { trace }));

    Ok(Instance {
        matrix,
        k,
        n: nf.n,
        claimed_rho,
        layers,
        probes,
        normal_form: nf.clone(),
    })
}

/// The full reduction: `eliminate_all . build_h . normalize`. Deterministic;
/// identical input polynomials yield identical instances.
pub fn compile(f: &Polynomial) -> Result<Instance> {
    let nf = normalize(f);
    let (h, blocks, rho) = build_h(&nf)?;
    eliminate_all(h, blocks, rho, &nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, ratio};
    use crate::poly::parse_poly;

    #[test]
    fn build_h_square_minus_linear() {
        // x1^2 - x1: blocks S(L = v1_2), S(L = x1), P(v1_2 = x1 * x1).
        let f = parse_poly("x1^2 - x1").unwrap();
        let nf = normalize(&f);
        let (h, blocks, rho) = build_h(&nf).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(rho, 5 + 5 + 9);
        let profile = h.occurrence_profile();
        assert_eq!(profile["x1"].count, 3);
        assert_eq!(profile["v1_2"].count, 2);
        assert_eq!(profile["L"].count, 2);
    }

    #[test]
    fn build_h_linear_with_constant() {
        let f = parse_poly("x1 + x2 - 1").unwrap();
        let nf = normalize(&f);
        let (_, blocks, rho) = build_h(&nf).unwrap();
        assert_eq!(blocks.len(), 2);
        // Two variable terms at 5 each, one pinned term at 1.
        assert_eq!(rho, 11);
    }

    #[test]
    fn compile_linear_k() {
        let f = parse_poly("x1 + x2 - 1").unwrap();
        let inst = compile(&f).unwrap();
        assert_eq!(inst.claimed_rho, 11);
        assert_eq!(inst.k, 43);
        assert_eq!(inst.n, 2);
        assert_eq!(inst.k, inst.recompute_k());
    }

    #[test]
    fn compile_square_k() {
        let f = parse_poly("x1^2 - x1").unwrap();
        let inst = compile(&f).unwrap();
        assert_eq!(inst.claimed_rho, 19);
        assert_eq!(inst.k, 66);
        assert_eq!(inst.k, inst.recompute_k());
    }

    #[test]
    fn compile_is_deterministic() {
        let f = parse_poly("x1 x2 - x3").unwrap();
        let a = serde_json::to_vec(&compile(&f).unwrap()).unwrap();
        let b = serde_json::to_vec(&compile(&f).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compile_rejects_unused_variable() {
        // x2 is mentioned (fixing n = 2), x1 never occurs.
        let f = parse_poly("x2").unwrap();
        assert!(compile(&f).is_err());
    }

    #[test]
    fn instance_probes_cover_all_variables() {
        let f = parse_poly("x1^2 - x1").unwrap();
        let inst = compile(&f).unwrap();
        let names: Vec<&str> = inst.probes.keys().map(|s| s.as_str()).collect();
        assert_eq!(names, vec!["L", "v1_2", "x1"]);
        // Every probe addresses a cell inside the matrix.
        for probe in inst.probes.values() {
            assert!(probe.anchor.0 < inst.matrix.rows());
            assert!(probe.anchor.1 < inst.matrix.cols());
            assert!(probe.selector.0 < inst.matrix.rows());
            assert!(probe.selector.1 < inst.matrix.cols());
            // Anchors hold the layer parameter M.
            assert_eq!(
                inst.matrix.get(probe.anchor.0, probe.anchor.1),
                &probe.m_param
            );
            // Selectors hold 1.
            assert_eq!(
                inst.matrix.get(probe.selector.0, probe.selector.1),
                &rat(1)
            );
        }
    }

    #[test]
    fn extended_assignment_prefix_products() {
        let f = parse_poly("3 x1 x2 x3 - x1").unwrap();
        let inst = compile(&f).unwrap();
        let point = [ratio(1, 2), ratio(1, 3), rat(1)];
        let a = inst.extended_assignment(&point).unwrap();
        assert_eq!(a.get("v1_2").unwrap(), &ratio(1, 6));
        assert_eq!(a.get("v1_3").unwrap(), &ratio(1, 6));
        // L = 3 * x1 x2 x3.
        assert_eq!(a.get("L").unwrap(), &ratio(1, 2));
    }

    #[test]
    fn extended_assignment_rejects_out_of_cube() {
        let f = parse_poly("x1^2 - x1").unwrap();
        let inst = compile(&f).unwrap();
        assert!(matches!(
            inst.extended_assignment(&[rat(2)]),
            Err(Error::OutOfCube { .. })
        ));
    }

    #[test]
    fn instance_json_round_trip() {
        let f = parse_poly("x1 + x2 - 1").unwrap();
        let inst = compile(&f).unwrap();
        let js = serde_json::to_string(&inst).unwrap();
        let back: Instance = serde_json::from_str(&js).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn one_sided_polynomial_compiles() {
        let f = parse_poly("3 x1 x2 x3").unwrap();
        let inst = compile(&f).unwrap();
        // Left: one variable term (5) + two products (9 + 9);
        // right: pinned zero term (1).
        assert_eq!(inst.claimed_rho, 5 + 1 + 18);
        assert_eq!(inst.k, inst.recompute_k());
        // L is pinned to zero by the empty side; the zero locus inside the
        // cube is unchanged.
        let a = inst.extended_assignment(&[rat(0), rat(1), rat(1)]).unwrap();
        assert_eq!(a.get("L").unwrap(), &rat(0));
    }

    #[test]
    fn blocks_are_disjoint() {
        let f = parse_poly("x1 x2 - x3").unwrap();
        let nf = normalize(&f);
        let (h, blocks, _) = build_h(&nf).unwrap();
        let _ = h;
        // Any two cells from different blocks share no row or column: check
        // via the traces' row intervals (blocks are laid out diagonally).
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for b in &blocks {
            let rows: Vec<usize> = match b {
                Block::Sum { trace } => trace
                    .y_rows
                    .iter()
                    .copied()
                    .chain(trace.nested.iter().flatten().flat_map(|t| t.new_rows))
                    .collect(),
                Block::Product { trace } => trace
                    .rows
                    .iter()
                    .copied()
                    .chain(trace.nested.iter().flat_map(|t| t.new_rows))
                    .collect(),
            };
            let lo = *rows.iter().min().unwrap();
            let hi = *rows.iter().max().unwrap();
            for &(plo, phi) in &spans {
                assert!(hi < plo || lo > phi);
            }
            spans.push((lo, hi));
        }
    }
}
