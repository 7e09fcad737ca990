//! Projective bundles of split bundles: the xi-power decomposition,
//! higher Chern classes, Whitney additivity and rank verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cech::{cup, solve_in_span, total_cohomology_ranks, RankTable, TotalCochain};
use crate::chern::{c1_cocycle, line_bundle_cocycle, LiftedUnitCocycle};
use crate::error::{Error, Result};
use crate::laurent::{
    build_space, pullback_power_p1_form, ChartedSpace, SpaceDescriptor, UnitSection,
};
use crate::padic::{PAdicContext, PAdicElem};

fn bundle_params(space: &ChartedSpace) -> Result<(usize, Vec<i32>)> {
    match &space.descriptor {
        SpaceDescriptor::ProjBundle { base_n, twists } => Ok((*base_n as usize, twists.clone())),
        _ => Err(Error::UnsupportedSpace("expected a projective bundle".into())),
    }
}

/// Cox exponents of the trivializing section `s_l t_i^{a_l}` of O(1) on
/// chart (i, l).
fn taut_section_cox(space: &ChartedSpace, base_n: usize, twists: &[i32], chart: usize) -> Vec<i64> {
    let r = twists.len();
    let (i, l) = (chart / r, chart % r);
    let mut cox = vec![0i64; space.cox_count];
    cox[base_n + 1 + l] = 1;
    cox[i] = twists[l] as i64;
    cox
}

/// The tautological O(1) cocycle of P(E) with pure monomial lifts.
pub fn tautological_cocycle(space: &ChartedSpace) -> Result<LiftedUnitCocycle> {
    let (base_n, twists) = bundle_params(space)?;
    let mut edges = BTreeMap::new();
    for simplex in space.simplices(1) {
        let (a, b) = (simplex[0] as usize, simplex[1] as usize);
        let mut cox = taut_section_cox(space, base_n, &twists, b);
        for (c, v) in taut_section_cox(space, base_n, &twists, a).iter().enumerate() {
            cox[c] -= v;
        }
        let monomial = space
            .exps_from_cox(a, &cox)
            .ok_or_else(|| Error::InvalidInput("tautological transition left the lattice".into()))?;
        edges.insert(
            (simplex[0], simplex[1]),
            UnitSection::monomial_unit(space, a, monomial)?,
        );
    }
    LiftedUnitCocycle::new(space, edges)
}

/// Pullback of the base O(1) cocycle to the bundle space.
pub fn base_hyperplane_cocycle(space: &ChartedSpace) -> Result<LiftedUnitCocycle> {
    let (_, twists) = bundle_params(space)?;
    let r = twists.len();
    let mut edges = BTreeMap::new();
    for simplex in space.simplices(1) {
        let (a, b) = (simplex[0] as usize, simplex[1] as usize);
        let (ia, ib) = (a / r, b / r);
        let mut cox = vec![0i64; space.cox_count];
        cox[ib] += 1;
        cox[ia] -= 1;
        let monomial = space
            .exps_from_cox(a, &cox)
            .ok_or_else(|| Error::InvalidInput("hyperplane pullback left the lattice".into()))?;
        edges.insert(
            (simplex[0], simplex[1]),
            UnitSection::monomial_unit(space, a, monomial)?,
        );
    }
    LiftedUnitCocycle::new(space, edges)
}

/// `xi = c1` of the tautological cocycle.
pub fn xi_cocycle(space: &ChartedSpace) -> Result<TotalCochain> {
    c1_cocycle(space, &tautological_cocycle(space)?)
}

/// Decomposition of a closed cochain over the basis `h^a cup xi^b`,
/// `b <= r-1`, `a <=` base dimension.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub coefficients: BTreeMap<(usize, usize), PAdicElem>,
    pub precision: u32,
}

fn reference_basis(
    space: &ChartedSpace,
    degree: usize,
) -> Result<(Vec<(usize, usize)>, Vec<TotalCochain>)> {
    let (base_n, twists) = bundle_params(space)?;
    let r = twists.len();
    if degree % 2 != 0 {
        return Err(Error::InvalidInput("reference classes live in even degrees".into()));
    }
    let k = degree / 2;
    let h = c1_cocycle(space, &base_hyperplane_cocycle(space)?)?;
    let xi = xi_cocycle(space)?;
    let mut keys = Vec::new();
    let mut basis = Vec::new();
    for a in 0..=base_n.min(k) {
        let b = k - a;
        if b > r - 1 {
            continue;
        }
        let mut acc = TotalCochain::unit(space);
        for _ in 0..a {
            acc = cup(space, &acc, &h)?;
        }
        for _ in 0..b {
            acc = cup(space, &acc, &xi)?;
        }
        keys.push((a, b));
        basis.push(acc);
    }
    Ok((keys, basis))
}

/// Unique coefficients with `z - sum lambda_ab h^a cup xi^b` exact.
pub fn decompose(space: &ChartedSpace, z: &TotalCochain) -> Result<Decomposition> {
    let (keys, basis) = reference_basis(space, z.degree)?;
    let sol = solve_in_span(space, z, &basis)?;
    Ok(Decomposition {
        coefficients: keys.into_iter().zip(sol.coefficients).collect(),
        precision: sol.precision,
    })
}

/// Chern class coefficients `c_0..c_r` reported on the powers of the
/// hyperplane class of the base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChernVector {
    pub base_n: u32,
    pub twists: Vec<i32>,
    pub classes: Vec<PAdicElem>,
    pub precision: u32,
}

fn supported_sizes(base_n: usize, r: usize) -> Result<()> {
    match (base_n, r) {
        (1, 2) | (2, 2) | (1, 3) => Ok(()),
        (_, 1) => Ok(()),
        _ => Err(Error::UnsupportedSpace(format!(
            "rank {r} over P^{base_n} is outside the supported sizes"
        ))),
    }
}

/// Higher Chern classes from the xi-power decomposition
/// `xi^r = sum_i (-1)^{i+1} c_i xi^{r-i}`.
pub fn chern_classes(space: &ChartedSpace) -> Result<ChernVector> {
    let (base_n, twists) = bundle_params(space)?;
    let r = twists.len();
    supported_sizes(base_n, r)?;
    let ctx = &space.ctx;
    let xi = xi_cocycle(space)?;
    let mut xi_r = TotalCochain::unit(space);
    for _ in 0..r {
        xi_r = cup(space, &xi_r, &xi)?;
    }
    let dec = decompose(space, &xi_r)?;
    let mut classes = vec![PAdicElem::zero(dec.precision); r + 1];
    classes[0] = PAdicElem::one(ctx);
    for i in 1..=r {
        let coeff = dec
            .coefficients
            .get(&(i, r - i))
            .cloned()
            .unwrap_or_else(|| PAdicElem::zero(dec.precision));
        // xi^r = sum_i (-1)^{i+1} c_i xi^{r-i}
        classes[i] = if i % 2 == 1 { coeff } else { coeff.neg(ctx) };
        if 2 * i > 2 * base_n {
            debug_assert!(classes[i].is_zero(), "classes above the base dimension vanish");
        }
    }
    Ok(ChernVector {
        base_n: base_n as u32,
        twists,
        precision: dec.precision,
        classes,
    })
}

/// Chern vector of a split bundle over P^n given by its twists, padded to
/// length `r + 1`; rank one goes through the base directly.
pub fn chern_vector_of_twists(
    ctx: &PAdicContext,
    base_n: u32,
    twists: &[i32],
) -> Result<Vec<PAdicElem>> {
    if twists.len() == 1 {
        let base = build_space(&SpaceDescriptor::ProjectiveSpace { n: base_n }, ctx)?;
        let class = crate::chern::c1_class(&base, &line_bundle_cocycle(&base, twists[0])?)?;
        return Ok(vec![PAdicElem::one(ctx), class]);
    }
    let space = build_space(
        &SpaceDescriptor::ProjBundle {
            base_n,
            twists: twists.to_vec(),
        },
        ctx,
    )?;
    Ok(chern_classes(&space)?.classes)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyReport {
    pub lhs: Vec<PAdicElem>,
    pub rhs: Vec<PAdicElem>,
    pub precision: u32,
    pub pass: bool,
}

/// Whitney additivity on the split exact sequence
/// `0 -> E' -> E' + E'' -> E'' -> 0`.
pub fn whitney_check(
    ctx: &PAdicContext,
    base_n: u32,
    twists_left: &[i32],
    twists_right: &[i32],
) -> Result<WhitneyReport> {
    let mut all: Vec<i32> = twists_left.to_vec();
    all.extend_from_slice(twists_right);
    let lhs = chern_vector_of_twists(ctx, base_n, &all)?;
    let left = chern_vector_of_twists(ctx, base_n, twists_left)?;
    let right = chern_vector_of_twists(ctx, base_n, twists_right)?;
    let dim_bound = base_n as usize;
    let mut rhs = vec![PAdicElem::zero(ctx.precision()); all.len() + 1];
    for i in 0..=all.len() {
        let mut acc = PAdicElem::zero(ctx.precision());
        for j in 0..=i {
            if j < left.len() && (i - j) < right.len() {
                acc = acc.add(ctx, &left[j].mul(ctx, &right[i - j]));
            }
        }
        // classes above the base dimension are identically zero
        rhs[i] = if i > dim_bound { PAdicElem::zero(acc.prec()) } else { acc };
    }
    let mut pass = true;
    let mut precision = ctx.precision();
    for (a, b) in lhs.iter().zip(&rhs) {
        precision = precision.min(a.prec().min(b.prec()));
        if !a.eq_at_min_prec(ctx, b) {
            pass = false;
        }
    }
    Ok(WhitneyReport {
        lhs,
        rhs,
        precision,
        pass,
    })
}

/// Predicted free ranks from the direct-sum decomposition
/// `H^n(P(E)) = sum_i H^{n-2i}(X) xi^i`.
pub fn predicted_ranks(desc: &SpaceDescriptor, max_degree: usize) -> Vec<usize> {
    let base_rank = |n: usize, k: i64| -> usize {
        (k >= 0 && k % 2 == 0 && k <= 2 * n as i64) as usize
    };
    match desc {
        SpaceDescriptor::ProjectiveSpace { n } => (0..=max_degree)
            .map(|k| base_rank(*n as usize, k as i64))
            .collect(),
        SpaceDescriptor::ProjBundle { base_n, twists } => (0..=max_degree)
            .map(|k| {
                (0..twists.len())
                    .map(|i| base_rank(*base_n as usize, k as i64 - 2 * i as i64))
                    .sum()
            })
            .collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RanksReport {
    pub table: RankTable,
    pub predicted: Vec<usize>,
    pub window_stable: bool,
    pub matches_prediction: bool,
}

/// Ranks of the total-complex cohomology mod p^N against the direct-sum
/// prediction, with the window-stability guard.  The main pass runs both
/// the echelon route and the integer Smith route per block.
pub fn cohomology_ranks(space: &ChartedSpace) -> Result<RanksReport> {
    let max_degree = 2 * space.dim;
    let table = crate::cech::total_cohomology_ranks_cross_checked(space, max_degree)?;
    let wide = space.with_window_margin(2);
    let table_wide = total_cohomology_ranks(&wide, max_degree)?;
    let window_stable =
        table.ranks == table_wide.ranks && table.torsion == table_wide.torsion;
    if !window_stable {
        return Err(Error::WindowTooSmall(format!(
            "ranks changed under window growth: {:?} vs {:?}",
            table.ranks, table_wide.ranks
        )));
    }
    let predicted = predicted_ranks(&space.descriptor, max_degree);
    let matches_prediction =
        table.ranks == predicted && table.torsion.iter().all(|t| t.is_empty());
    Ok(RanksReport {
        table,
        predicted,
        window_stable,
        matches_prediction,
    })
}

/// Pullback of a total cochain along the degree-d power endomorphism of
/// P^1 (chart-level monomial map `t -> t^d`).
pub fn pullback_power_endomorphism(
    space: &ChartedSpace,
    z: &TotalCochain,
    d: u32,
) -> Result<TotalCochain> {
    if !matches!(space.descriptor, SpaceDescriptor::ProjectiveSpace { n: 1 }) {
        return Err(Error::UnsupportedSpace(
            "the power endomorphism pullback is implemented on P^1".into(),
        ));
    }
    let mut out = TotalCochain::zero(z.degree);
    for ((p, q), c) in &z.comps {
        let mut nc = crate::cech::Cochain::zero(*p, *q);
        for (simplex, form) in &c.data {
            nc.data
                .insert(simplex.clone(), pullback_power_p1_form(space, form, d)?);
        }
        out.comps.insert((*p, *q), nc);
    }
    Ok(out)
}

/// Frobenius on split bundles: twists scale by p, classes by p^i.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrobeniusSplitReport {
    pub classes: Vec<PAdicElem>,
    pub frobenius_classes: Vec<PAdicElem>,
    pub pass: bool,
}

pub fn frobenius_split_check(
    ctx: &PAdicContext,
    base_n: u32,
    twists: &[i32],
) -> Result<FrobeniusSplitReport> {
    let p = ctx.p() as i32;
    let scaled: Vec<i32> = twists.iter().map(|a| a * p).collect();
    let classes = chern_vector_of_twists(ctx, base_n, twists)?;
    let frobenius_classes = chern_vector_of_twists(ctx, base_n, &scaled)?;
    let mut pass = true;
    for (i, (c, fc)) in classes.iter().zip(&frobenius_classes).enumerate() {
        let expected = c.mul(ctx, &PAdicElem::integer(ctx, (p as i64).pow(i as u32)));
        if !fc.eq_at_min_prec(ctx, &expected) {
            pass = false;
        }
    }
    Ok(FrobeniusSplitReport {
        classes,
        frobenius_classes,
        pass,
    })
}
