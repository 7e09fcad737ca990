//! Seeded random cochains and perturbations for the verification suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cech::{total_diff, Cochain, TotalCochain};
use crate::error::Result;
use crate::laurent::{subsets_of_size, ChartedSpace, DiffForm, Exps, LaurentSection};
use crate::padic::PAdicElem;

/// Window wide enough to hold the inverse and logarithm series of
/// degree-`degree` 1-unit corrections at the given precision, with room
/// for chart transitions (coefficients of total degree k in such series
/// carry valuation at least k/degree, so supports stay below
/// degree * precision per transition layer).
pub fn perturbation_window(precision: u32, degree: u32) -> u32 {
    4 * degree * precision + 16
}

/// Random regular in-window monomial with exponents in a small box.
fn random_regular_exps(
    space: &ChartedSpace,
    simplex: &[u8],
    rng: &mut ChaCha8Rng,
    span: i32,
) -> Option<Exps> {
    let chart = simplex[0] as usize;
    let dim = space.charts[chart].dim();
    for _ in 0..64 {
        let exps: Exps = (0..dim).map(|_| rng.gen_range(-span..=span)).collect();
        let cox = space.cox_of_monomial(chart, &exps);
        if space.regular_on(simplex, &cox) && space.check_window(chart, &exps).is_ok() {
            return Some(exps);
        }
    }
    None
}

/// Random total cochain built from regular monomial forms.
pub fn random_cochain(
    space: &ChartedSpace,
    degree: usize,
    rng: &mut ChaCha8Rng,
    terms: usize,
) -> TotalCochain {
    let ctx = &space.ctx;
    let mut out = TotalCochain::zero(degree);
    let bidegrees: Vec<(usize, usize)> = (0..space.num_charts())
        .filter_map(|p| {
            let q = degree.checked_sub(p)?;
            (q <= space.dim).then_some((p, q))
        })
        .collect();
    if bidegrees.is_empty() {
        return out;
    }
    for _ in 0..terms {
        let (p, q) = bidegrees[rng.gen_range(0..bidegrees.len())];
        let simplices = space.simplices(p);
        let simplex = simplices[rng.gen_range(0..simplices.len())].clone();
        let chart = simplex[0] as usize;
        let wedges = subsets_of_size(space.charts[chart].dim(), q);
        let wedge = wedges[rng.gen_range(0..wedges.len())].clone();
        let Some(exps) = random_regular_exps(space, &simplex, rng, 2) else {
            continue;
        };
        let coeff = PAdicElem::integer(ctx, rng.gen_range(1..1_000_000));
        let section = LaurentSection::monomial(space, chart, exps, coeff).expect("in window");
        let mut form = DiffForm::zero(chart, q);
        form.comps.insert(wedge, section);
        let mut c = out
            .comps
            .remove(&(p, q))
            .unwrap_or_else(|| Cochain::zero(p, q));
        let merged = match c.data.remove(&simplex) {
            Some(prev) => prev.add(space, &form),
            None => form,
        };
        c.data.insert(simplex, merged);
        out.comps.insert((p, q), c);
    }
    out
}

/// Random coboundary of the given degree.
pub fn random_coboundary(
    space: &ChartedSpace,
    degree: usize,
    rng: &mut ChaCha8Rng,
    terms: usize,
) -> Result<TotalCochain> {
    assert!(degree >= 1);
    let w = random_cochain(space, degree - 1, rng, terms);
    total_diff(space, &w)
}

/// Random 1-unit correction polynomial `p * g` with `deg g <= max_degree`,
/// integer coefficients below p^2, and every monomial regular on the
/// overlap of the charts in `simplex` (so the perturbed lift is still a
/// section there).
pub fn random_one_unit_correction(
    space: &ChartedSpace,
    chart: usize,
    simplex: &[u8],
    rng: &mut ChaCha8Rng,
    max_degree: i32,
    terms: usize,
) -> LaurentSection {
    let ctx = &space.ctx;
    let p = ctx.p() as i64;
    let dim = space.charts[chart].dim();
    let mut g = LaurentSection::zero(chart, ctx.precision());
    for _ in 0..terms {
        let mut found = None;
        for _ in 0..128 {
            let cand: Exps = (0..dim)
                .map(|_| rng.gen_range(-max_degree..=max_degree))
                .collect();
            let total: i32 = cand.iter().map(|e| e.abs()).sum();
            if total > max_degree {
                continue;
            }
            let cox = space.cox_of_monomial(chart, &cand);
            if space.regular_on(simplex, &cox) {
                found = Some(cand);
                break;
            }
        }
        let Some(exps) = found else { continue };
        let c = rng.gen_range(0..p * p);
        let coeff = PAdicElem::integer(ctx, p * c);
        if coeff.is_zero() {
            continue;
        }
        let mono = LaurentSection::monomial(space, chart, exps, coeff).expect("small exponents");
        g = g.add(space, &mono);
    }
    g
}
