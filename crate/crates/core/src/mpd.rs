//! Level-m divided-power arithmetic and the level-indexed rendering of
//! the first Chern class cocycle.
//!
//! Only the principal model is carried: the canonical divided-power
//! ideal (p) with symbolic generators of valuation >= 1.  The symbol
//! `x^{{k}_m}` is never expanded; it is a coefficient together with the
//! valuation bookkeeping forced by `x^k = q_k! x^{{k}_m}` where
//! `k = p^m q_k + r_k`.

use serde::{Deserialize, Serialize};

use crate::cech::{Cochain, TotalCochain};
use crate::chern::LiftedUnitCocycle;
use crate::error::{Error, Result};
use crate::laurent::{ChartedSpace, DiffForm, LaurentSection, Simplex, UnitSection};
use crate::padic::{log_one_unit, vp_factorial, PAdicContext, PAdicElem};

pub const MAX_LEVEL: u32 = 6;

/// Context of the level-m principal divided-power model.
#[derive(Clone, Debug)]
pub struct MpdContext {
    pub ctx: PAdicContext,
    pub level: u32,
    /// valuation of the principal test-ideal generator (default 1, i.e.
    /// the ideal (p))
    pub generator_valuation: u32,
}

impl MpdContext {
    pub fn new(ctx: PAdicContext, level: u32) -> Result<Self> {
        Self::with_generator_valuation(ctx, level, 1)
    }

    pub fn with_generator_valuation(
        ctx: PAdicContext,
        level: u32,
        generator_valuation: u32,
    ) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidInput(format!(
                "level {level} exceeds the supported bound {MAX_LEVEL}"
            )));
        }
        if generator_valuation == 0 {
            return Err(Error::Valuation(
                "the test ideal generator needs valuation >= 1".into(),
            ));
        }
        Ok(Self {
            ctx,
            level,
            generator_valuation,
        })
    }

    /// `p^level`, as an exponent-sized integer.
    pub fn p_pow_level(&self) -> u64 {
        (self.ctx.p()).pow(self.level)
    }
}

/// Outcome of the level-m reduction `x^k = q_k! x^{{k}_m}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpdReduction {
    pub q: u64,
    pub r: u64,
    /// q! as a truncated p-adic element
    pub factorial: PAdicElem,
    /// v_p(q!) certified by Legendre's formula
    pub factorial_valuation: u64,
}

/// Unique `q, r` with `k = p^m q + r`, `0 <= r < p^m`, plus the unit
/// factor `q_k!`.
pub fn mpd_reduce(mctx: &MpdContext, k: u64) -> MpdReduction {
    let ctx = &mctx.ctx;
    let pm = mctx.p_pow_level();
    let q = k / pm;
    let r = k % pm;
    let mut factorial = PAdicElem::one(ctx);
    for i in 1..=q {
        factorial = factorial.mul(ctx, &PAdicElem::integer(ctx, i as i64));
    }
    MpdReduction {
        q,
        r,
        factorial,
        factorial_valuation: vp_factorial(ctx, q),
    }
}

/// Formal term `coeff * x^{{k}_m}` of the principal model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpdTerm {
    pub coeff: PAdicElem,
    pub index: u64,
    pub level: u32,
}

impl MpdTerm {
    /// Valuation assigned to `x^{{k}_m}` by the defining equation:
    /// `v(x^k) = k v`, so the symbol carries `k v - v_p(q_k!)`.
    pub fn assigned_valuation(&self, mctx: &MpdContext) -> i64 {
        let red = mpd_reduce(mctx, self.index);
        self.index as i64 * mctx.generator_valuation as i64 - red.factorial_valuation as i64
    }
}

/// `psi_m(1 + x) = log((1 + x)^{p^m})`, equal to `p^m log(1 + x)` on its
/// whole domain.
pub fn psi_m(mctx: &MpdContext, u: &PAdicElem) -> Result<PAdicElem> {
    let ctx = &mctx.ctx;
    let one = PAdicElem::one(ctx);
    let x = u.sub(ctx, &one);
    if !x.is_zero() && x.valuation(ctx) < mctx.generator_valuation {
        return Err(Error::Valuation(format!(
            "psi_m needs a 1-unit of the test ideal (valuation >= {})",
            mctx.generator_valuation
        )));
    }
    log_one_unit(ctx, &u.pow_u64(ctx, mctx.p_pow_level()))
}

/// Section-level `psi_m` of a witnessed 1-unit.
pub fn psi_m_section(
    mctx: &MpdContext,
    space: &ChartedSpace,
    unit: &UnitSection,
) -> Result<LaurentSection> {
    unit.pow(space, mctx.p_pow_level() as i64)?.log(space)
}

/// The level-indexed cocycle built from one compatible lift system: edge
/// components `dlog u_ij`, triangle components
/// `-(1/p^m) log((u_ij u_ik^{-1} u_jk)^{p^m})`.  The renormalization is
/// exact division with precision accounting, and the result equals the
/// level-0 cocycle at the common precision.
pub fn compatible_lift_cocycle(
    space: &ChartedSpace,
    cocycle: &LiftedUnitCocycle,
    level: u32,
) -> Result<TotalCochain> {
    if space.ctx.precision() <= level {
        return Err(Error::PrecisionExhausted(format!(
            "level {level} needs working precision above {level}"
        )));
    }
    let mctx = MpdContext::new(space.ctx.clone(), level)?;
    let ctx = &space.ctx;
    let mut edge_part = Cochain::zero(1, 1);
    for simplex in space.simplices(1) {
        let form = cocycle.edge(simplex[0], simplex[1]).dlog(space)?;
        if !form.comps.is_empty() {
            edge_part.data.insert(simplex, form);
        }
    }
    let mut triangle_part = Cochain::zero(2, 0);
    for simplex in space.simplices(2) {
        let tau = cocycle.triple(space, simplex[0], simplex[1], simplex[2])?;
        let psi = psi_m_section(&mctx, space, &tau)?;
        let mut renormalized = LaurentSection::zero(psi.chart, psi.prec_floor.saturating_sub(level));
        for (exps, coeff) in &psi.terms {
            let divided = coeff.div_exact_p_pow(ctx, level).map_err(|e| match e {
                Error::PrecisionExhausted(_) => Error::PrecisionExhausted(format!(
                    "renormalizing by p^{level} exceeds the precision budget"
                )),
                other => other,
            })?;
            if divided.prec() == 0 {
                return Err(Error::PrecisionExhausted(format!(
                    "renormalizing by p^{level} exceeds the precision budget"
                )));
            }
            renormalized.terms.insert(exps.clone(), divided);
        }
        let form = DiffForm::from_section(renormalized.neg(space));
        if !form.comps.is_empty() {
            triangle_part.data.insert(simplex, form);
        }
    }
    let mut z = TotalCochain::zero(2);
    z.set(edge_part);
    z.set(triangle_part);
    Ok(z)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangleRescale {
    pub simplex: Simplex,
    pub precision: u32,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelRescaleReport {
    pub level_low: u32,
    pub level_high: u32,
    pub triangles: Vec<TriangleRescale>,
    pub pass: bool,
}

/// Verifies `psi_{m'}(tau) = p^{m'-m} psi_m(tau)` on every triangle,
/// exactly at the reported precision.
pub fn level_rescale_check(
    space: &ChartedSpace,
    cocycle: &LiftedUnitCocycle,
    level_low: u32,
    level_high: u32,
) -> Result<LevelRescaleReport> {
    if level_low >= level_high || level_high > MAX_LEVEL {
        return Err(Error::InvalidInput(format!(
            "levels must satisfy m < m' <= {MAX_LEVEL}"
        )));
    }
    let ctx = &space.ctx;
    let low = MpdContext::new(ctx.clone(), level_low)?;
    let high = MpdContext::new(ctx.clone(), level_high)?;
    let ratio = (ctx.p()).pow(level_high - level_low) as i64;
    let mut triangles = Vec::new();
    let mut pass = true;
    for simplex in space.simplices(2) {
        let tau = cocycle.triple(space, simplex[0], simplex[1], simplex[2])?;
        let a = psi_m_section(&high, space, &tau)?;
        let b = psi_m_section(&low, space, &tau)?;
        let scaled = b.mul_i64(space, ratio);
        let ok = a.eq_tracked(space, &scaled);
        let precision = a.min_prec().min(scaled.min_prec());
        pass &= ok;
        triangles.push(TriangleRescale {
            simplex,
            precision,
            pass: ok,
        });
    }
    Ok(LevelRescaleReport {
        level_low,
        level_high,
        triangles,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cech::{class_coeff, total_diff};
    use crate::chern::{c1_cocycle, line_bundle_cocycle};
    use crate::laurent::{build_space, build_space_with_window, SpaceDescriptor};
    use crate::sampling;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reduction_instances() {
        // p = 2, m = 1, k = 5: 5 = 2*2 + 1, factor 2! = 2
        let m1 = MpdContext::new(PAdicContext::new(2, 8).unwrap(), 1).unwrap();
        let red = mpd_reduce(&m1, 5);
        assert_eq!((red.q, red.r), (2, 1));
        assert_eq!(red.factorial.balanced(&m1.ctx), Some(2));
        assert_eq!(red.factorial_valuation, 1);

        // m = 0 is classical divided powers: q = k, r = 0
        let m0 = MpdContext::new(PAdicContext::new(5, 8).unwrap(), 0).unwrap();
        let red = mpd_reduce(&m0, 4);
        assert_eq!((red.q, red.r), (4, 0));
        assert_eq!(red.factorial.balanced(&m0.ctx), Some(24));

        // p = 3, m = 2, k = 19 = 9*2 + 1, factor 2! = 2
        let m2 = MpdContext::new(PAdicContext::new(3, 8).unwrap(), 2).unwrap();
        let red = mpd_reduce(&m2, 19);
        assert_eq!((red.q, red.r), (2, 1));
        assert_eq!(red.factorial.balanced(&m2.ctx), Some(2));
    }

    #[test]
    fn reduction_bookkeeping_is_consistent() {
        // v_p(q_k!) + assigned valuation = k * v for k <= 200, m <= 3
        for p in [2u64, 3, 5] {
            let ctx = PAdicContext::new(p, 8).unwrap();
            for m in 0..=3u32 {
                let mctx = MpdContext::new(ctx.clone(), m).unwrap();
                for k in 0..=200u64 {
                    let red = mpd_reduce(&mctx, k);
                    let term = MpdTerm {
                        coeff: PAdicElem::one(&ctx),
                        index: k,
                        level: m,
                    };
                    let assigned = term.assigned_valuation(&mctx);
                    assert_eq!(
                        red.factorial_valuation as i64 + assigned,
                        k as i64,
                        "p={p} m={m} k={k}"
                    );
                    // powers tend p-adically to zero: the Legendre bound
                    // keeps the assigned valuation above k v - v_p(k!), and
                    // for positive levels it grows at least linearly
                    let lower = k as i64 - vp_factorial(&ctx, k) as i64;
                    assert!(assigned >= lower);
                    if m >= 1 {
                        assert!(assigned >= (k as i64 + 1) / 2);
                    }
                }
            }
        }
    }

    #[test]
    fn psi_is_p_pow_times_log() {
        // psi_0 = log and psi_m(1) = 0
        let ctx = PAdicContext::new(3, 8).unwrap();
        let m0 = MpdContext::new(ctx.clone(), 0).unwrap();
        let u = PAdicElem::integer(&ctx, 4);
        assert!(psi_m(&m0, &PAdicElem::one(&ctx)).unwrap().is_zero());
        assert!(psi_m(&m0, &u)
            .unwrap()
            .eq_at_min_prec(&ctx, &log_one_unit(&ctx, &u).unwrap()));

        // psi_1(4) = 3 log(4) = 144 mod 3^5 at precision >= 4
        let wide = PAdicContext::new(3, 10).unwrap();
        let m1 = MpdContext::new(wide.clone(), 1).unwrap();
        let v = psi_m(&m1, &PAdicElem::integer(&wide, 4)).unwrap();
        assert!(v.prec() >= 4);
        use num_bigint::BigUint;
        assert_eq!(
            v.residue() % BigUint::from(243u32),
            BigUint::from(144u32)
        );

        // random 1-units across levels
        for p in [2u64, 3, 5] {
            let ctx = PAdicContext::new(p, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(13 * p);
            for m in 0..=3u32 {
                let mctx = MpdContext::new(ctx.clone(), m).unwrap();
                for _ in 0..100 {
                    let a: u64 = rng.gen();
                    let u = PAdicElem::one(&ctx).add(
                        &ctx,
                        &PAdicElem::from_biguint(&ctx, num_bigint::BigUint::from(a) * p, 8),
                    );
                    let lhs = psi_m(&mctx, &u).unwrap();
                    let rhs = log_one_unit(&ctx, &u)
                        .unwrap()
                        .mul_i64(&ctx, mctx.p_pow_level() as i64);
                    assert!(lhs.eq_at_min_prec(&ctx, &rhs));
                }
            }
        }
    }

    #[test]
    fn level_cocycle_reduces_to_c1_and_is_closed() {
        let ctx = PAdicContext::new(5, 6).unwrap();
        let window = sampling::perturbation_window(6, 2);
        let sp = build_space_with_window(&SpaceDescriptor::p2(), &ctx, window, window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = line_bundle_cocycle(&sp, 1)
            .unwrap()
            .perturb(&sp, &mut rng, 2, 2)
            .unwrap();
        let c1 = c1_cocycle(&sp, &u).unwrap();
        for m in 0..=2u32 {
            let z = compatible_lift_cocycle(&sp, &u, m).unwrap();
            assert!(total_diff(&sp, &z).unwrap().is_zero(), "level {m} closure");
            assert!(z.sub(&sp, &c1).is_zero(), "level {m} equals c1");
            let class = class_coeff(&sp, &z).unwrap();
            assert_eq!(class.balanced(&ctx), Some(1), "level {m} class");
        }
        // trivial cocycle vanishes at every level
        let trivial = line_bundle_cocycle(&sp, 0).unwrap();
        for m in 0..=2u32 {
            assert!(compatible_lift_cocycle(&sp, &trivial, m).unwrap().is_zero());
        }
    }

    #[test]
    fn rescale_ratio_is_a_power_of_p() {
        let ctx = PAdicContext::new(3, 8).unwrap();
        let window = sampling::perturbation_window(8, 2);
        let sp = build_space_with_window(&SpaceDescriptor::p2(), &ctx, window, window).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = line_bundle_cocycle(&sp, 1)
            .unwrap()
            .perturb(&sp, &mut rng, 2, 2)
            .unwrap();
        for (m, m2) in [(0u32, 1u32), (1, 2), (0, 2)] {
            let report = level_rescale_check(&sp, &u, m, m2).unwrap();
            assert!(report.pass, "({m},{m2})");
        }
        // trivial cocycle: 0 = p^{m'-m} * 0
        let trivial = line_bundle_cocycle(&sp, 0).unwrap();
        let report = level_rescale_check(&sp, &trivial, 0, 1).unwrap();
        assert!(report.pass);

        assert!(level_rescale_check(&sp, &u, 2, 2).is_err());
    }

    #[test]
    fn level_zero_on_p1_needs_no_triangles() {
        let ctx = PAdicContext::new(5, 8).unwrap();
        let sp = build_space(&SpaceDescriptor::p1(), &ctx).unwrap();
        let u = line_bundle_cocycle(&sp, 2).unwrap();
        let z = compatible_lift_cocycle(&sp, &u, 3).unwrap();
        let class = class_coeff(&sp, &z).unwrap();
        assert_eq!(class.balanced(&ctx), Some(2));
    }
}
