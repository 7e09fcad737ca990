//! Verification suites behind `rigidchern verify`.
//!
//! Every suite is seeded and deterministic: case i derives its own RNG
//! from (seed, i), and reports are assembled in case order regardless of
//! how many workers RIGIDCHERN_THREADS allows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use rigidchern_core::laurent::{build_space_with_window, SpaceDescriptor};
use rigidchern_core::sampling::perturbation_window;
use rigidchern_core::{
    bundle, c1_class, c1_cocycle, cech, chern, line_bundle_cocycle, mpd, total_diff, zeta_witness,
    ChartedSpace, Error, GaugeCochain, PAdicContext, PAdicElem, Result,
};

pub struct SuiteConfig {
    pub p: u64,
    pub precision: u32,
    pub window: u32,
    pub seed: u64,
    pub cases: u32,
    pub level: u32,
    pub space: Option<String>,
    pub base: Option<String>,
    pub twists: Option<Vec<i32>>,
}

/// Per-case RNG: mixes the run seed with the case index.
pub fn case_rng(seed: u64, case: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ case.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn worker_count() -> usize {
    std::env::var("RIGIDCHERN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

/// Fan cases out to workers; the result vector is ordered by case index.
fn run_cases<F>(cases: u32, f: F) -> Vec<Value>
where
    F: Fn(u32) -> Value + Sync,
{
    let threads = worker_count().min(cases.max(1) as usize);
    if threads <= 1 {
        return (0..cases).map(f).collect();
    }
    let mut results: Vec<Option<Value>> = (0..cases).map(|_| None).collect();
    let chunks: Vec<Vec<u32>> = (0..threads)
        .map(|w| (0..cases).filter(|i| (*i as usize) % threads == w).collect())
        .collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in &chunks {
            let f = &f;
            handles.push(scope.spawn(move || {
                chunk.iter().map(|&i| (i, f(i))).collect::<Vec<_>>()
            }));
        }
        for handle in handles {
            for (i, v) in handle.join().expect("suite worker") {
                results[i as usize] = Some(v);
            }
        }
    });
    results.into_iter().map(|v| v.expect("all cases ran")).collect()
}

fn all_pass(results: &[Value]) -> bool {
    results
        .iter()
        .all(|r| r.get("pass").and_then(Value::as_bool).unwrap_or(false))
}

fn parse_space(name: &Option<String>, default_n: u32) -> Result<SpaceDescriptor> {
    match name.as_deref() {
        None => Ok(SpaceDescriptor::ProjectiveSpace { n: default_n }),
        Some("P1") | Some("p1") => Ok(SpaceDescriptor::ProjectiveSpace { n: 1 }),
        Some("P2") | Some("p2") => Ok(SpaceDescriptor::ProjectiveSpace { n: 2 }),
        Some(other) => Err(Error::InvalidInput(format!("unknown space {other:?}"))),
    }
}

fn report_head(cfg: &SuiteConfig, suite: &str, window_used: u32) -> Value {
    json!({
        "command": "verify",
        "suite": suite,
        "p": cfg.p,
        "N": cfg.precision,
        "D": cfg.window,
        "window_used": window_used,
        "seed": cfg.seed,
    })
}

fn merge(head: Value, extra: Value) -> Value {
    let mut obj = head.as_object().cloned().expect("object");
    for (k, v) in extra.as_object().cloned().expect("object") {
        obj.insert(k, v);
    }
    Value::Object(obj)
}

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<(Value, bool)> {
    match name {
        "closure" => suite_closure(cfg),
        "gauge" => suite_gauge(cfg),
        "whitney" => suite_whitney(cfg),
        "frobenius" => suite_frobenius(cfg),
        "mpd" => suite_mpd(cfg),
        "ranks" => suite_ranks(cfg),
        "all" => suite_all(cfg),
        other => Err(Error::InvalidInput(format!("unknown suite {other:?}"))),
    }
}

/// Closure and lift independence: perturbed lifts keep Delta(c1) = 0 and
/// the class fixed.
fn suite_closure(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let desc = parse_space(&cfg.space, 2)?;
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    let window = cfg.window.max(perturbation_window(cfg.precision, 3));
    let sp = build_space_with_window(&desc, &ctx, window, window)?;
    let base = line_bundle_cocycle(&sp, 1)?;
    let expected = c1_class(&sp, &base)?;
    let results = run_cases(cfg.cases, |case| {
        let mut rng = case_rng(cfg.seed, case as u64);
        let mut run = || -> Result<Value> {
            let u = base.perturb(&sp, &mut rng, 3, 3)?;
            let z = c1_cocycle(&sp, &u)?;
            let closed = total_diff(&sp, &z)?.is_zero();
            let class = c1_class(&sp, &u)?;
            let invariant = class.eq_at_min_prec(&ctx, &expected);
            Ok(json!({
                "case": case,
                "closed": closed,
                "exact": closed,
                "coeff": class.balanced(&ctx),
                "class": class.balanced(&ctx),
                "precision": class.prec(),
                "pass": closed && invariant,
            }))
        };
        run().unwrap_or_else(|e| json!({ "case": case, "error": e.to_string(), "pass": false }))
    });
    let pass = all_pass(&results);
    let report = merge(
        report_head(cfg, "closure", window),
        json!({ "cases": cfg.cases, "results": results, "pass": pass }),
    );
    Ok((report, pass))
}

/// The zeta witness certifies gauge and lift changes on P^1 and P^2.
fn suite_gauge(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    let window = cfg.window.max(perturbation_window(cfg.precision, 2));
    let spaces: Vec<ChartedSpace> = [1u32, 2]
        .iter()
        .map(|&n| {
            build_space_with_window(&SpaceDescriptor::ProjectiveSpace { n }, &ctx, window, window)
        })
        .collect::<Result<_>>()?;
    let results = run_cases(cfg.cases, |case| {
        let mut rng = case_rng(cfg.seed, case as u64);
        let mut run = || -> Result<Value> {
            let mut pass = true;
            let mut precision = cfg.precision;
            for sp in &spaces {
                let u = line_bundle_cocycle(sp, 2)?;
                let units: std::collections::BTreeMap<u8, rigidchern_core::UnitSection> = (0
                    ..sp.num_charts() as u8)
                    .map(|i| {
                        let dim = sp.charts[i as usize].dim();
                        let g = rigidchern_core::sampling::random_one_unit_correction(
                            sp, i as usize, &[i], &mut rng, 2, 2,
                        );
                        Ok((
                            i,
                            rigidchern_core::UnitSection::new(sp, i as usize, vec![0; dim], g)?,
                        ))
                    })
                    .collect::<Result<_>>()?;
                let gauge = GaugeCochain::new(sp, units)?;
                let gauged = gauge.apply(sp, &u)?.perturb(sp, &mut rng, 2, 2)?;
                let zeta = zeta_witness(sp, &u, &gauge, &gauged)?;
                let lhs = total_diff(sp, &zeta)?;
                let rhs = c1_cocycle(sp, &gauged)?.sub(sp, &c1_cocycle(sp, &u)?);
                pass &= lhs.eq_tracked(sp, &rhs);
                precision = precision.min(rhs.min_prec(sp));
            }
            Ok(json!({ "case": case, "precision": precision, "pass": pass }))
        };
        run().unwrap_or_else(|e| json!({ "case": case, "error": e.to_string(), "pass": false }))
    });
    let pass = all_pass(&results);
    let report = merge(
        report_head(cfg, "gauge", window),
        json!({ "cases": cfg.cases, "results": results, "pass": pass }),
    );
    Ok((report, pass))
}

/// Whitney additivity against the elementary-symmetric oracle.
fn suite_whitney(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    let base_n = match parse_space(&cfg.base.clone().or(cfg.space.clone()), 2)? {
        SpaceDescriptor::ProjectiveSpace { n } => n,
        _ => 2,
    };
    let fixed: Vec<(i32, i32)> = vec![(0, 1), (1, 2), (2, 3), (-1, 2)];
    let total = fixed.len() as u32 + cfg.cases;
    let results = run_cases(total, |case| {
        let run = || -> Result<Value> {
            let (a, b) = if (case as usize) < fixed.len() {
                fixed[case as usize]
            } else {
                let mut rng = case_rng(cfg.seed, case as u64);
                (rng.gen_range(-3..=3), rng.gen_range(-3..=3))
            };
            let report = bundle::whitney_check(&ctx, base_n, &[a], &[b])?;
            // the combined classes must equal the elementary symmetric
            // polynomials e_1 = a + b, e_2 = ab
            let e1 = PAdicElem::integer(&ctx, (a + b) as i64);
            let e2 = PAdicElem::integer(&ctx, (a * b) as i64);
            let oracle_ok = report.lhs[1].eq_at_min_prec(&ctx, &e1)
                && (base_n < 2 || report.lhs[2].eq_at_min_prec(&ctx, &e2));
            Ok(json!({
                "case": case,
                "twists": [a, b],
                "precision": report.precision,
                "pass": report.pass && oracle_ok,
            }))
        };
        run().unwrap_or_else(|e| json!({ "case": case, "error": e.to_string(), "pass": false }))
    });
    let pass = all_pass(&results);
    let report = merge(
        report_head(cfg, "whitney", cfg.window),
        json!({ "cases": total, "results": results, "pass": pass }),
    );
    Ok((report, pass))
}

/// Frobenius scaling on line bundles and split bundles.
fn suite_frobenius(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    // the p-th power cocycle of O(3) needs exponents up to 3p
    let window = cfg.window.max(3 * cfg.p as u32 + 2);
    let mut results = Vec::new();
    for n in [1u32, 2] {
        let sp = build_space_with_window(&SpaceDescriptor::ProjectiveSpace { n }, &ctx, window, window)?;
        for d in [1i32, 3] {
            let u = line_bundle_cocycle(&sp, d)?;
            let report = chern::frobenius_check(&sp, &u)?;
            results.push(json!({
                "space": format!("P{n}"),
                "twist": d,
                "class": report.class.balanced(&ctx),
                "frobenius_class": report.frobenius_class.balanced(&ctx),
                "precision": report.precision,
                "pass": report.pass,
            }));
        }
    }
    // split bundle: scaled twists must scale c_i by p^i; keep p * twist
    // inside the supported twist range
    let split_twists: Vec<i32> = if cfg.p <= 3 { vec![1, 2] } else { vec![1, 1] };
    let split = bundle::frobenius_split_check(&ctx, 2, &split_twists)?;
    results.push(json!({
        "space": "P(O(a)+O(b)) over P2",
        "twists": split_twists,
        "pass": split.pass,
    }));
    let pass = all_pass(&results);
    let report = merge(
        report_head(cfg, "frobenius", window),
        json!({ "results": results, "pass": pass }),
    );
    Ok((report, pass))
}

/// Level-m divided-power identities: the reduction bookkeeping, the
/// psi_m scaling, the level-indexed cocycle, and the rescale ratio.
fn suite_mpd(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    let mut results = Vec::new();

    // reduction identity for k <= 200
    for level in 0..=cfg.level.min(3) {
        let mctx = mpd::MpdContext::new(ctx.clone(), level)?;
        let mut ok = true;
        for k in 0..=200u64 {
            let red = mpd::mpd_reduce(&mctx, k);
            let pm = mctx.p_pow_level();
            ok &= k == pm * red.q + red.r && red.r < pm;
            let term = mpd::MpdTerm {
                coeff: PAdicElem::one(&ctx),
                index: k,
                level,
            };
            ok &= red.factorial_valuation as i64 + term.assigned_valuation(&mctx) == k as i64;
        }
        results.push(json!({ "check": "reduction", "level": level, "pass": ok }));
    }

    // psi_m = p^m log on random 1-units
    for level in 0..=cfg.level.min(3) {
        let mctx = mpd::MpdContext::new(ctx.clone(), level)?;
        let mut rng = case_rng(cfg.seed, 1000 + level as u64);
        let mut ok = true;
        let mut precision = cfg.precision;
        for _ in 0..cfg.cases.max(10) {
            let a: u64 = rng.gen();
            let u = PAdicElem::one(&ctx).add(
                &ctx,
                &PAdicElem::from_biguint(
                    &ctx,
                    num_bigint::BigUint::from(a) * cfg.p,
                    cfg.precision,
                ),
            );
            let lhs = mpd::psi_m(&mctx, &u)?;
            let rhs = rigidchern_core::log_one_unit(&ctx, &u)?
                .mul_i64(&ctx, mctx.p_pow_level() as i64);
            ok &= lhs.eq_at_min_prec(&ctx, &rhs);
            precision = precision.min(lhs.prec());
        }
        results.push(json!({
            "check": "psi_scaling", "level": level, "precision": precision, "pass": ok,
        }));
    }

    // level cocycle and rescale ratios on P^2 with perturbed lifts
    let window = cfg.window.max(perturbation_window(cfg.precision, 2));
    let sp = build_space_with_window(&SpaceDescriptor::p2(), &ctx, window, window)?;
    let mut rng = case_rng(cfg.seed, 2000);
    let u = line_bundle_cocycle(&sp, 1)?.perturb(&sp, &mut rng, 2, 2)?;
    let c1 = c1_cocycle(&sp, &u)?;
    for level in 0..=cfg.level.min(2) {
        let z = mpd::compatible_lift_cocycle(&sp, &u, level)?;
        let closed = total_diff(&sp, &z)?.is_zero();
        let equal = z.sub(&sp, &c1).is_zero();
        let class = cech::class_coeff(&sp, &z)?;
        results.push(json!({
            "check": "compatible_lift", "level": level,
            "class": class.balanced(&ctx), "precision": class.prec(),
            "pass": closed && equal && class.balanced(&ctx) == Some(1),
        }));
    }
    let mut pairs = Vec::new();
    for m in 0..cfg.level.min(2) {
        for m2 in m + 1..=cfg.level.min(2) {
            pairs.push((m, m2));
        }
    }
    for (m, m2) in pairs {
        let report = mpd::level_rescale_check(&sp, &u, m, m2)?;
        let triangles: Vec<Value> = report
            .triangles
            .iter()
            .map(|t| json!({ "simplex": t.simplex, "precision": t.precision, "pass": t.pass }))
            .collect();
        results.push(json!({
            "check": "level_rescale", "levels": [m, m2],
            "triangles": triangles, "pass": report.pass,
        }));
    }
    let pass = all_pass(&results);
    let report = merge(
        report_head(cfg, "mpd", window),
        json!({ "level": cfg.level, "results": results, "pass": pass }),
    );
    Ok((report, pass))
}

/// Cohomology rank tables against the direct-sum prediction.
fn suite_ranks(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let ctx = PAdicContext::new(cfg.p, cfg.precision)?;
    let desc = match (&cfg.base, &cfg.twists) {
        (Some(base), Some(twists)) => {
            let n = match parse_space(&Some(base.clone()), 1)? {
                SpaceDescriptor::ProjectiveSpace { n } => n,
                _ => unreachable!(),
            };
            SpaceDescriptor::ProjBundle {
                base_n: n,
                twists: twists.clone(),
            }
        }
        _ => parse_space(&cfg.space, 2)?,
    };
    let fiber_window = cfg.window.min(8);
    let sp = build_space_with_window(&desc, &ctx, cfg.window, fiber_window)?;
    let report = bundle::cohomology_ranks(&sp)?;
    let pass = report.matches_prediction && report.window_stable;
    let torsion_counts: Vec<usize> = report.table.torsion.iter().map(|t| t.len()).collect();
    let out = merge(
        report_head(cfg, "ranks", cfg.window),
        json!({
            "space": format!("{:?}", desc),
            "ranks": report.table.ranks,
            "predicted": report.predicted,
            "torsion_counts": torsion_counts,
            "censored_characters": report.table.censored_characters,
            "window_stable": report.window_stable,
            "pass": pass,
        }),
    );
    Ok((out, pass))
}

fn suite_all(cfg: &SuiteConfig) -> Result<(Value, bool)> {
    let mut sections = Vec::new();
    let mut pass = true;
    for suite in ["closure", "gauge", "whitney", "frobenius", "mpd", "ranks"] {
        let (section, ok) = run_suite(suite, cfg)?;
        pass &= ok;
        sections.push(section);
    }
    let report = merge(
        report_head(cfg, "all", cfg.window),
        json!({ "suites": sections, "pass": pass }),
    );
    Ok((report, pass))
}
