//! Chart rings and differential forms for the supported spaces.
//!
//! Supported spaces are `P^n` (n = 1, 2) and projective bundles of split
//! bundles over `P^n`, covered by their standard toric charts.  Sections
//! are sparse Laurent polynomials over truncated p-adic coefficients; all
//! chart transitions are exact monomial substitutions.  Every monomial on
//! every chart is identified with a Laurent monomial in the homogeneous
//! (Cox) coordinates of the space, which is what makes transitions and
//! the weight grading of the Cech-de Rham complex exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{PAdicContext, PAdicElem};

pub type Exps = Vec<i32>;
pub type Wedge = Vec<u8>;
pub type Simplex = Vec<u8>;

pub const DEFAULT_BASE_WINDOW: u32 = 12;
pub const DEFAULT_FIBER_WINDOW: u32 = 8;

/// Which space to build, as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpaceDescriptor {
    #[serde(rename = "Pn")]
    ProjectiveSpace { n: u32 },
    ProjBundle { base_n: u32, twists: Vec<i32> },
}

impl SpaceDescriptor {
    pub fn p1() -> Self {
        SpaceDescriptor::ProjectiveSpace { n: 1 }
    }

    pub fn p2() -> Self {
        SpaceDescriptor::ProjectiveSpace { n: 2 }
    }
}

/// One affine chart: local variables tagged with the Cox monomial they
/// stand for.
#[derive(Clone, Debug)]
pub struct Chart {
    /// For each local variable, the exponent vector of its Cox monomial.
    pub var_cox: Vec<Vec<i64>>,
    /// Cox index "owned" by each local variable (the coordinate it reads
    /// off during transitions).
    pub owner: Vec<usize>,
    /// Cox indices invertible on this chart.
    pub inverted: Vec<usize>,
    /// Per-variable exponent window.
    pub window: Vec<u32>,
}

impl Chart {
    pub fn dim(&self) -> usize {
        self.var_cox.len()
    }
}

/// A charted space: chart list plus the nerve of the cover.
#[derive(Clone, Debug)]
pub struct ChartedSpace {
    pub descriptor: SpaceDescriptor,
    pub ctx: PAdicContext,
    pub dim: usize,
    pub cox_count: usize,
    pub charts: Vec<Chart>,
}

/// Builds the chart cover of a supported space with default windows.
pub fn build_space(desc: &SpaceDescriptor, ctx: &PAdicContext) -> Result<ChartedSpace> {
    build_space_with_window(desc, ctx, DEFAULT_BASE_WINDOW, DEFAULT_FIBER_WINDOW)
}

pub fn build_space_with_window(
    desc: &SpaceDescriptor,
    ctx: &PAdicContext,
    base_window: u32,
    fiber_window: u32,
) -> Result<ChartedSpace> {
    match desc {
        SpaceDescriptor::ProjectiveSpace { n } => {
            let n = *n as usize;
            if !(1..=2).contains(&n) {
                return Err(Error::UnsupportedSpace(format!("P^{n} is out of range")));
            }
            let mut charts = Vec::new();
            for i in 0..=n {
                let mut var_cox = Vec::new();
                let mut owner = Vec::new();
                for j in 0..=n {
                    if j == i {
                        continue;
                    }
                    let mut cox = vec![0i64; n + 1];
                    cox[j] = 1;
                    cox[i] = -1;
                    var_cox.push(cox);
                    owner.push(j);
                }
                charts.push(Chart {
                    window: vec![base_window; var_cox.len()],
                    var_cox,
                    owner,
                    inverted: vec![i],
                });
            }
            Ok(ChartedSpace {
                descriptor: desc.clone(),
                ctx: ctx.clone(),
                dim: n,
                cox_count: n + 1,
                charts,
            })
        }
        SpaceDescriptor::ProjBundle { base_n, twists } => {
            let n = *base_n as usize;
            let r = twists.len();
            if !(1..=2).contains(&n) {
                return Err(Error::UnsupportedSpace(format!(
                    "base P^{n} is out of range"
                )));
            }
            if !(2..=3).contains(&r) {
                return Err(Error::UnsupportedSpace(format!("rank {r} is out of range")));
            }
            if twists.iter().any(|a| a.abs() > 9) {
                return Err(Error::UnsupportedSpace("twists must satisfy |a| <= 9".into()));
            }
            // Cox coordinates: t_0..t_n then s_1..s_r.
            let cox_count = n + 1 + r;
            let mut charts = Vec::new();
            for i in 0..=n {
                for l in 0..r {
                    let mut var_cox = Vec::new();
                    let mut owner = Vec::new();
                    let mut window = Vec::new();
                    for j in 0..=n {
                        if j == i {
                            continue;
                        }
                        let mut cox = vec![0i64; cox_count];
                        cox[j] = 1;
                        cox[i] = -1;
                        var_cox.push(cox);
                        owner.push(j);
                        window.push(base_window);
                    }
                    for m in 0..r {
                        if m == l {
                            continue;
                        }
                        // w_m = s_m t_i^{a_m} / (s_l t_i^{a_l})
                        let mut cox = vec![0i64; cox_count];
                        cox[n + 1 + m] = 1;
                        cox[n + 1 + l] = -1;
                        cox[i] = (twists[m] - twists[l]) as i64;
                        var_cox.push(cox);
                        owner.push(n + 1 + m);
                        window.push(fiber_window);
                    }
                    charts.push(Chart {
                        var_cox,
                        owner,
                        inverted: vec![i, n + 1 + l],
                        window,
                    });
                }
            }
            Ok(ChartedSpace {
                descriptor: desc.clone(),
                ctx: ctx.clone(),
                dim: n + r - 1,
                cox_count,
                charts,
            })
        }
    }
}

impl ChartedSpace {
    pub fn num_charts(&self) -> usize {
        self.charts.len()
    }

    /// Same space with every window widened by `extra`.
    pub fn with_window_margin(&self, extra: u32) -> Self {
        let mut out = self.clone();
        for chart in &mut out.charts {
            for w in &mut chart.window {
                *w += extra;
            }
        }
        out
    }

    /// All p-simplices of the nerve (every intersection of standard toric
    /// charts is nonempty, so the nerve is the full simplex).
    pub fn simplices(&self, p: usize) -> Vec<Simplex> {
        let n = self.num_charts();
        if p + 1 > n {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut cur: Simplex = (0..=p as u8).collect();
        loop {
            out.push(cur.clone());
            // next (p+1)-subset of 0..n in lexicographic order
            let k = p + 1;
            let mut idx = k;
            loop {
                if idx == 0 {
                    return out;
                }
                idx -= 1;
                if cur[idx] < (n - k + idx) as u8 {
                    cur[idx] += 1;
                    for j in idx + 1..k {
                        cur[j] = cur[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    pub fn cox_of_monomial(&self, chart: usize, exps: &[i32]) -> Vec<i64> {
        let ch = &self.charts[chart];
        let mut cox = vec![0i64; self.cox_count];
        for (k, e) in exps.iter().enumerate() {
            if *e == 0 {
                continue;
            }
            for (c, v) in ch.var_cox[k].iter().enumerate() {
                cox[c] += *v * (*e as i64);
            }
        }
        cox
    }

    /// Reads chart exponents back off a Cox vector; `None` when the vector
    /// is not a monomial of this chart's coordinate lattice.
    pub fn exps_from_cox(&self, chart: usize, cox: &[i64]) -> Option<Exps> {
        let ch = &self.charts[chart];
        let exps: Exps = ch.owner.iter().map(|&c| cox[c] as i32).collect();
        if self.cox_of_monomial(chart, &exps) == cox {
            Some(exps)
        } else {
            None
        }
    }

    /// Is the Cox monomial regular on the overlap of the charts of `simplex`?
    pub fn regular_on(&self, simplex: &[u8], cox: &[i64]) -> bool {
        let mut allowed = vec![false; self.cox_count];
        for &c in simplex {
            for &inv in &self.charts[c as usize].inverted {
                allowed[inv] = true;
            }
        }
        cox.iter()
            .enumerate()
            .all(|(c, &v)| v >= 0 || allowed[c])
    }

    pub fn check_window(&self, chart: usize, exps: &[i32]) -> Result<()> {
        let ch = &self.charts[chart];
        for (k, &e) in exps.iter().enumerate() {
            if e.unsigned_abs() > ch.window[k] {
                return Err(Error::WindowOverflow {
                    chart,
                    var: k,
                    exponent: e as i64,
                    window: ch.window[k],
                });
            }
        }
        Ok(())
    }
}

/// Sparse Laurent polynomial on one chart.
///
/// `prec_floor` is the precision at which absent monomials are known to
/// vanish; stored coefficients carry their own precision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaurentSection {
    pub chart: usize,
    pub prec_floor: u32,
    pub terms: BTreeMap<Exps, PAdicElem>,
}

impl LaurentSection {
    pub fn zero(chart: usize, prec_floor: u32) -> Self {
        Self {
            chart,
            prec_floor,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(space: &ChartedSpace, chart: usize, value: PAdicElem) -> Self {
        let mut s = Self::zero(chart, space.ctx.precision());
        if !value.is_zero() {
            s.terms.insert(vec![0; space.charts[chart].dim()], value);
        }
        s
    }

    pub fn monomial(
        space: &ChartedSpace,
        chart: usize,
        exps: Exps,
        coeff: PAdicElem,
    ) -> Result<Self> {
        space.check_window(chart, &exps)?;
        let mut s = Self::zero(chart, space.ctx.precision());
        if !coeff.is_zero() {
            s.terms.insert(exps, coeff);
        }
        Ok(s)
    }

    /// Lowest tracked precision anywhere in the section.
    pub fn min_prec(&self) -> u32 {
        self.terms
            .values()
            .map(|c| c.prec())
            .min()
            .unwrap_or(self.prec_floor)
            .min(self.prec_floor)
    }

    /// Minimum coefficient valuation (working precision when empty).
    pub fn min_valuation(&self, ctx: &PAdicContext) -> u32 {
        self.terms
            .values()
            .map(|c| c.valuation(ctx))
            .min()
            .unwrap_or(self.min_prec())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.is_zero())
    }

    fn normalize(&mut self) {
        let mut floor = self.prec_floor;
        for coeff in self.terms.values() {
            if coeff.is_zero() {
                floor = floor.min(coeff.prec());
            }
        }
        self.prec_floor = floor;
        self.terms.retain(|_, c| !c.is_zero());
    }

    pub fn add(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        assert_eq!(self.chart, rhs.chart, "sections must share a chart");
        let ctx = &space.ctx;
        let mut out = Self::zero(self.chart, self.prec_floor.min(rhs.prec_floor));
        for (e, c) in &self.terms {
            let other = rhs
                .terms
                .get(e)
                .cloned()
                .unwrap_or_else(|| PAdicElem::zero(rhs.prec_floor));
            out.terms.insert(e.clone(), c.add(ctx, &other));
        }
        for (e, c) in &rhs.terms {
            if !self.terms.contains_key(e) {
                out.terms
                    .insert(e.clone(), c.add(ctx, &PAdicElem::zero(self.prec_floor)));
            }
        }
        out.normalize();
        out
    }

    pub fn neg(&self, space: &ChartedSpace) -> Self {
        let ctx = &space.ctx;
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = c.neg(ctx);
        }
        out
    }

    pub fn sub(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        self.add(space, &rhs.neg(space))
    }

    pub fn mul(&self, space: &ChartedSpace, rhs: &Self) -> Result<Self> {
        assert_eq!(self.chart, rhs.chart, "sections must share a chart");
        let ctx = &space.ctx;
        let cap = self.prec_floor.min(rhs.prec_floor);
        let mut out = Self::zero(self.chart, cap);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let exps: Exps = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                space.check_window(self.chart, &exps)?;
                let prod = ca.mul(ctx, cb).with_prec(ctx, cap);
                match out.terms.get_mut(&exps) {
                    Some(c) => *c = c.add(ctx, &prod),
                    None => {
                        out.terms.insert(exps, prod);
                    }
                }
            }
        }
        out.normalize();
        Ok(out)
    }

    pub fn mul_elem(&self, space: &ChartedSpace, k: &PAdicElem) -> Self {
        let ctx = &space.ctx;
        let mut out = Self::zero(self.chart, self.prec_floor.min(k.prec()));
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c.mul(ctx, k));
        }
        out.normalize();
        out
    }

    pub fn mul_i64(&self, space: &ChartedSpace, k: i64) -> Self {
        let mut out = Self::zero(self.chart, self.prec_floor);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c.mul_i64(&space.ctx, k));
        }
        out.normalize();
        out
    }

    /// Multiplication by the monomial `x^shift`.
    pub fn shift(&self, space: &ChartedSpace, shift: &[i32]) -> Result<Self> {
        let mut out = Self::zero(self.chart, self.prec_floor);
        for (e, c) in &self.terms {
            let exps: Exps = e.iter().zip(shift).map(|(x, y)| x + y).collect();
            space.check_window(self.chart, &exps)?;
            out.terms.insert(exps, c.clone());
        }
        Ok(out)
    }

    /// Partial derivative with respect to variable `k`.
    pub fn partial(&self, space: &ChartedSpace, k: usize) -> Result<Self> {
        let ctx = &space.ctx;
        let mut out = Self::zero(self.chart, self.prec_floor);
        for (e, c) in &self.terms {
            if e[k] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[k] -= 1;
            space.check_window(self.chart, &exps)?;
            let coeff = c.mul_i64(ctx, e[k] as i64);
            if !coeff.is_zero() {
                out.terms.insert(exps, coeff);
            }
        }
        out.normalize();
        Ok(out)
    }

    /// Exact equality at tracked precision: the difference vanishes.
    pub fn eq_tracked(&self, space: &ChartedSpace, rhs: &Self) -> bool {
        self.sub(space, rhs).is_zero()
    }
}

/// Exact monomial transition of a section between two charts.
pub fn transition(
    space: &ChartedSpace,
    from: usize,
    to: usize,
    s: &LaurentSection,
) -> Result<LaurentSection> {
    assert_eq!(s.chart, from, "section must live on the source chart");
    if from == to {
        return Ok(s.clone());
    }
    let mut out = LaurentSection::zero(to, s.prec_floor);
    for (e, c) in &s.terms {
        let cox = space.cox_of_monomial(from, e);
        let exps = space
            .exps_from_cox(to, &cox)
            .ok_or_else(|| Error::InvalidInput("monomial leaves the target chart lattice".into()))?;
        space.check_window(to, &exps)?;
        out.terms.insert(exps, c.clone());
    }
    Ok(out)
}

/// Degree-q exterior form on one chart, stored on the sorted wedge basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffForm {
    pub chart: usize,
    pub degree: usize,
    pub comps: BTreeMap<Wedge, LaurentSection>,
}

impl DiffForm {
    pub fn zero(chart: usize, degree: usize) -> Self {
        Self {
            chart,
            degree,
            comps: BTreeMap::new(),
        }
    }

    pub fn from_section(s: LaurentSection) -> Self {
        let chart = s.chart;
        let mut f = Self::zero(chart, 0);
        if !s.terms.is_empty() {
            f.comps.insert(Vec::new(), s);
        }
        f
    }

    pub fn is_zero(&self) -> bool {
        self.comps.values().all(|s| s.is_zero())
    }

    pub fn min_prec(&self, default: u32) -> u32 {
        self.comps
            .values()
            .map(|s| s.min_prec())
            .min()
            .unwrap_or(default)
    }

    fn insert_add(&mut self, space: &ChartedSpace, wedge: Wedge, s: LaurentSection) {
        match self.comps.remove(&wedge) {
            Some(prev) => {
                let sum = prev.add(space, &s);
                if !(sum.terms.is_empty() && sum.prec_floor >= space.ctx.precision()) {
                    self.comps.insert(wedge, sum);
                }
            }
            None => {
                self.comps.insert(wedge, s);
            }
        }
    }

    pub fn add(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        assert_eq!(self.chart, rhs.chart);
        assert_eq!(self.degree, rhs.degree);
        let mut out = self.clone();
        for (w, s) in &rhs.comps {
            out.insert_add(space, w.clone(), s.clone());
        }
        out
    }

    pub fn neg(&self, space: &ChartedSpace) -> Self {
        let mut out = self.clone();
        for s in out.comps.values_mut() {
            *s = s.neg(space);
        }
        out
    }

    pub fn sub(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        self.add(space, &rhs.neg(space))
    }

    pub fn mul_i64(&self, space: &ChartedSpace, k: i64) -> Self {
        let mut out = self.clone();
        for s in out.comps.values_mut() {
            *s = s.mul_i64(space, k);
        }
        out
    }

    pub fn mul_elem(&self, space: &ChartedSpace, k: &PAdicElem) -> Self {
        let mut out = self.clone();
        for s in out.comps.values_mut() {
            *s = s.mul_elem(space, k);
        }
        out
    }

    /// Wedge product of forms on the same chart.
    pub fn wedge(&self, space: &ChartedSpace, rhs: &Self) -> Result<Self> {
        assert_eq!(self.chart, rhs.chart);
        let mut out = Self::zero(self.chart, self.degree + rhs.degree);
        if out.degree > space.dim {
            return Ok(out);
        }
        for (wa, fa) in &self.comps {
            for (wb, fb) in &rhs.comps {
                if wa.iter().any(|k| wb.contains(k)) {
                    continue;
                }
                // sign of the shuffle sorting wa ++ wb
                let mut inv = 0usize;
                for a in wa {
                    for b in wb {
                        if a > b {
                            inv += 1;
                        }
                    }
                }
                let mut merged: Wedge = wa.iter().chain(wb.iter()).copied().collect();
                merged.sort_unstable();
                let mut prod = fa.mul(space, fb)?;
                if inv % 2 == 1 {
                    prod = prod.neg(space);
                }
                out.insert_add(space, merged, prod);
            }
        }
        Ok(out)
    }

    pub fn eq_tracked(&self, space: &ChartedSpace, rhs: &Self) -> bool {
        self.sub(space, rhs).is_zero()
    }
}

/// Exterior derivative; exact on Laurent coefficients.
pub fn d(space: &ChartedSpace, f: &DiffForm) -> Result<DiffForm> {
    let dim = space.charts[f.chart].dim();
    let mut out = DiffForm::zero(f.chart, f.degree + 1);
    if f.degree >= dim {
        return Ok(out);
    }
    for (wedge, s) in &f.comps {
        for k in 0..dim as u8 {
            if wedge.contains(&k) {
                continue;
            }
            let ds = s.partial(space, k as usize)?;
            if ds.is_zero() && ds.terms.is_empty() {
                continue;
            }
            let pos = wedge.iter().filter(|&&j| j < k).count();
            let mut merged = wedge.clone();
            merged.insert(pos, k);
            let signed = if pos % 2 == 1 { ds.neg(space) } else { ds };
            out.insert_add(space, merged, signed);
        }
    }
    Ok(out)
}

fn det_i64(m: &[Vec<i64>]) -> i64 {
    match m.len() {
        0 => 1,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!("forms have degree at most 3"),
    }
}

pub(crate) fn subsets_of_size(n: usize, k: usize) -> Vec<Wedge> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut cur: Wedge = (0..k as u8).collect();
    loop {
        out.push(cur.clone());
        let mut idx = k;
        loop {
            if idx == 0 {
                return out;
            }
            idx -= 1;
            if cur[idx] < (n - k + idx) as u8 {
                cur[idx] += 1;
                for j in idx + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Symbolic transition of one monomial form `x^e du_I` between charts,
/// through the dlog basis: the coefficients are minor determinants of the
/// variable-substitution exponents, hence exact integers.
pub(crate) fn transition_monomial_form(
    space: &ChartedSpace,
    from: usize,
    to: usize,
    exps: &[i32],
    wedge: &[u8],
) -> Result<Vec<(Exps, Wedge, i64)>> {
    if from == to {
        return Ok(vec![(exps.to_vec(), wedge.to_vec(), 1)]);
    }
    let dim_to = space.charts[to].dim();
    let rows: Vec<Exps> = wedge
        .iter()
        .map(|&j| {
            space
                .exps_from_cox(to, &space.charts[from].var_cox[j as usize])
                .expect("chart variables are monomials on every other chart")
        })
        .collect();
    // x^e du_I = x^{e + 1_I} dlog u_I
    let mut full = space.cox_of_monomial(from, exps);
    for &j in wedge {
        for (ci, v) in space.charts[from].var_cox[j as usize].iter().enumerate() {
            full[ci] += v;
        }
    }
    let e_full = space
        .exps_from_cox(to, &full)
        .ok_or_else(|| Error::InvalidInput("form monomial leaves the lattice".into()))?;
    let mut out = Vec::new();
    for target in subsets_of_size(dim_to, wedge.len()) {
        let minor: Vec<Vec<i64>> = rows
            .iter()
            .map(|row| target.iter().map(|&k| row[k as usize] as i64).collect())
            .collect();
        let det = det_i64(&minor);
        if det == 0 {
            continue;
        }
        let mut e = e_full.clone();
        for &k in &target {
            e[k as usize] -= 1;
        }
        out.push((e, target, det));
    }
    Ok(out)
}

/// Exact transition of a form between charts.
pub fn transition_form(
    space: &ChartedSpace,
    from: usize,
    to: usize,
    f: &DiffForm,
) -> Result<DiffForm> {
    assert_eq!(f.chart, from);
    if from == to {
        return Ok(f.clone());
    }
    let mut out = DiffForm::zero(to, f.degree);
    for (wedge, s) in &f.comps {
        for (e, c) in &s.terms {
            for (exps, target, det) in transition_monomial_form(space, from, to, e, wedge)? {
                space.check_window(to, &exps)?;
                let term =
                    LaurentSection::monomial(space, to, exps, c.mul_i64(&space.ctx, det))?;
                out.insert_add(space, target, term);
            }
        }
        if s.prec_floor < space.ctx.precision() {
            // carry the floor of low-precision sections across the move
            for target in subsets_of_size(space.charts[to].dim(), wedge.len()) {
                let carried = LaurentSection::zero(to, s.prec_floor);
                out.insert_add(space, target, carried);
            }
        }
    }
    Ok(out)
}

/// Witnessed unit: `u = x^monomial * (1 + correction)` with a correction
/// whose coefficients all have valuation >= 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitSection {
    pub chart: usize,
    pub monomial: Exps,
    pub correction: LaurentSection,
}

impl UnitSection {
    pub fn monomial_unit(space: &ChartedSpace, chart: usize, monomial: Exps) -> Result<Self> {
        space.check_window(chart, &monomial)?;
        Ok(Self {
            chart,
            monomial,
            correction: LaurentSection::zero(chart, space.ctx.precision()),
        })
    }

    pub fn new(
        space: &ChartedSpace,
        chart: usize,
        monomial: Exps,
        correction: LaurentSection,
    ) -> Result<Self> {
        space.check_window(chart, &monomial)?;
        if correction.chart != chart {
            return Err(Error::InvalidInput("correction lives on the wrong chart".into()));
        }
        let unit = Self {
            chart,
            monomial,
            correction,
        };
        unit.validate(space)?;
        Ok(unit)
    }

    /// The 1-unit condition on the correction.
    pub fn validate(&self, space: &ChartedSpace) -> Result<()> {
        for c in self.correction.terms.values() {
            if c.valuation(&space.ctx) == 0 {
                return Err(Error::NotAUnit(
                    "correction has a coefficient of valuation 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn one_unit_part(&self, space: &ChartedSpace) -> LaurentSection {
        LaurentSection::constant(space, self.chart, PAdicElem::one(&space.ctx))
            .add(space, &self.correction)
    }

    /// The section this witness factorizes.
    pub fn value(&self, space: &ChartedSpace) -> Result<LaurentSection> {
        self.one_unit_part(space).shift(space, &self.monomial)
    }

    pub fn mul(&self, space: &ChartedSpace, rhs: &Self) -> Result<Self> {
        assert_eq!(self.chart, rhs.chart);
        let monomial: Exps = self
            .monomial
            .iter()
            .zip(&rhs.monomial)
            .map(|(a, b)| a + b)
            .collect();
        space.check_window(self.chart, &monomial)?;
        // (1+g)(1+h) - 1 = g + h + gh
        let correction = self
            .correction
            .add(space, &rhs.correction)
            .add(space, &self.correction.mul(space, &rhs.correction)?);
        Ok(Self {
            chart: self.chart,
            monomial,
            correction,
        })
    }

    pub fn inverse(&self, space: &ChartedSpace) -> Result<Self> {
        let monomial: Exps = self.monomial.iter().map(|e| -e).collect();
        space.check_window(self.chart, &monomial)?;
        let inv = inv_one_unit_section(space, &self.correction)?;
        let one = LaurentSection::constant(space, self.chart, PAdicElem::one(&space.ctx));
        Ok(Self {
            chart: self.chart,
            monomial,
            correction: inv.sub(space, &one),
        })
    }

    pub fn pow(&self, space: &ChartedSpace, e: i64) -> Result<Self> {
        let base = if e < 0 { self.inverse(space)? } else { self.clone() };
        let mut acc = UnitSection::monomial_unit(space, self.chart, vec![0; self.monomial.len()])?;
        let mut sq = base;
        let mut k = e.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(space, &sq)?;
            }
            k >>= 1;
            if k > 0 {
                sq = sq.mul(space, &sq)?;
            }
        }
        Ok(acc)
    }

    pub fn transition(&self, space: &ChartedSpace, to: usize) -> Result<Self> {
        if to == self.chart {
            return Ok(self.clone());
        }
        let cox = space.cox_of_monomial(self.chart, &self.monomial);
        let monomial = space
            .exps_from_cox(to, &cox)
            .ok_or_else(|| Error::InvalidInput("unit monomial leaves the lattice".into()))?;
        space.check_window(to, &monomial)?;
        Ok(Self {
            chart: to,
            monomial,
            correction: transition(space, self.chart, to, &self.correction)?,
        })
    }

    /// `d(u) * u^{-1}` computed through the witness factorization.
    pub fn dlog(&self, space: &ChartedSpace) -> Result<DiffForm> {
        let ctx = &space.ctx;
        let dim = space.charts[self.chart].dim();
        let mut out = DiffForm::zero(self.chart, 1);
        let inv = inv_one_unit_section(space, &self.correction)?;
        for k in 0..dim {
            // monomial part: m_k * u_k^{-1} du_k
            let mut comp = LaurentSection::zero(self.chart, ctx.precision());
            if self.monomial[k] != 0 {
                let mut exps = vec![0i32; dim];
                exps[k] = -1;
                comp = comp.add(
                    space,
                    &LaurentSection::monomial(
                        space,
                        self.chart,
                        exps,
                        PAdicElem::integer(ctx, self.monomial[k] as i64),
                    )?,
                );
            }
            let dg = self.correction.partial(space, k)?;
            comp = comp.add(space, &dg.mul(space, &inv)?);
            if !(comp.terms.is_empty() && comp.prec_floor >= ctx.precision()) {
                out.comps.insert(vec![k as u8], comp);
            }
        }
        Ok(out)
    }

    /// `log(1 + correction)` as a section (the monomial part contributes
    /// nothing to logs of 1-units and must be trivial here).
    pub fn log(&self, space: &ChartedSpace) -> Result<LaurentSection> {
        if self.monomial.iter().any(|&e| e != 0) {
            return Err(Error::NotAUnit(
                "log of a unit with nontrivial monomial part".into(),
            ));
        }
        log_one_unit_section(space, &self.correction)
    }
}

/// Inverse of a 1-unit section `1 + g` by the alternating geometric
/// series, exactly as in the scalar case.
pub fn inv_one_unit_section(space: &ChartedSpace, g: &LaurentSection) -> Result<LaurentSection> {
    let ctx = &space.ctx;
    let one = LaurentSection::constant(space, g.chart, PAdicElem::one(ctx));
    if g.terms.is_empty() {
        return Ok(LaurentSection {
            prec_floor: g.prec_floor,
            ..one
        });
    }
    let k = g.min_prec();
    let v = g.min_valuation(ctx);
    if v == 0 {
        return Err(Error::NotAUnit("section is not a 1-unit".into()));
    }
    let mut sum = one;
    sum.prec_floor = k;
    let neg_g = g.neg(space);
    let mut term = LaurentSection::constant(space, g.chart, PAdicElem::from_i64(ctx, 1, k));
    let mut n = 1u32;
    while n.saturating_mul(v) < k {
        term = term.mul(space, &neg_g)?;
        sum = sum.add(space, &term);
        n += 1;
    }
    Ok(sum)
}

/// Logarithm of a 1-unit section `1 + g`; reported precision drops by the
/// largest `v_p(n)` over contributing series terms.
pub fn log_one_unit_section(space: &ChartedSpace, g: &LaurentSection) -> Result<LaurentSection> {
    let ctx = &space.ctx;
    if g.terms.is_empty() {
        return Ok(LaurentSection::zero(g.chart, g.min_prec()));
    }
    let k = g.min_prec();
    let v = g.min_valuation(ctx);
    if v == 0 {
        return Err(Error::NotAUnit("section is not a 1-unit".into()));
    }
    let p = ctx.p();
    let bound = {
        let mut n = 1u64;
        loop {
            let mut logp = 0i64;
            let mut acc = p;
            while acc <= n {
                logp += 1;
                acc = acc.saturating_mul(p);
            }
            if n as i64 * v as i64 - logp >= k as i64 {
                break n;
            }
            n += 1;
        }
    };
    let mut sum = LaurentSection::zero(g.chart, k);
    let mut power = LaurentSection::constant(space, g.chart, PAdicElem::from_i64(ctx, 1, k));
    for n in 1..=bound {
        power = power.mul(space, g)?;
        let mut e = 0u32;
        let mut m = n;
        while m % p == 0 {
            e += 1;
            m /= p;
        }
        if (n as i64) * (v as i64) - (e as i64) >= k as i64 {
            continue;
        }
        let mut term = LaurentSection::zero(g.chart, power.prec_floor.saturating_sub(e));
        let inv_unit = PAdicElem::from_i64(ctx, m as i64, k - e).unit_inv(ctx)?;
        for (exps, c) in &power.terms {
            let divided = c.div_exact_p_pow(ctx, e)?;
            term.terms.insert(exps.clone(), divided.mul(ctx, &inv_unit));
        }
        if n % 2 == 0 {
            term = term.neg(space);
        }
        sum = sum.add(space, &term);
    }
    if sum.min_prec() == 0 {
        return Err(Error::PrecisionExhausted("section log lost all precision".into()));
    }
    Ok(sum)
}

/// `dlog` of a presented unit; the witness must reconstruct `u` exactly.
pub fn dlog(space: &ChartedSpace, u: &LaurentSection, witness: &UnitSection) -> Result<DiffForm> {
    witness.validate(space)?;
    let rebuilt = witness.value(space)?;
    if !rebuilt.eq_tracked(space, u) {
        return Err(Error::NotAUnit("witness does not factorize the section".into()));
    }
    witness.dlog(space)
}

/// Serialized section: chart, floor, and `[exponent-vector, residue, prec]`
/// triples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionData {
    pub chart: usize,
    pub prec_floor: u32,
    pub terms: Vec<(Exps, String, u32)>,
}

impl LaurentSection {
    pub fn to_data(&self) -> SectionData {
        SectionData {
            chart: self.chart,
            prec_floor: self.prec_floor,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), c.residue().to_str_radix(10), c.prec()))
                .collect(),
        }
    }

    pub fn from_data(space: &ChartedSpace, data: &SectionData) -> Result<Self> {
        let mut s = LaurentSection::zero(data.chart, data.prec_floor.min(space.ctx.precision()));
        for (exps, residue, prec) in &data.terms {
            if exps.len() != space.charts[data.chart].dim() {
                return Err(Error::InvalidInput("exponent vector has wrong length".into()));
            }
            space.check_window(data.chart, exps)?;
            let r = num_bigint::BigUint::parse_bytes(residue.as_bytes(), 10)
                .ok_or_else(|| Error::InvalidInput(format!("bad residue {residue}")))?;
            let c = PAdicElem::from_biguint(&space.ctx, r, *prec);
            if !c.is_zero() {
                s.terms.insert(exps.clone(), c);
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FormData {
    pub chart: usize,
    pub degree: usize,
    pub components: Vec<(Wedge, SectionData)>,
}

impl DiffForm {
    pub fn to_data(&self) -> FormData {
        FormData {
            chart: self.chart,
            degree: self.degree,
            components: self
                .comps
                .iter()
                .map(|(w, s)| (w.clone(), s.to_data()))
                .collect(),
        }
    }

    pub fn from_data(space: &ChartedSpace, data: &FormData) -> Result<Self> {
        let mut f = DiffForm::zero(data.chart, data.degree);
        for (wedge, section) in &data.components {
            if wedge.len() != data.degree || section.chart != data.chart {
                return Err(Error::InvalidInput("inconsistent form component".into()));
            }
            f.comps
                .insert(wedge.clone(), LaurentSection::from_data(space, section)?);
        }
        Ok(f)
    }
}

/// Pullback of a section along the degree-d power endomorphism of P^1.
pub fn pullback_power_p1(
    space: &ChartedSpace,
    s: &LaurentSection,
    d: u32,
) -> Result<LaurentSection> {
    let mut out = LaurentSection::zero(s.chart, s.prec_floor);
    for (e, c) in &s.terms {
        let exps = vec![e[0] * d as i32];
        space.check_window(s.chart, &exps)?;
        out.terms.insert(exps, c.clone());
    }
    Ok(out)
}

/// Pullback of a form along the degree-d power endomorphism of P^1:
/// `f(t) dt -> f(t^d) d t^{d-1} dt`.
pub fn pullback_power_p1_form(space: &ChartedSpace, f: &DiffForm, d: u32) -> Result<DiffForm> {
    let ctx = &space.ctx;
    let mut out = DiffForm::zero(f.chart, f.degree);
    for (wedge, s) in &f.comps {
        let pulled = pullback_power_p1(space, s, d)?;
        let section = if wedge.is_empty() {
            pulled
        } else {
            pulled
                .shift(space, &[d as i32 - 1])?
                .mul_elem(space, &PAdicElem::integer(ctx, d as i64))
        };
        out.insert_add(space, wedge.clone(), section);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p2_space() -> ChartedSpace {
        let ctx = PAdicContext::new(5, 8).unwrap();
        build_space(&SpaceDescriptor::p2(), &ctx).unwrap()
    }

    fn p2_wide() -> ChartedSpace {
        // room for products of random sections and their transitions
        let ctx = PAdicContext::new(5, 8).unwrap();
        build_space_with_window(&SpaceDescriptor::p2(), &ctx, 60, 60).unwrap()
    }

    fn p1_space() -> ChartedSpace {
        let ctx = PAdicContext::new(5, 8).unwrap();
        build_space(&SpaceDescriptor::p1(), &ctx).unwrap()
    }

    #[test]
    fn cover_combinatorics() {
        let p1 = p1_space();
        assert_eq!(p1.num_charts(), 2);
        assert_eq!(p1.simplices(0).len(), 2);
        assert_eq!(p1.simplices(1).len(), 1);
        assert_eq!(p1.simplices(2).len(), 0);

        let p2 = p2_space();
        assert_eq!(p2.num_charts(), 3);
        assert_eq!(p2.simplices(1).len(), 3);
        assert_eq!(p2.simplices(2).len(), 1);

        let ctx = PAdicContext::new(5, 8).unwrap();
        let pe = build_space(
            &SpaceDescriptor::ProjBundle {
                base_n: 2,
                twists: vec![1, 2],
            },
            &ctx,
        )
        .unwrap();
        assert_eq!(pe.num_charts(), 6);
        // product cover: every pair of charts meets
        assert_eq!(pe.simplices(1).len(), 15);
        for s in pe.simplices(1) {
            let cox = vec![0i64; pe.cox_count];
            assert!(pe.regular_on(&s, &cox));
        }
    }

    #[test]
    fn unsupported_spaces_are_rejected() {
        let ctx = PAdicContext::new(5, 8).unwrap();
        assert!(build_space(&SpaceDescriptor::ProjectiveSpace { n: 3 }, &ctx).is_err());
        assert!(build_space(
            &SpaceDescriptor::ProjBundle {
                base_n: 1,
                twists: vec![1]
            },
            &ctx
        )
        .is_err());
        assert!(build_space(
            &SpaceDescriptor::ProjBundle {
                base_n: 1,
                twists: vec![10, 0]
            },
            &ctx
        )
        .is_err());
    }

    #[test]
    fn transition_is_coordinate_inversion_on_p1() {
        let sp = p1_space();
        let ctx = &sp.ctx;
        let one = LaurentSection::constant(&sp, 0, PAdicElem::one(ctx));
        let moved = transition(&sp, 0, 1, &one).unwrap();
        assert!(moved.eq_tracked(&sp, &LaurentSection::constant(&sp, 1, PAdicElem::one(ctx))));

        let t = LaurentSection::monomial(&sp, 0, vec![1], PAdicElem::one(ctx)).unwrap();
        let moved = transition(&sp, 0, 1, &t).unwrap();
        let expect = LaurentSection::monomial(&sp, 1, vec![-1], PAdicElem::one(ctx)).unwrap();
        assert!(moved.eq_tracked(&sp, &expect));
    }

    fn random_section(sp: &ChartedSpace, chart: usize, rng: &mut ChaCha8Rng, terms: usize) -> LaurentSection {
        let dim = sp.charts[chart].dim();
        let mut s = LaurentSection::zero(chart, sp.ctx.precision());
        for _ in 0..terms {
            let exps: Exps = (0..dim).map(|_| rng.gen_range(-5..=5)).collect();
            let coeff = PAdicElem::integer(&sp.ctx, rng.gen_range(1..=100_000));
            let mono = LaurentSection::monomial(sp, chart, exps, coeff).unwrap();
            s = s.add(sp, &mono);
        }
        s
    }

    #[test]
    fn transition_round_trips_and_preserves_ring_ops() {
        let sp = p2_wide();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let a = random_section(&sp, 0, &mut rng, 20);
            let b = random_section(&sp, 0, &mut rng, 10);
            let back = transition(&sp, 1, 0, &transition(&sp, 0, 1, &a).unwrap()).unwrap();
            assert!(back.eq_tracked(&sp, &a));

            let prod_then_move = transition(&sp, 0, 2, &a.mul(&sp, &b).unwrap()).unwrap();
            let move_then_prod = transition(&sp, 0, 2, &a)
                .unwrap()
                .mul(&sp, &transition(&sp, 0, 2, &b).unwrap())
                .unwrap();
            assert!(prod_then_move.eq_tracked(&sp, &move_then_prod));
        }
    }

    #[test]
    fn d_squares_to_zero_and_is_chart_natural() {
        let sp = p2_space();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s = random_section(&sp, 0, &mut rng, 15);
            let f = DiffForm::from_section(s);
            let df = d(&sp, &f).unwrap();
            let ddf = d(&sp, &df).unwrap();
            assert!(ddf.is_zero());

            // transitions commute with d
            let lhs = transition_form(&sp, 0, 1, &df).unwrap();
            let rhs = d(&sp, &transition_form(&sp, 0, 1, &f).unwrap()).unwrap();
            assert!(lhs.eq_tracked(&sp, &rhs));
        }
    }

    #[test]
    fn d_of_t_squared() {
        let sp = p1_space();
        let ctx = &sp.ctx;
        let t2 = LaurentSection::monomial(&sp, 0, vec![2], PAdicElem::one(ctx)).unwrap();
        let df = d(&sp, &DiffForm::from_section(t2)).unwrap();
        let expect = LaurentSection::monomial(&sp, 0, vec![1], PAdicElem::integer(ctx, 2)).unwrap();
        assert_eq!(df.comps.len(), 1);
        assert!(df.comps[&vec![0u8]].eq_tracked(&sp, &expect));
    }

    #[test]
    fn dlog_of_monomials_and_products() {
        let sp = p1_space();
        let ctx = &sp.ctx;
        // dlog(t^3) = 3 dt / t
        let u = UnitSection::monomial_unit(&sp, 0, vec![3]).unwrap();
        let f = u.dlog(&sp).unwrap();
        let expect =
            LaurentSection::monomial(&sp, 0, vec![-1], PAdicElem::integer(ctx, 3)).unwrap();
        assert!(f.comps[&vec![0u8]].eq_tracked(&sp, &expect));

        // dlog(1) = 0
        let one = UnitSection::monomial_unit(&sp, 0, vec![0]).unwrap();
        assert!(one.dlog(&sp).unwrap().is_zero());
    }

    #[test]
    fn dlog_is_a_homomorphism_on_units() {
        let sp = p2_wide();
        let ctx = sp.ctx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut mk = |seed_shift: i32| {
                let monomial: Exps = (0..2).map(|_| rng.gen_range(-2..=2) + seed_shift * 0).collect();
                let mut g = LaurentSection::zero(0, ctx.precision());
                for _ in 0..3 {
                    let exps: Exps = (0..2).map(|_| rng.gen_range(-2..=2)).collect();
                    let c = PAdicElem::integer(&ctx, 5 * rng.gen_range(1..20));
                    g = g.add(&sp, &LaurentSection::monomial(&sp, 0, exps, c).unwrap());
                }
                UnitSection::new(&sp, 0, monomial, g).unwrap()
            };
            let u = mk(0);
            let v = mk(1);
            let sum = u.dlog(&sp).unwrap().add(&sp, &v.dlog(&sp).unwrap());
            let joint = u.mul(&sp, &v).unwrap().dlog(&sp).unwrap();
            assert!(joint.eq_tracked(&sp, &sum));
            // d(dlog u) = 0 exactly
            assert!(d(&sp, &u.dlog(&sp).unwrap()).unwrap().is_zero());
        }
    }

    #[test]
    fn unit_witness_round_trip_and_rejection() {
        let sp = p2_space();
        let ctx = &sp.ctx;
        let g = LaurentSection::monomial(&sp, 0, vec![1, 1], PAdicElem::integer(ctx, 10)).unwrap();
        let u = UnitSection::new(&sp, 0, vec![2, -1], g).unwrap();
        let value = u.value(&sp).unwrap();
        assert!(dlog(&sp, &value, &u).is_ok());

        // wrong witness is rejected
        let other = UnitSection::monomial_unit(&sp, 0, vec![2, -1]).unwrap();
        assert!(matches!(dlog(&sp, &value, &other), Err(Error::NotAUnit(_))));

        // a correction of valuation 0 is rejected
        let bad = LaurentSection::monomial(&sp, 0, vec![0, 1], PAdicElem::integer(ctx, 3)).unwrap();
        assert!(UnitSection::new(&sp, 0, vec![0, 0], bad).is_err());

        // inverse round trip: u * u^{-1} = 1
        let inv = u.inverse(&sp).unwrap();
        let prod = u.mul(&sp, &inv).unwrap();
        assert!(prod.monomial.iter().all(|&e| e == 0));
        assert!(prod.correction.is_zero());
    }

    #[test]
    fn window_overflow_is_a_hard_error() {
        let sp = p1_space();
        let ctx = &sp.ctx;
        let big = LaurentSection::monomial(&sp, 0, vec![12], PAdicElem::one(ctx)).unwrap();
        assert!(matches!(
            big.mul(&sp, &big),
            Err(Error::WindowOverflow { .. })
        ));
        assert!(LaurentSection::monomial(&sp, 0, vec![13], PAdicElem::one(ctx)).is_err());
    }

    #[test]
    fn section_log_matches_scalar_log_on_constants() {
        let sp = p1_space();
        let ctx = &sp.ctx;
        let g = LaurentSection::constant(&sp, 0, PAdicElem::integer(ctx, 5));
        let l = log_one_unit_section(&sp, &g).unwrap();
        let scalar = crate::padic::log_one_unit(ctx, &PAdicElem::integer(ctx, 6)).unwrap();
        let c = l.terms.get(&vec![0i32]).unwrap();
        assert!(c.eq_at_min_prec(ctx, &scalar));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn transition_round_trip_prop(seed in 0u64..1000) {
            let sp = p2_space();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_section(&sp, 1, &mut rng, 20);
            let back = transition(&sp, 2, 1, &transition(&sp, 1, 2, &s).unwrap()).unwrap();
            prop_assert!(back.eq_tracked(&sp, &s));
        }
    }
}
