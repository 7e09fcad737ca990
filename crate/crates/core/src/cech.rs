//! The Cech-de Rham bicomplex over a chart cover: differentials, total
//! complex, cup product, coboundary solving over Z/p^N and class
//! coefficient extraction.
//!
//! Both the Cech differential and the exterior derivative preserve the
//! torus weight of a monomial (its Cox exponent vector), so the total
//! complex splits into finite blocks indexed by characters.  The solver
//! assembles each block as an integer matrix, reduces it modulo p^W and
//! decides image membership through the echelon form of `linalg`.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{
    d, subsets_of_size, transition_form, transition_monomial_form, ChartedSpace, DiffForm, Exps,
    LaurentSection, Simplex, Wedge,
};
use crate::linalg;
use crate::padic::PAdicElem;

/// Torus weight of a monomial, as a Cox exponent vector.
pub type Character = Vec<i64>;

/// Cech p-cochain with q-form values, stored on sorted simplices in the
/// chart of the smallest index.
#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub cech_deg: usize,
    pub form_deg: usize,
    pub data: BTreeMap<Simplex, DiffForm>,
}

impl Cochain {
    pub fn zero(cech_deg: usize, form_deg: usize) -> Self {
        Self {
            cech_deg,
            form_deg,
            data: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, simplex: Simplex, form: DiffForm) {
        assert_eq!(simplex.len(), self.cech_deg + 1);
        assert!(simplex.windows(2).all(|w| w[0] < w[1]), "simplices are stored sorted");
        assert_eq!(form.degree, self.form_deg);
        assert_eq!(form.chart, simplex[0] as usize, "deepest-overlap chart");
        if form.comps.is_empty() {
            return;
        }
        self.data.insert(simplex, form);
    }

    pub fn get(&self, simplex: &[u8]) -> Option<&DiffForm> {
        self.data.get(simplex)
    }

    pub fn is_zero(&self) -> bool {
        self.data.values().all(|f| f.is_zero())
    }

    pub fn add(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        assert_eq!((self.cech_deg, self.form_deg), (rhs.cech_deg, rhs.form_deg));
        let mut out = self.clone();
        for (s, f) in &rhs.data {
            match out.data.remove(s) {
                Some(prev) => {
                    let sum = prev.add(space, f);
                    out.data.insert(s.clone(), sum);
                }
                None => {
                    out.data.insert(s.clone(), f.clone());
                }
            }
        }
        out
    }

    pub fn neg(&self, space: &ChartedSpace) -> Self {
        let mut out = self.clone();
        for f in out.data.values_mut() {
            *f = f.neg(space);
        }
        out
    }

    pub fn min_prec(&self, default: u32) -> u32 {
        self.data
            .values()
            .map(|f| f.min_prec(default))
            .min()
            .unwrap_or(default)
    }
}

/// Standard alternating-sum Cech differential; restrictions are computed
/// through exact chart transitions.
pub fn delta(space: &ChartedSpace, c: &Cochain) -> Result<Cochain> {
    let p = c.cech_deg;
    let mut out = Cochain::zero(p + 1, c.form_deg);
    for simplex in space.simplices(p + 1) {
        let chart = simplex[0] as usize;
        let mut acc = DiffForm::zero(chart, c.form_deg);
        for j in 0..simplex.len() {
            let mut face = simplex.clone();
            face.remove(j);
            let Some(f) = c.get(&face) else { continue };
            let moved = transition_form(space, face[0] as usize, chart, f)?;
            acc = if j % 2 == 0 {
                acc.add(space, &moved)
            } else {
                acc.sub(space, &moved)
            };
        }
        if !acc.comps.is_empty() {
            out.data.insert(simplex, acc);
        }
    }
    Ok(out)
}

/// Graded total cochain of the simple complex, with at most one component
/// per bidegree.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalCochain {
    pub degree: usize,
    pub comps: BTreeMap<(usize, usize), Cochain>,
}

impl TotalCochain {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            comps: BTreeMap::new(),
        }
    }

    /// The constant-1 cochain in bidegree (0, 0); unit for the cup product.
    pub fn unit(space: &ChartedSpace) -> Self {
        let mut c = Cochain::zero(0, 0);
        for i in 0..space.num_charts() {
            c.set(
                vec![i as u8],
                DiffForm::from_section(LaurentSection::constant(
                    space,
                    i,
                    PAdicElem::one(&space.ctx),
                )),
            );
        }
        let mut z = Self::zero(0);
        z.set(c);
        z
    }

    pub fn set(&mut self, c: Cochain) {
        assert_eq!(c.cech_deg + c.form_deg, self.degree);
        if c.data.is_empty() {
            return;
        }
        self.comps.insert((c.cech_deg, c.form_deg), c);
    }

    pub fn component(&self, cech_deg: usize, form_deg: usize) -> Option<&Cochain> {
        self.comps.get(&(cech_deg, form_deg))
    }

    pub fn is_zero(&self) -> bool {
        self.comps.values().all(|c| c.is_zero())
    }

    pub fn add(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        assert_eq!(self.degree, rhs.degree);
        let mut out = self.clone();
        for (k, c) in &rhs.comps {
            match out.comps.remove(k) {
                Some(prev) => {
                    out.comps.insert(*k, prev.add(space, c));
                }
                None => {
                    out.comps.insert(*k, c.clone());
                }
            }
        }
        out
    }

    pub fn neg(&self, space: &ChartedSpace) -> Self {
        let mut out = self.clone();
        for c in out.comps.values_mut() {
            *c = c.neg(space);
        }
        out
    }

    pub fn sub(&self, space: &ChartedSpace, rhs: &Self) -> Self {
        self.add(space, &rhs.neg(space))
    }

    /// Precision floor over every stored coefficient.
    pub fn min_prec(&self, space: &ChartedSpace) -> u32 {
        let n = space.ctx.precision();
        self.comps.values().map(|c| c.min_prec(n)).min().unwrap_or(n)
    }

    pub fn eq_tracked(&self, space: &ChartedSpace, rhs: &Self) -> bool {
        self.sub(space, rhs).is_zero()
    }
}

/// Total differential `Delta = delta + (-1)^p d`.
pub fn total_diff(space: &ChartedSpace, z: &TotalCochain) -> Result<TotalCochain> {
    let mut out = TotalCochain::zero(z.degree + 1);
    for ((p, q), c) in &z.comps {
        let dc = delta(space, c)?;
        if !dc.data.is_empty() {
            let merged = match out.comps.remove(&(p + 1, *q)) {
                Some(prev) => prev.add(space, &dc),
                None => dc,
            };
            out.comps.insert((p + 1, *q), merged);
        }
        let mut formwise = Cochain::zero(*p, q + 1);
        for (s, f) in &c.data {
            let mut df = d(space, f)?;
            if p % 2 == 1 {
                df = df.neg(space);
            }
            if !df.comps.is_empty() {
                formwise.data.insert(s.clone(), df);
            }
        }
        if !formwise.data.is_empty() {
            let merged = match out.comps.remove(&(*p, q + 1)) {
                Some(prev) => prev.add(space, &formwise),
                None => formwise,
            };
            out.comps.insert((*p, q + 1), merged);
        }
    }
    Ok(out)
}

/// Front-face/back-face cup product with the Koszul sign `(-1)^{q_a p_b}`.
pub fn cup(space: &ChartedSpace, a: &TotalCochain, b: &TotalCochain) -> Result<TotalCochain> {
    let mut out = TotalCochain::zero(a.degree + b.degree);
    for ((pa, qa), ca) in &a.comps {
        for ((pb, qb), cb) in &b.comps {
            if qa + qb > space.dim {
                continue;
            }
            let (p, q) = (pa + pb, qa + qb);
            let mut target = out
                .comps
                .remove(&(p, q))
                .unwrap_or_else(|| Cochain::zero(p, q));
            for simplex in space.simplices(p) {
                let front: Simplex = simplex[..=*pa].to_vec();
                let back: Simplex = simplex[*pa..].to_vec();
                let (Some(fa), Some(fb)) = (ca.get(&front), cb.get(&back)) else {
                    continue;
                };
                let moved = transition_form(space, back[0] as usize, simplex[0] as usize, fb)?;
                let mut wedge = fa.wedge(space, &moved)?;
                if (qa * pb) % 2 == 1 {
                    wedge = wedge.neg(space);
                }
                if wedge.comps.is_empty() {
                    continue;
                }
                let merged = match target.data.remove(&simplex) {
                    Some(prev) => prev.add(space, &wedge),
                    None => wedge,
                };
                target.data.insert(simplex, merged);
            }
            if !target.data.is_empty() {
                out.comps.insert((p, q), target);
            }
        }
    }
    Ok(out)
}

/// One basis slot of the total complex at a fixed character: a simplex, a
/// wedge set, and the exponent vector the character forces.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Generator {
    pub simplex: Simplex,
    pub wedge: Wedge,
    pub exps: Exps,
}

/// Character of a monomial form component.
pub(crate) fn character_of(
    space: &ChartedSpace,
    chart: usize,
    exps: &[i32],
    wedge: &[u8],
) -> Character {
    let mut cox = space.cox_of_monomial(chart, exps);
    for &k in wedge {
        for (c, v) in space.charts[chart].var_cox[k as usize].iter().enumerate() {
            cox[c] += v;
        }
    }
    cox
}

/// The exponent vector forced by a character on `(simplex, wedge)`, when
/// it exists in the chart lattice.
fn forced_exps(
    space: &ChartedSpace,
    simplex: &[u8],
    wedge: &[u8],
    chi: &Character,
) -> Option<Exps> {
    let chart = simplex[0] as usize;
    let mut cox = chi.clone();
    for &k in wedge {
        for (c, v) in space.charts[chart].var_cox[k as usize].iter().enumerate() {
            cox[c] -= v;
        }
    }
    space.exps_from_cox(chart, &cox)
}

fn generator_regular(space: &ChartedSpace, g: &Generator) -> bool {
    let cox = space.cox_of_monomial(g.simplex[0] as usize, &g.exps);
    space.regular_on(&g.simplex, &cox)
}

fn generator_in_window(space: &ChartedSpace, g: &Generator) -> bool {
    space.check_window(g.simplex[0] as usize, &g.exps).is_ok()
}

/// All regular generators of one character in one total degree, together
/// with a flag telling whether each fits the window.
pub(crate) fn generators(
    space: &ChartedSpace,
    degree: usize,
    chi: &Character,
) -> Vec<(Generator, bool)> {
    let mut out = Vec::new();
    for p in 0..space.num_charts() {
        let Some(q) = degree.checked_sub(p) else { break };
        if q > space.dim {
            continue;
        }
        for simplex in space.simplices(p) {
            let dim = space.charts[simplex[0] as usize].dim();
            for wedge in subsets_of_size(dim, q) {
                let Some(exps) = forced_exps(space, &simplex, &wedge, chi) else {
                    continue;
                };
                let g = Generator {
                    simplex: simplex.clone(),
                    wedge,
                    exps,
                };
                if generator_regular(space, &g) {
                    let fits = generator_in_window(space, &g);
                    out.push((g, fits));
                }
            }
        }
    }
    out
}

/// Integer coefficients of `Delta` applied to a single generator.
pub(crate) fn delta_of_generator(
    space: &ChartedSpace,
    g: &Generator,
) -> Result<Vec<(Generator, i64)>> {
    let mut out: BTreeMap<Generator, i64> = BTreeMap::new();
    let p = g.simplex.len() - 1;
    let chart = g.simplex[0] as usize;
    let dim = space.charts[chart].dim();
    let d_sign = if p % 2 == 0 { 1 } else { -1 };
    // (-1)^p d part
    for k in 0..dim as u8 {
        if g.wedge.contains(&k) {
            continue;
        }
        let e_k = g.exps[k as usize] as i64;
        if e_k == 0 {
            continue;
        }
        let pos = g.wedge.iter().filter(|&&j| j < k).count();
        let sign = if pos % 2 == 0 { 1 } else { -1 };
        let mut wedge = g.wedge.clone();
        wedge.insert(pos, k);
        let mut exps = g.exps.clone();
        exps[k as usize] -= 1;
        let tgt = Generator {
            simplex: g.simplex.clone(),
            wedge,
            exps,
        };
        *out.entry(tgt).or_insert(0) += d_sign * sign * e_k;
    }
    // delta part: cofacets
    for v in 0..space.num_charts() as u8 {
        if g.simplex.contains(&v) {
            continue;
        }
        let pos = g.simplex.iter().filter(|&&u| u < v).count();
        let mut simplex = g.simplex.clone();
        simplex.insert(pos, v);
        let j = pos;
        let sign = if j % 2 == 0 { 1i64 } else { -1 };
        if simplex[0] as usize == chart {
            let tgt = Generator {
                simplex,
                wedge: g.wedge.clone(),
                exps: g.exps.clone(),
            };
            *out.entry(tgt).or_insert(0) += sign;
        } else {
            // the new vertex is the smallest: re-express on its chart
            let to = simplex[0] as usize;
            for (exps, wedge, det) in
                transition_monomial_form(space, chart, to, &g.exps, &g.wedge)?
            {
                let tgt = Generator {
                    simplex: simplex.clone(),
                    wedge,
                    exps,
                };
                *out.entry(tgt).or_insert(0) += sign * det;
            }
        }
    }
    Ok(out.into_iter().filter(|(_, c)| *c != 0).collect())
}

/// Witness for exactness: `Delta(witness) = target` at the recorded
/// precision floor.
#[derive(Clone, Debug)]
pub struct CoboundaryWitness {
    pub witness: TotalCochain,
    pub precision: u32,
    pub certified: bool,
}

/// Certificate that the target is not a coboundary within the working
/// window and precision.
#[derive(Clone, Debug)]
pub struct NotExactCertificate {
    pub character: Character,
    pub precision: u32,
}

#[derive(Clone, Debug)]
pub enum SolveVerdict {
    Exact(CoboundaryWitness),
    NotExact(NotExactCertificate),
}

impl SolveVerdict {
    pub fn is_exact(&self) -> bool {
        matches!(self, SolveVerdict::Exact(_))
    }
}

/// Coefficients of `z` grouped per character, indexed by (p, q, simplex,
/// wedge).
fn character_decomposition(
    space: &ChartedSpace,
    z: &TotalCochain,
) -> BTreeMap<Character, Vec<(Generator, PAdicElem)>> {
    let mut out: BTreeMap<Character, Vec<(Generator, PAdicElem)>> = BTreeMap::new();
    for c in z.comps.values() {
        for (simplex, form) in &c.data {
            for (wedge, section) in &form.comps {
                for (exps, coeff) in &section.terms {
                    let chi = character_of(space, section.chart, exps, wedge);
                    out.entry(chi).or_default().push((
                        Generator {
                            simplex: simplex.clone(),
                            wedge: wedge.clone(),
                            exps: exps.clone(),
                        },
                        coeff.clone(),
                    ));
                }
            }
        }
    }
    out
}

struct CharacterSolve {
    /// per requested extra basis vector: its coefficient in the solution
    basis_coeffs: Vec<BigUint>,
    /// witness coefficients per unknown generator
    witness: Vec<(Generator, BigUint)>,
}

/// Solve `z = sum_i lambda_i basis_i + Delta(w)` inside one character
/// block at working precision `w_prec`, unknown monomials restricted to
/// the window of `solve_space`.
fn solve_character(
    space: &ChartedSpace,
    solve_space: &ChartedSpace,
    chi: &Character,
    entries: &[(Generator, PAdicElem)],
    basis_entries: &[Vec<(Generator, PAdicElem)>],
    degree: usize,
    w_prec: u32,
) -> Result<Option<CharacterSolve>> {
    let p = space.ctx.p();
    let modulus = BigUint::from(p).pow(w_prec);
    let reduce = |c: &PAdicElem| c.residue() % &modulus;

    // equations: every regular generator of the target degree
    let eq_gens = generators(space, degree, chi);
    let mut eq_index: BTreeMap<(Simplex, Wedge), usize> = BTreeMap::new();
    for (i, (g, _)) in eq_gens.iter().enumerate() {
        eq_index.insert((g.simplex.clone(), g.wedge.clone()), i);
    }
    let mut b = vec![BigUint::zero(); eq_gens.len()];
    for (g, coeff) in entries {
        match eq_index.get(&(g.simplex.clone(), g.wedge.clone())) {
            Some(&i) => {
                debug_assert_eq!(eq_gens[i].0.exps, g.exps);
                b[i] = (b[i].clone() + reduce(coeff)) % &modulus;
            }
            None => {
                // a component no coboundary can reach
                if !reduce(coeff).is_zero() {
                    return Ok(None);
                }
            }
        }
    }

    // unknowns: window-restricted generators one degree down
    let unknowns: Vec<Generator> = if degree == 0 {
        Vec::new()
    } else {
        generators(solve_space, degree - 1, chi)
            .into_iter()
            .filter(|(_, fits)| *fits)
            .map(|(g, _)| g)
            .collect()
    };
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(unknowns.len() + basis_entries.len());
    for g in &unknowns {
        let mut row = vec![BigUint::zero(); eq_gens.len()];
        for (tgt, coeff) in delta_of_generator(space, g)? {
            let Some(&i) = eq_index.get(&(tgt.simplex.clone(), tgt.wedge.clone())) else {
                // target is regular by construction, so it must be indexed
                return Err(Error::InvalidInput(
                    "differential left the regular generator set".into(),
                ));
            };
            debug_assert_eq!(eq_gens[i].0.exps, tgt.exps);
            let c = PAdicElem::from_i64(&space.ctx, coeff, w_prec);
            row[i] = (row[i].clone() + c.residue()) % &modulus;
        }
        rows.push(row);
    }
    for basis in basis_entries {
        let mut row = vec![BigUint::zero(); eq_gens.len()];
        for (g, coeff) in basis {
            let Some(&i) = eq_index.get(&(g.simplex.clone(), g.wedge.clone())) else {
                return Err(Error::NotInSpan(
                    "reference cochain has an unreachable component".into(),
                ));
            };
            row[i] = (row[i].clone() + reduce(coeff)) % &modulus;
        }
        rows.push(row);
    }

    let out = linalg::solve_rows(p, w_prec, &rows, eq_gens.len(), &[b]);
    let Some(solution) = out.solutions[0].clone() else {
        return Ok(None);
    };
    // basis coefficients must be determined: no kernel element may move them
    for k in &out.kernel {
        for coeff in &k[unknowns.len()..] {
            if !coeff.is_zero() {
                return Err(Error::NotInSpan(
                    "reference decomposition is not unique in this block".into(),
                ));
            }
        }
    }
    let basis_coeffs = solution[unknowns.len()..].to_vec();
    let witness = unknowns
        .into_iter()
        .zip(solution)
        .filter(|(_, c)| !c.is_zero())
        .collect();
    Ok(Some(CharacterSolve {
        basis_coeffs,
        witness,
    }))
}

fn assemble_witness(
    space: &ChartedSpace,
    degree: usize,
    parts: Vec<(Generator, BigUint)>,
    w_prec: u32,
) -> TotalCochain {
    let mut out = TotalCochain::zero(degree);
    let mut comps: BTreeMap<(usize, usize), Cochain> = BTreeMap::new();
    for (g, coeff) in parts {
        let p = g.simplex.len() - 1;
        let q = g.wedge.len();
        let chart = g.simplex[0] as usize;
        let c = comps.entry((p, q)).or_insert_with(|| Cochain::zero(p, q));
        let elem = PAdicElem::from_biguint(&space.ctx, coeff, w_prec);
        let form = c
            .data
            .entry(g.simplex.clone())
            .or_insert_with(|| DiffForm::zero(chart, q));
        let section = form
            .comps
            .entry(g.wedge.clone())
            .or_insert_with(|| LaurentSection::zero(chart, w_prec));
        let prev = section
            .terms
            .get(&g.exps)
            .cloned()
            .unwrap_or_else(|| PAdicElem::zero(w_prec));
        section.terms.insert(g.exps, prev.add(&space.ctx, &elem));
    }
    for (k, c) in comps {
        let mut clean = Cochain::zero(k.0, k.1);
        for (s, f) in c.data {
            if !f.is_zero() {
                clean.data.insert(s, f);
            }
        }
        if !clean.data.is_empty() {
            out.comps.insert(k, clean);
        }
    }
    out
}

fn run_solve_pass(
    space: &ChartedSpace,
    solve_space: &ChartedSpace,
    z: &TotalCochain,
    basis: &[TotalCochain],
    w_prec: u32,
) -> Result<std::result::Result<(Vec<PAdicElem>, TotalCochain), NotExactCertificate>> {
    let by_char = character_decomposition(space, z);
    let zero_char: Character = vec![0; space.cox_count];
    let mut basis_by_char: Vec<Vec<(Generator, PAdicElem)>> = Vec::new();
    for b in basis {
        let mut dec = character_decomposition(space, b);
        if dec.keys().any(|chi| chi != &zero_char) {
            return Err(Error::NotInSpan(
                "reference cochains must be weight-zero".into(),
            ));
        }
        basis_by_char.push(dec.remove(&zero_char).unwrap_or_default());
    }

    let mut witness_parts: Vec<(Generator, BigUint)> = Vec::new();
    let mut coeffs = vec![PAdicElem::zero(w_prec); basis.len()];
    let mut chars: BTreeSet<Character> = by_char.keys().cloned().collect();
    if !basis.is_empty() {
        chars.insert(zero_char.clone());
    }
    let empty: Vec<Vec<(Generator, PAdicElem)>> = Vec::new();
    for chi in chars {
        let entries = by_char.get(&chi).cloned().unwrap_or_default();
        let use_basis = chi == zero_char;
        let result = solve_character(
            space,
            solve_space,
            &chi,
            &entries,
            if use_basis { &basis_by_char } else { &empty },
            z.degree,
            w_prec,
        )?;
        match result {
            Some(sol) => {
                witness_parts.extend(sol.witness);
                if use_basis {
                    for (i, c) in sol.basis_coeffs.iter().enumerate() {
                        coeffs[i] = PAdicElem::from_biguint(&space.ctx, c.clone(), w_prec);
                    }
                }
            }
            None => {
                return Ok(Err(NotExactCertificate {
                    character: chi,
                    precision: w_prec,
                }));
            }
        }
    }
    let witness = assemble_witness(space, z.degree.saturating_sub(1), witness_parts, w_prec);
    Ok(Ok((coeffs, witness)))
}

/// Decide whether `z` is a total coboundary; window adequacy is enforced
/// by comparing verdicts at the configured window and at window + 2.
pub fn solve_coboundary(space: &ChartedSpace, z: &TotalCochain) -> Result<SolveVerdict> {
    let diff = total_diff(space, z)?;
    if !diff.is_zero() {
        return Err(Error::NotClosed("total differential is nonzero".into()));
    }
    let w_prec = z.min_prec(space);
    if w_prec == 0 {
        return Err(Error::PrecisionExhausted(
            "target carries no usable precision".into(),
        ));
    }
    let wide = space.with_window_margin(2);
    let at_d = run_solve_pass(space, space, z, &[], w_prec)?;
    let at_d2 = run_solve_pass(space, &wide, z, &[], w_prec)?;
    match (at_d, at_d2) {
        (Ok((_, witness)), Ok(_)) => {
            let check = total_diff(space, &witness)?;
            let certified = check.eq_tracked(space, z) && witness_regular(space, &witness);
            debug_assert!(certified, "solver returned an invalid witness");
            Ok(SolveVerdict::Exact(CoboundaryWitness {
                witness,
                precision: w_prec,
                certified,
            }))
        }
        (Err(cert), Err(_)) => Ok(SolveVerdict::NotExact(cert)),
        _ => Err(Error::WindowTooSmall(
            "coboundary verdict changed under window growth".into(),
        )),
    }
}

/// Every stored witness monomial must be regular on the charts of its
/// simplex.
fn witness_regular(space: &ChartedSpace, w: &TotalCochain) -> bool {
    for c in w.comps.values() {
        for (simplex, form) in &c.data {
            for (_, section) in &form.comps {
                for (exps, _) in &section.terms {
                    let cox = space.cox_of_monomial(section.chart, exps);
                    if !space.regular_on(simplex, &cox) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Solution of `z = sum_i coefficients_i * basis_i + Delta(witness)`.
#[derive(Clone, Debug)]
pub struct SpanSolution {
    pub coefficients: Vec<PAdicElem>,
    pub witness: TotalCochain,
    pub precision: u32,
}

/// Express a closed cochain over weight-zero reference cochains modulo
/// coboundaries; unique by construction (non-uniqueness is reported).
pub fn solve_in_span(
    space: &ChartedSpace,
    z: &TotalCochain,
    basis: &[TotalCochain],
) -> Result<SpanSolution> {
    let diff = total_diff(space, z)?;
    if !diff.is_zero() {
        return Err(Error::NotClosed("total differential is nonzero".into()));
    }
    let w_prec = z.min_prec(space);
    if w_prec == 0 {
        return Err(Error::PrecisionExhausted(
            "target carries no usable precision".into(),
        ));
    }
    let wide = space.with_window_margin(2);
    let at_d = run_solve_pass(space, space, z, basis, w_prec)?;
    let at_d2 = run_solve_pass(space, &wide, z, basis, w_prec)?;
    match (at_d, at_d2) {
        (Ok((coefficients, witness)), Ok((c2, _))) => {
            for (a, b) in coefficients.iter().zip(&c2) {
                if !a.eq_at_min_prec(&space.ctx, b) {
                    return Err(Error::WindowTooSmall(
                        "decomposition changed under window growth".into(),
                    ));
                }
            }
            Ok(SpanSolution {
                coefficients,
                witness,
                precision: w_prec,
            })
        }
        (Err(c), _) | (_, Err(c)) => Err(Error::NotInSpan(format!(
            "no decomposition at character {:?}",
            c.character
        ))),
    }
}

/// Reference hyperplane cocycle of P^n: the degree-2 total cochain with
/// edge components dlog(t_j / t_i) for i < j.
pub fn hyperplane_cocycle(space: &ChartedSpace) -> Result<TotalCochain> {
    use crate::laurent::SpaceDescriptor;
    if !matches!(space.descriptor, SpaceDescriptor::ProjectiveSpace { .. }) {
        return Err(Error::UnsupportedSpace(
            "the hyperplane reference lives on P^n".into(),
        ));
    }
    let ctx = &space.ctx;
    let mut edge = Cochain::zero(1, 1);
    for simplex in space.simplices(1) {
        let i = simplex[0] as usize;
        let j = simplex[1] as usize;
        // transition of O(1) from chart i to chart j is t_j / t_i, which is
        // the chart-i variable owned by t_j
        let var = space.charts[i]
            .owner
            .iter()
            .position(|&o| o == j)
            .expect("t_j is a variable of chart i");
        let mut exps = vec![0i32; space.charts[i].dim()];
        exps[var] = -1;
        let section =
            LaurentSection::monomial(space, i, exps, PAdicElem::one(ctx))?;
        let mut form = DiffForm::zero(i, 1);
        form.comps.insert(vec![var as u8], section);
        edge.set(simplex, form);
    }
    let mut z = TotalCochain::zero(2);
    z.set(edge);
    Ok(z)
}

/// k-fold cup power of the hyperplane cocycle (the unit cochain for k=0).
pub fn hyperplane_power(space: &ChartedSpace, k: usize) -> Result<TotalCochain> {
    let mut acc = TotalCochain::unit(space);
    if k == 0 {
        return Ok(acc);
    }
    let h = hyperplane_cocycle(space)?;
    for _ in 0..k {
        acc = cup(space, &acc, &h)?;
    }
    Ok(acc)
}

/// Class coefficient on P^n: the lambda with `z - lambda h^k` exact,
/// computed through the echelon solver.
pub fn class_coeff(space: &ChartedSpace, z: &TotalCochain) -> Result<PAdicElem> {
    use crate::laurent::SpaceDescriptor;
    let SpaceDescriptor::ProjectiveSpace { n } = space.descriptor else {
        return Err(Error::UnsupportedSpace(
            "class_coeff extracts coefficients on P^n".into(),
        ));
    };
    if z.degree % 2 != 0 || z.degree > 2 * n as usize {
        return Err(Error::InvalidInput(format!(
            "degree {} admits no h^k coefficient on P^{n}",
            z.degree
        )));
    }
    let hk = hyperplane_power(space, z.degree / 2)?;
    let sol = solve_in_span(space, z, &[hk])?;
    Ok(sol.coefficients.into_iter().next().expect("one reference"))
}

/// Independent residue functional: the normalized coefficient of
/// `(u_1...u_k)^{-1} du_1 ^ ... ^ du_k` on the deepest overlap of the
/// first k+1 charts.
pub fn residue_coeff(space: &ChartedSpace, z: &TotalCochain) -> Result<PAdicElem> {
    use crate::laurent::SpaceDescriptor;
    let SpaceDescriptor::ProjectiveSpace { n } = space.descriptor else {
        return Err(Error::UnsupportedSpace(
            "the residue functional lives on P^n".into(),
        ));
    };
    if z.degree % 2 != 0 || z.degree > 2 * n as usize {
        return Err(Error::InvalidInput("degree out of range".into()));
    }
    let k = z.degree / 2;
    let raw = |t: &TotalCochain| -> PAdicElem {
        let Some(c) = t.component(k, k) else {
            return PAdicElem::zero(space.ctx.precision());
        };
        let simplex: Simplex = (0..=k as u8).collect();
        let Some(form) = c.get(&simplex) else {
            return PAdicElem::zero(space.ctx.precision());
        };
        let wedge: Wedge = (0..k as u8).collect();
        let Some(section) = form.comps.get(&wedge) else {
            return PAdicElem::zero(space.ctx.precision());
        };
        let mut exps = vec![0i32; space.charts[0].dim()];
        for e in exps.iter_mut().take(k) {
            *e = -1;
        }
        section
            .terms
            .get(&exps)
            .cloned()
            .unwrap_or_else(|| PAdicElem::zero(section.min_prec()))
    };
    let base = raw(&hyperplane_power(space, k)?);
    let unit_inv = base.unit_inv(&space.ctx)?;
    Ok(raw(z).mul(&space.ctx, &unit_inv))
}

/// Serialized total cochain for dump/restore.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TotalCochainData {
    pub degree: usize,
    pub components: Vec<CochainData>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CochainData {
    pub cech: usize,
    pub form: usize,
    pub simplices: Vec<(Simplex, crate::laurent::FormData)>,
}

impl TotalCochain {
    pub fn to_data(&self) -> TotalCochainData {
        TotalCochainData {
            degree: self.degree,
            components: self
                .comps
                .iter()
                .map(|((p, q), c)| CochainData {
                    cech: *p,
                    form: *q,
                    simplices: c
                        .data
                        .iter()
                        .map(|(s, f)| (s.clone(), f.to_data()))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_data(space: &ChartedSpace, data: &TotalCochainData) -> Result<Self> {
        let mut z = TotalCochain::zero(data.degree);
        for comp in &data.components {
            if comp.cech + comp.form != data.degree {
                return Err(Error::InvalidInput("component bidegree mismatch".into()));
            }
            let mut c = Cochain::zero(comp.cech, comp.form);
            for (simplex, form) in &comp.simplices {
                let f = DiffForm::from_data(space, form)?;
                c.set(simplex.clone(), f);
            }
            if !c.data.is_empty() {
                z.comps.insert((comp.cech, comp.form), c);
            }
        }
        Ok(z)
    }
}

/// Rank table of the total-complex cohomology modulo p^N.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankTable {
    /// free rank per total degree 0..=max_degree
    pub ranks: Vec<usize>,
    /// p-valuations of torsion invariant factors per degree
    pub torsion: Vec<Vec<u32>>,
    /// characters skipped because the window truncates their block
    pub censored_characters: usize,
}

/// Every character carrying a window-visible generator in total degrees
/// 0..=max_degree+1.
fn census_characters(space: &ChartedSpace, max_degree: usize) -> BTreeSet<Character> {
    let mut out = BTreeSet::new();
    let max_p = space.num_charts() - 1;
    for p in 0..=max_p {
        for simplex in space.simplices(p) {
            let chart = simplex[0] as usize;
            let dim = space.charts[chart].dim();
            for q in 0..=space.dim.min(max_degree + 1) {
                if p + q > max_degree + 1 {
                    continue;
                }
                for wedge in subsets_of_size(dim, q) {
                    // scan the window box of this chart
                    let windows = &space.charts[chart].window;
                    let mut exps: Exps = windows.iter().map(|&w| -(w as i32)).collect();
                    'scan: loop {
                        let cox = space.cox_of_monomial(chart, &exps);
                        if space.regular_on(&simplex, &cox) {
                            out.insert(character_of(space, chart, &exps, &wedge));
                        }
                        let mut i = 0;
                        loop {
                            if i == exps.len() {
                                break 'scan;
                            }
                            exps[i] += 1;
                            if exps[i] <= windows[i] as i32 {
                                break;
                            }
                            exps[i] = -(windows[i] as i32);
                            i += 1;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Integer matrix of `Delta` from degree k to k+1 inside one character
/// block (rows indexed by degree-k generators).
pub(crate) fn character_matrix(
    space: &ChartedSpace,
    chi: &Character,
    degree: usize,
) -> Result<(Vec<Generator>, Vec<Generator>, Vec<Vec<i64>>)> {
    let from: Vec<Generator> = generators(space, degree, chi)
        .into_iter()
        .map(|(g, _)| g)
        .collect();
    let to: Vec<Generator> = generators(space, degree + 1, chi)
        .into_iter()
        .map(|(g, _)| g)
        .collect();
    let mut index: BTreeMap<(Simplex, Wedge), usize> = BTreeMap::new();
    for (i, g) in to.iter().enumerate() {
        index.insert((g.simplex.clone(), g.wedge.clone()), i);
    }
    let mut rows = Vec::with_capacity(from.len());
    for g in &from {
        let mut row = vec![0i64; to.len()];
        for (tgt, c) in delta_of_generator(space, g)? {
            let i = index[&(tgt.simplex.clone(), tgt.wedge.clone())];
            row[i] += c;
        }
        rows.push(row);
    }
    Ok((from, to, rows))
}

fn block_complete(space: &ChartedSpace, chi: &Character, max_degree: usize) -> bool {
    for degree in 0..=max_degree + 1 {
        for (_, fits) in generators(space, degree, chi) {
            if !fits {
                return false;
            }
        }
    }
    true
}

/// Cohomology ranks of the windowed total complex via echelon forms over
/// Z/p^N, summed over window-complete characters.
pub fn total_cohomology_ranks(space: &ChartedSpace, max_degree: usize) -> Result<RankTable> {
    ranks_impl(space, max_degree, false)
}

/// Same table, with every block cross-checked against the Smith-form
/// route over the lifted integers.
pub fn total_cohomology_ranks_cross_checked(
    space: &ChartedSpace,
    max_degree: usize,
) -> Result<RankTable> {
    ranks_impl(space, max_degree, true)
}

fn ranks_impl(space: &ChartedSpace, max_degree: usize, cross_check: bool) -> Result<RankTable> {
    let p = space.ctx.p();
    let w = space.ctx.precision();
    let mut ranks = vec![0usize; max_degree + 1];
    let mut torsion: Vec<Vec<u32>> = vec![Vec::new(); max_degree + 1];
    let mut censored = 0usize;
    for chi in census_characters(space, max_degree) {
        if !block_complete(space, &chi, max_degree) {
            censored += 1;
            continue;
        }
        let mut mats: Vec<(usize, Vec<Vec<i64>>)> = Vec::new();
        for degree in 0..=max_degree {
            let (from, _, rows) = character_matrix(space, &chi, degree)?;
            mats.push((from.len(), rows));
        }
        for degree in 0..=max_degree {
            let dim_ck = mats[degree].0;
            if dim_ck == 0 {
                continue;
            }
            let prev_rows: Vec<Vec<i64>> = if degree == 0 {
                Vec::new()
            } else {
                mats[degree - 1].1.clone()
            };
            let (free, tors) =
                block_cohomology_invariants(p, w, &prev_rows, &mats[degree].1, dim_ck);
            if cross_check {
                let oracle =
                    block_cohomology_invariants_z(p, w, &prev_rows, &mats[degree].1, dim_ck);
                if oracle != (free, tors.clone()) {
                    return Err(Error::NotInSpan(format!(
                        "echelon and Smith routes disagree at character {chi:?}, degree {degree}"
                    )));
                }
            }
            ranks[degree] += free;
            torsion[degree].extend(tors);
        }
    }
    for t in &mut torsion {
        t.sort_unstable();
    }
    Ok(RankTable {
        ranks,
        torsion,
        censored_characters: censored,
    })
}

/// Invariants of ker(Delta_k)/im(Delta_{k-1}) over Z/p^w for one block.
pub(crate) fn block_cohomology_invariants(
    p: u64,
    w: u32,
    prev_rows: &[Vec<i64>],
    rows: &[Vec<i64>],
    dim_ck: usize,
) -> (usize, Vec<u32>) {
    let modulus = BigUint::from(p).pow(w);
    let conv_row = |row: &[i64], ncols: usize| -> Vec<BigUint> {
        let mut out = Vec::with_capacity(ncols);
        for &x in row {
            let mut v = BigUint::from(x.unsigned_abs()) % &modulus;
            if x < 0 && !v.is_zero() {
                v = &modulus - v;
            }
            out.push(v);
        }
        out
    };
    let ncols_out = rows.first().map(|r| r.len()).unwrap_or(0);
    let a_rows: Vec<Vec<BigUint>> = rows.iter().map(|r| conv_row(r, ncols_out)).collect();
    // kernel of x -> x * A over R^dim_ck
    let padded: Vec<Vec<BigUint>> = if a_rows.is_empty() {
        (0..dim_ck).map(|_| Vec::new()).collect()
    } else {
        a_rows
    };
    let out = linalg::solve_rows(p, w, &padded, ncols_out, &[]);
    let kernel = out.kernel;
    if kernel.is_empty() {
        return (0, Vec::new());
    }
    // express boundary images in kernel coordinates
    let rhs: Vec<Vec<BigUint>> = prev_rows.iter().map(|r| conv_row(r, dim_ck)).collect();
    let ksolve = linalg::solve_rows(p, w, &kernel, dim_ck, &rhs);
    let mut relations: Vec<Vec<BigUint>> = Vec::new();
    for sol in ksolve.solutions {
        relations.push(sol.expect("boundaries lie inside cocycles"));
    }
    relations.extend(ksolve.kernel);
    linalg::cokernel_invariants(p, w, &relations, kernel.len())
}

/// Same invariants through Smith normal form over the lifted integers and
/// universal coefficients; used as a cross-check oracle.
pub(crate) fn block_cohomology_invariants_z(
    p: u64,
    w: u32,
    prev_rows: &[Vec<i64>],
    rows: &[Vec<i64>],
    dim_ck: usize,
) -> (usize, Vec<u32>) {
    let vp = |d: &BigUint| -> u32 {
        let mut v = 0u32;
        let mut x = d.clone();
        let big_p = BigUint::from(p);
        while v < w && (&x % &big_p) == BigUint::default() && x != BigUint::default() {
            v += 1;
            x /= &big_p;
        }
        v.min(w)
    };
    let diag_prev = linalg::smith_diagonal_z(prev_rows);
    let diag_cur = linalg::smith_diagonal_z(rows);
    let rank_prev = diag_prev.len();
    let rank_cur = diag_cur.len();
    let free = dim_ck - rank_cur - rank_prev;
    let mut torsion: Vec<u32> = Vec::new();
    // torsion of H^k from the previous boundary, Tor-part from this one
    for d in diag_prev.iter().chain(diag_cur.iter()) {
        if d > &BigUint::from(1u32) {
            let v = vp(d).min(w);
            if v > 0 {
                torsion.push(v);
            }
        }
    }
    torsion.sort_unstable();
    (free, torsion)
}
