//! Exact linear algebra over the chain ring Z/p^W.
//!
//! Image membership, solving and kernels go through a Howell-style
//! echelon form with tracked transformation; module invariants come from
//! a valuation-pivoted diagonal form.  Smith normal form over the lifted
//! integers is kept alongside as an independent route for cross-checks.

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive, Zero};

use crate::padic::mod_inverse;

/// Ring operations needed by the echelon routines.  `Small` keeps
/// residues in u128 (modulus up to 2^64), `Big` falls back to BigUint.
pub(crate) trait Ring {
    type El: Clone + PartialEq + std::fmt::Debug;
    fn w(&self) -> u32;
    fn zero(&self) -> Self::El;
    fn is_zero(&self, x: &Self::El) -> bool;
    fn from_biguint(&self, x: &BigUint) -> Self::El;
    fn to_biguint(&self, x: &Self::El) -> BigUint;
    fn add(&self, a: &Self::El, b: &Self::El) -> Self::El;
    fn sub(&self, a: &Self::El, b: &Self::El) -> Self::El;
    fn mul(&self, a: &Self::El, b: &Self::El) -> Self::El;
    /// p-adic valuation capped at w (zero maps to w).
    fn val(&self, x: &Self::El) -> u32;
    fn pow_p(&self, k: u32) -> Self::El;
    /// Inverse of the unit part: x = p^val * unit, returns unit^{-1}.
    fn unit_part_inv(&self, x: &Self::El) -> Self::El;
    /// Exact division by p^k (requires val(x) >= k).
    fn div_pow(&self, x: &Self::El, k: u32) -> Self::El;
}

pub(crate) struct SmallRing {
    p: u128,
    w: u32,
    m: u128,
}

impl SmallRing {
    fn egcd_inv(&self, a: u128) -> u128 {
        // extended Euclid on i128; a is a unit mod m
        let (mut r0, mut r1) = (self.m as i128, (a % self.m) as i128);
        let (mut s0, mut s1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (s0, s1) = (s1, s0 - q * s1);
        }
        debug_assert_eq!(r0, 1, "inverse of a non-unit");
        let mut s = s0 % self.m as i128;
        if s < 0 {
            s += self.m as i128;
        }
        s as u128
    }
}

impl Ring for SmallRing {
    type El = u128;

    fn w(&self) -> u32 {
        self.w
    }
    fn zero(&self) -> u128 {
        0
    }
    fn is_zero(&self, x: &u128) -> bool {
        *x == 0
    }
    fn from_biguint(&self, x: &BigUint) -> u128 {
        (x % BigUint::from(self.m)).to_u128().expect("reduced")
    }
    fn to_biguint(&self, x: &u128) -> BigUint {
        BigUint::from(*x)
    }
    fn add(&self, a: &u128, b: &u128) -> u128 {
        (a + b) % self.m
    }
    fn sub(&self, a: &u128, b: &u128) -> u128 {
        (a + self.m - b) % self.m
    }
    fn mul(&self, a: &u128, b: &u128) -> u128 {
        // residues < 2^64, so the product fits in u128
        (a * b) % self.m
    }
    fn val(&self, x: &u128) -> u32 {
        if *x == 0 {
            return self.w;
        }
        let mut v = 0;
        let mut y = *x;
        while y % self.p == 0 {
            v += 1;
            y /= self.p;
        }
        v
    }
    fn pow_p(&self, k: u32) -> u128 {
        let mut acc = 1u128;
        for _ in 0..k {
            acc *= self.p;
        }
        acc % self.m.max(1)
    }
    fn unit_part_inv(&self, x: &u128) -> u128 {
        let v = self.val(x);
        let unit = x / self.pow_p(v).max(1);
        self.egcd_inv(unit)
    }
    fn div_pow(&self, x: &u128, k: u32) -> u128 {
        x / self.pow_p(k)
    }
}

pub(crate) struct BigRing {
    p: u64,
    w: u32,
    m: BigUint,
}

impl Ring for BigRing {
    type El = BigUint;

    fn w(&self) -> u32 {
        self.w
    }
    fn zero(&self) -> BigUint {
        BigUint::zero()
    }
    fn is_zero(&self, x: &BigUint) -> bool {
        x.is_zero()
    }
    fn from_biguint(&self, x: &BigUint) -> BigUint {
        x % &self.m
    }
    fn to_biguint(&self, x: &BigUint) -> BigUint {
        x.clone()
    }
    fn add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.m
    }
    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.m) - b) % &self.m
    }
    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.m
    }
    fn val(&self, x: &BigUint) -> u32 {
        if x.is_zero() {
            return self.w;
        }
        let p = BigUint::from(self.p);
        let mut v = 0;
        let mut y = x.clone();
        while (&y % &p).is_zero() {
            v += 1;
            y /= &p;
        }
        v
    }
    fn pow_p(&self, k: u32) -> BigUint {
        BigUint::from(self.p).pow(k)
    }
    fn unit_part_inv(&self, x: &BigUint) -> BigUint {
        let v = self.val(x);
        let unit = x / self.pow_p(v);
        mod_inverse(&unit, &self.m).expect("unit part is invertible")
    }
    fn div_pow(&self, x: &BigUint, k: u32) -> BigUint {
        x / self.pow_p(k)
    }
}

#[derive(Clone)]
struct Row<E> {
    a: Vec<E>,
    t: Vec<E>,
}

/// Howell-style echelon of the row module spanned by `rows`, with the
/// transformation tracked in the `t` part (t * original = a).
struct Echelon<R: Ring> {
    ring: R,
    ncols: usize,
    /// pivot column -> normalized row whose pivot entry is p^val
    pivots: Vec<Option<Row<R::El>>>,
    /// transforms of combinations that reduced to zero (kernel of the
    /// row-combination map)
    kernel: Vec<Vec<R::El>>,
    changed: bool,
}

impl<R: Ring> Echelon<R> {
    fn new(ring: R, rows: Vec<Vec<R::El>>, ncols: usize) -> Self {
        let nrows = rows.len();
        let mut ech = Echelon {
            ring,
            ncols,
            pivots: (0..ncols).map(|_| None).collect(),
            kernel: Vec::new(),
            changed: false,
        };
        let mut work: Vec<Row<R::El>> = rows
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                let mut t = vec![ech.ring.zero(); nrows];
                t[i] = ech.ring.pow_p(0);
                Row { a, t }
            })
            .collect();
        // Saturate: re-feed annihilator shadows of every pivot until the
        // echelon is stable, so that greedy reduction decides membership.
        loop {
            while let Some(row) = work.pop() {
                ech.insert(row, &mut work);
            }
            ech.changed = false;
            let w = ech.ring.w();
            for c in 0..ncols {
                if let Some(pivot) = &ech.pivots[c] {
                    let e = ech.ring.val(&pivot.a[c]);
                    if e > 0 {
                        work.push(Self::scale_row(&ech.ring, pivot, &ech.ring.pow_p(w - e)));
                    }
                }
            }
            while let Some(row) = work.pop() {
                ech.insert(row, &mut work);
            }
            if !ech.changed {
                break;
            }
        }
        ech.back_reduce();
        ech
    }

    fn scale_row(ring: &R, row: &Row<R::El>, k: &R::El) -> Row<R::El> {
        Row {
            a: row.a.iter().map(|x| ring.mul(x, k)).collect(),
            t: row.t.iter().map(|x| ring.mul(x, k)).collect(),
        }
    }

    fn sub_scaled(ring: &R, row: &mut Row<R::El>, other: &Row<R::El>, k: &R::El) {
        for (x, y) in row.a.iter_mut().zip(&other.a) {
            *x = ring.sub(x, &ring.mul(y, k));
        }
        for (x, y) in row.t.iter_mut().zip(&other.t) {
            *x = ring.sub(x, &ring.mul(y, k));
        }
    }

    fn insert(&mut self, mut row: Row<R::El>, work: &mut Vec<Row<R::El>>) {
        let ring = &self.ring;
        let w = ring.w();
        for col in 0..self.ncols {
            if ring.is_zero(&row.a[col]) {
                continue;
            }
            let ev = ring.val(&row.a[col]);
            match &self.pivots[col] {
                Some(pivot) => {
                    let pv = ring.val(&pivot.a[col]);
                    if ev >= pv {
                        // eliminate: factor = entry / p^pv (exact)
                        let f = ring.div_pow(&row.a[col], pv);
                        Self::sub_scaled(ring, &mut row, &pivot.clone(), &f);
                        debug_assert!(ring.is_zero(&row.a[col]));
                    } else {
                        // the new row has a better pivot: swap it in
                        let inv = ring.unit_part_inv(&row.a[col]);
                        let new_pivot = Self::scale_row(ring, &row, &inv);
                        let old = self.pivots[col].take().expect("checked");
                        self.pivots[col] = Some(new_pivot.clone());
                        if ev > 0 {
                            work.push(Self::scale_row(ring, &new_pivot, &ring.pow_p(w - ev)));
                        }
                        work.push(old);
                        self.changed = true;
                        return;
                    }
                }
                None => {
                    let inv = ring.unit_part_inv(&row.a[col]);
                    let pivot = Self::scale_row(ring, &row, &inv);
                    if ev > 0 {
                        work.push(Self::scale_row(ring, &pivot, &ring.pow_p(w - ev)));
                    }
                    self.pivots[col] = Some(pivot);
                    self.changed = true;
                    return;
                }
            }
        }
        // the A part vanished: the transform is a kernel element
        if row.t.iter().any(|x| !ring.is_zero(x)) {
            self.kernel.push(row.t);
        }
    }

    fn back_reduce(&mut self) {
        let cols: Vec<usize> = (0..self.ncols).filter(|&c| self.pivots[c].is_some()).collect();
        for &c in &cols {
            let pivot = self.pivots[c].clone().expect("pivot exists");
            let pv = self.ring.val(&pivot.a[c]);
            for &c2 in &cols {
                if c2 >= c {
                    break;
                }
                let mut row = self.pivots[c2].take().expect("pivot exists");
                // keep entries above the pivot reduced modulo p^pv
                let q = self.ring.div_pow(&row.a[c], pv);
                if !self.ring.is_zero(&q) {
                    Self::sub_scaled(&self.ring, &mut row, &pivot, &q);
                }
                self.pivots[c2] = Some(row);
            }
        }
    }

    /// Reduce `b` against the echelon; on success returns the combination
    /// of original rows producing it.
    fn solve(&self, b: &[R::El]) -> Option<Vec<R::El>> {
        let ring = &self.ring;
        let nt = self
            .pivots
            .iter()
            .flatten()
            .next()
            .map(|r| r.t.len())
            .unwrap_or(0);
        let mut residual: Vec<R::El> = b.to_vec();
        let mut x = vec![ring.zero(); nt];
        for col in 0..self.ncols {
            if ring.is_zero(&residual[col]) {
                continue;
            }
            let pivot = self.pivots[col].as_ref()?;
            let pv = ring.val(&pivot.a[col]);
            if ring.val(&residual[col]) < pv {
                return None;
            }
            let f = ring.div_pow(&residual[col], pv);
            for (r, y) in residual.iter_mut().zip(&pivot.a) {
                *r = ring.sub(r, &ring.mul(y, &f));
            }
            for (xi, y) in x.iter_mut().zip(&pivot.t) {
                *xi = ring.add(xi, &ring.mul(y, &f));
            }
        }
        residual.iter().all(|r| ring.is_zero(r)).then_some(x)
    }
}

/// Outcome of a batched solve against the same matrix.
pub(crate) struct SolveOutcome {
    /// Per right-hand side: `Some(x)` with `x * rows = b`, or `None`.
    pub solutions: Vec<Option<Vec<BigUint>>>,
    /// Generators of `{x : x * rows = 0}`.
    pub kernel: Vec<Vec<BigUint>>,
}

fn modulus_fits_u64(p: u64, w: u32) -> Option<u128> {
    let mut m: u128 = 1;
    for _ in 0..w {
        m = m.checked_mul(p as u128)?;
        if m > (1u128 << 64) {
            return None;
        }
    }
    Some(m)
}

/// Solve `x * A = b` over Z/p^w for each right-hand side, and return
/// kernel generators of the row-combination map.
pub(crate) fn solve_rows(
    p: u64,
    w: u32,
    rows: &[Vec<BigUint>],
    ncols: usize,
    rhs: &[Vec<BigUint>],
) -> SolveOutcome {
    if let Some(m) = modulus_fits_u64(p, w) {
        let ring = SmallRing { p: p as u128, w, m };
        run_solve(ring, rows, ncols, rhs)
    } else {
        let ring = BigRing {
            p,
            w,
            m: BigUint::from(p).pow(w),
        };
        run_solve(ring, rows, ncols, rhs)
    }
}

fn run_solve<R: Ring>(
    ring: R,
    rows: &[Vec<BigUint>],
    ncols: usize,
    rhs: &[Vec<BigUint>],
) -> SolveOutcome {
    let conv: Vec<Vec<R::El>> = rows
        .iter()
        .map(|r| r.iter().map(|x| ring.from_biguint(x)).collect())
        .collect();
    let nrows = conv.len();
    let ech = Echelon::new(ring, conv, ncols);
    let solutions = rhs
        .iter()
        .map(|b| {
            let bv: Vec<R::El> = b.iter().map(|x| ech.ring.from_biguint(x)).collect();
            ech.solve(&bv).map(|x| {
                let mut out: Vec<BigUint> =
                    x.iter().map(|e| ech.ring.to_biguint(e)).collect();
                out.resize(nrows, BigUint::zero());
                out
            })
        })
        .collect();
    let kernel = ech
        .kernel
        .iter()
        .map(|k| k.iter().map(|e| ech.ring.to_biguint(e)).collect())
        .collect();
    SolveOutcome { solutions, kernel }
}

/// Invariant factors (as p-valuations below w) of the cokernel of the
/// row span of `rows` inside R^ncols, via a valuation-pivoted diagonal
/// form.  Columns never hit by a relation are free.
pub(crate) fn cokernel_invariants(
    p: u64,
    w: u32,
    rows: &[Vec<BigUint>],
    ncols: usize,
) -> (usize, Vec<u32>) {
    if let Some(m) = modulus_fits_u64(p, w) {
        let ring = SmallRing { p: p as u128, w, m };
        run_cokernel(ring, rows, ncols)
    } else {
        let ring = BigRing {
            p,
            w,
            m: BigUint::from(p).pow(w),
        };
        run_cokernel(ring, rows, ncols)
    }
}

fn run_cokernel<R: Ring>(ring: R, rows: &[Vec<BigUint>], ncols: usize) -> (usize, Vec<u32>) {
    let mut mat: Vec<Vec<R::El>> = rows
        .iter()
        .map(|r| r.iter().map(|x| ring.from_biguint(x)).collect())
        .filter(|r: &Vec<R::El>| r.iter().any(|x| !ring.is_zero(x)))
        .collect();
    let w = ring.w();
    let mut diag_vals: Vec<u32> = Vec::new();
    let mut col_alive: Vec<usize> = (0..ncols).collect();
    while !mat.is_empty() && !col_alive.is_empty() {
        // global minimum-valuation pivot keeps every elimination exact
        let mut best: Option<(usize, usize, u32)> = None;
        for (i, row) in mat.iter().enumerate() {
            for (j, _) in col_alive.iter().enumerate() {
                let v = ring.val(&row[j]);
                if v < w && best.map_or(true, |(_, _, bv)| v < bv) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((pi, pj, pv)) = best else { break };
        mat.swap(0, pi);
        for row in &mut mat {
            row.swap(0, pj);
        }
        col_alive.swap(0, pj);
        let inv = ring.unit_part_inv(&mat[0][0]);
        for x in mat[0].iter_mut() {
            *x = ring.mul(x, &inv);
        }
        // clear the pivot column
        for i in 1..mat.len() {
            if ring.is_zero(&mat[i][0]) {
                continue;
            }
            let f = ring.div_pow(&mat[i][0], pv);
            let pivot_row = mat[0].clone();
            for (x, y) in mat[i].iter_mut().zip(&pivot_row) {
                *x = ring.sub(x, &ring.mul(y, &f));
            }
        }
        // the pivot column is clear, so column operations clearing the
        // pivot row touch row 0 only; dropping row and column implements
        // them without changing the cokernel
        diag_vals.push(pv);
        mat.remove(0);
        for row in &mut mat {
            row.remove(0);
        }
        col_alive.remove(0);
        mat.retain(|r| r.iter().any(|x| !ring.is_zero(x)));
    }
    let free = ncols - diag_vals.len();
    let torsion: Vec<u32> = diag_vals.into_iter().filter(|&v| v > 0).collect();
    (free, torsion)
}

/// Smith normal form over the integers; returns the nonzero diagonal
/// entries (made positive, divisibility not enforced between them --
/// callers only need the multiset of p-valuations).
pub(crate) fn smith_diagonal_z(rows: &[Vec<i64>]) -> Vec<BigUint> {
    let mut mat: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .filter(|r: &Vec<BigInt>| r.iter().any(|x| !x.is_zero()))
        .collect();
    let mut diag = Vec::new();
    while !mat.is_empty() && !mat[0].is_empty() {
        let ncols = mat[0].len();
        let mut best: Option<(usize, usize)> = None;
        for (i, row) in mat.iter().enumerate() {
            for j in 0..ncols {
                if row[j].is_zero() {
                    continue;
                }
                if best.map_or(true, |(bi, bj)| mat[i][j].abs() < mat[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        mat.swap(0, pi);
        for row in &mut mat {
            row.swap(0, pj);
        }
        // reduce column and row by the pivot until both are clear
        loop {
            let mut clean = true;
            for i in 1..mat.len() {
                if mat[i][0].is_zero() {
                    continue;
                }
                let q = div_round(&mat[i][0], &mat[0][0]);
                let pivot_row = mat[0].clone();
                for (x, y) in mat[i].iter_mut().zip(&pivot_row) {
                    *x -= &q * y;
                }
                if !mat[i][0].is_zero() {
                    mat.swap(0, i);
                    clean = false;
                }
            }
            for j in 1..ncols {
                if mat[0][j].is_zero() {
                    continue;
                }
                let q = div_round(&mat[0][j], &mat[0][0]);
                for row in mat.iter_mut() {
                    let s = &q * &row[0];
                    row[j] -= s;
                }
                if !mat[0][j].is_zero() {
                    for row in &mut mat {
                        row.swap(0, j);
                    }
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
        diag.push(mat[0][0].abs().to_biguint().expect("non-negative"));
        mat.remove(0);
        for row in &mut mat {
            row.remove(0);
        }
        mat.retain(|r| r.iter().any(|x| !x.is_zero()));
    }
    diag
}

fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    // round-to-nearest keeps the remainders shrinking
    let two = BigInt::from(2);
    let (q, r) = (a / b, a % b);
    if &r.abs() * &two > b.abs() {
        if (r.sign() == b.sign()) || r.is_zero() {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn solve_simple_systems() {
        // over Z/8: rows (2, 4), (0, 4); solve x*A = (2, 0)
        let rows = vec![vec![big(2), big(4)], vec![big(0), big(4)]];
        let out = solve_rows(2, 3, &rows, 2, &[vec![big(2), big(0)], vec![big(1), big(0)]]);
        let x = out.solutions[0].as_ref().expect("solvable");
        // verify x * A = b mod 8
        let b0 = (x[0].clone() * 2u32 + x[1].clone() * 0u32) % 8u32;
        let b1 = (x[0].clone() * 4u32 + x[1].clone() * 4u32) % 8u32;
        assert_eq!((b0, b1), (big(2), big(0)));
        // (1, 0) is not in the span: first coordinates are all even
        assert!(out.solutions[1].is_none());
    }

    /// Brute-force membership oracle over small rings.
    fn brute_membership(modulus: u64, rows: &[Vec<u64>], b: &[u64]) -> bool {
        let n = rows.len();
        let mut coeffs = vec![0u64; n];
        loop {
            let mut acc = vec![0u64; b.len()];
            for (c, row) in coeffs.iter().zip(rows) {
                for (a, x) in acc.iter_mut().zip(row) {
                    *a = (*a + c * x) % modulus;
                }
            }
            if acc == b {
                return true;
            }
            let mut i = 0;
            loop {
                if i == n {
                    return false;
                }
                coeffs[i] += 1;
                if coeffs[i] < modulus {
                    break;
                }
                coeffs[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn solver_agrees_with_brute_force_over_small_rings() {
        for (p, w) in [(2u64, 3u32), (3, 2)] {
            let modulus = p.pow(w);
            let mut rng = ChaCha8Rng::seed_from_u64(p + w as u64);
            for _ in 0..200 {
                let nrows = rng.gen_range(1..=3);
                let ncols = rng.gen_range(1..=3);
                let rows: Vec<Vec<u64>> = (0..nrows)
                    .map(|_| (0..ncols).map(|_| rng.gen_range(0..modulus)).collect())
                    .collect();
                let b: Vec<u64> = (0..ncols).map(|_| rng.gen_range(0..modulus)).collect();
                let rows_big: Vec<Vec<BigUint>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&x| big(x)).collect())
                    .collect();
                let out = solve_rows(p, w, &rows_big, ncols, &[b.iter().map(|&x| big(x)).collect()]);
                let expected = brute_membership(modulus, &rows, &b);
                assert_eq!(
                    out.solutions[0].is_some(),
                    expected,
                    "p={p} w={w} rows={rows:?} b={b:?}"
                );
                if let Some(x) = &out.solutions[0] {
                    let mut acc = vec![BigUint::zero(); ncols];
                    for (c, row) in x.iter().zip(&rows_big) {
                        for (a, y) in acc.iter_mut().zip(row) {
                            *a = (a.clone() + c * y) % big(modulus);
                        }
                    }
                    let bb: Vec<BigUint> = b.iter().map(|&v| big(v)).collect();
                    assert_eq!(acc, bb);
                }
            }
        }
    }

    #[test]
    fn kernel_generates_all_homogeneous_solutions() {
        for (p, w) in [(2u64, 3u32), (3, 2)] {
            let modulus = p.pow(w);
            let mut rng = ChaCha8Rng::seed_from_u64(97 + p);
            for _ in 0..100 {
                let nrows = rng.gen_range(1..=3);
                let ncols = rng.gen_range(1..=2);
                let rows: Vec<Vec<u64>> = (0..nrows)
                    .map(|_| (0..ncols).map(|_| rng.gen_range(0..modulus)).collect())
                    .collect();
                let rows_big: Vec<Vec<BigUint>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&x| big(x)).collect())
                    .collect();
                let out = solve_rows(p, w, &rows_big, ncols, &[]);
                // brute force the kernel, check containment in kernel span
                let mut coeffs = vec![0u64; nrows];
                loop {
                    let mut acc = vec![0u64; ncols];
                    for (c, row) in coeffs.iter().zip(&rows) {
                        for (a, x) in acc.iter_mut().zip(row) {
                            *a = (*a + c * x) % modulus;
                        }
                    }
                    if acc.iter().all(|&x| x == 0) {
                        // coeffs must lie in the span of the reported kernel
                        let target: Vec<u64> = coeffs.clone();
                        let kernel_rows: Vec<Vec<u64>> = out
                            .kernel
                            .iter()
                            .map(|k| {
                                k.iter()
                                    .map(|x| (x % big(modulus)).to_u64_digits().first().copied().unwrap_or(0))
                                    .collect()
                            })
                            .collect();
                        assert!(
                            brute_membership(modulus, &kernel_rows, &target),
                            "kernel span misses {target:?} (p={p}, w={w}, rows={rows:?})"
                        );
                    }
                    let mut i = 0;
                    loop {
                        if i == nrows {
                            break;
                        }
                        coeffs[i] += 1;
                        if coeffs[i] < modulus {
                            break;
                        }
                        coeffs[i] = 0;
                        i += 1;
                    }
                    if coeffs.iter().all(|&c| c == 0) {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn cokernel_invariants_on_known_modules() {
        // R = Z/2^3; relations rows (2, 0), (0, 1): coker = R/2 + R/1 = Z/2
        let rows = vec![vec![big(2), big(0)], vec![big(0), big(1)]];
        let (free, torsion) = cokernel_invariants(2, 3, &rows, 2);
        assert_eq!(free, 0);
        assert_eq!(torsion, vec![1]);

        // no relations: free module
        let (free, torsion) = cokernel_invariants(5, 8, &[], 3);
        assert_eq!((free, torsion), (3, vec![]));
    }



    /// Independent route over the lifted integers: `b` lies in the row
    /// span of `A` over Z/p^w iff appending it to `[A; p^w I]` changes
    /// neither the rank nor the product of the Smith invariants, and the
    /// size of a row module is p^{w n} over that product.
    fn lattice_invariants(p: u64, w: u32, rows: &[Vec<i64>], ncols: usize) -> (usize, BigUint) {
        let mut stacked: Vec<Vec<i64>> = rows.to_vec();
        let pw = (p as i64).pow(w);
        for i in 0..ncols {
            let mut r = vec![0i64; ncols];
            r[i] = pw;
            stacked.push(r);
        }
        let diag = smith_diagonal_z(&stacked);
        let product = diag.iter().fold(BigUint::from(1u32), |acc, d| acc * d);
        (diag.len(), product)
    }

    #[test]
    fn solver_matches_the_integer_lattice_oracle() {
        use num_traits::One;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (p, w) in [(2u64, 6u32), (3, 5), (5, 4)] {
            let modulus = (p as i64).pow(w);
            for _ in 0..50 {
                let nrows = rng.gen_range(2..=8);
                let ncols = rng.gen_range(2..=6);
                let rows: Vec<Vec<i64>> = (0..nrows)
                    .map(|_| (0..ncols).map(|_| rng.gen_range(0..modulus)).collect())
                    .collect();
                let b: Vec<i64> = (0..ncols).map(|_| rng.gen_range(0..modulus)).collect();
                let rows_big: Vec<Vec<BigUint>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&x| BigUint::from(x as u64)).collect())
                    .collect();
                let b_big: Vec<BigUint> = b.iter().map(|&x| BigUint::from(x as u64)).collect();
                let out = solve_rows(p, w, &rows_big, ncols, &[b_big.clone()]);

                // membership decision against the lattice oracle
                let base = lattice_invariants(p, w, &rows, ncols);
                let mut with_b = rows.clone();
                with_b.push(b.clone());
                let extended = lattice_invariants(p, w, &with_b, ncols);
                let member = base == extended;
                assert_eq!(out.solutions[0].is_some(), member, "p={p} rows={rows:?} b={b:?}");
                if let Some(x) = &out.solutions[0] {
                    let m = BigUint::from(p).pow(w);
                    let mut acc = vec![BigUint::zero(); ncols];
                    for (c, row) in x.iter().zip(&rows_big) {
                        for (a, y) in acc.iter_mut().zip(row) {
                            *a = (a.clone() + c * y) % &m;
                        }
                    }
                    let want: Vec<BigUint> = b_big.iter().map(|v| v % &m).collect();
                    assert_eq!(acc, want);
                }

                // kernel: contained in the true kernel and of full size
                let m = BigUint::from(p).pow(w);
                for k in &out.kernel {
                    for (j, _) in (0..ncols).enumerate() {
                        let mut acc = BigUint::zero();
                        for (c, row) in k.iter().zip(&rows_big) {
                            acc = (acc + c * &row[j]) % &m;
                        }
                        assert!(acc.is_zero(), "kernel vector fails");
                    }
                }
                // |span(A)| = p^{w n} / prod(d_i of [A; p^w I])
                let span_size = BigUint::from(p).pow(w * ncols as u32) / &base.1;
                let kernel_size_expected = BigUint::from(p).pow(w * nrows as u32) / span_size;
                let kernel_rows: Vec<Vec<i64>> = out
                    .kernel
                    .iter()
                    .map(|k| {
                        k.iter()
                            .map(|x| {
                                let r = x % &m;
                                r.to_u64_digits().first().copied().unwrap_or(0) as i64
                            })
                            .collect()
                    })
                    .collect();
                let kernel_lattice = lattice_invariants(p, w, &kernel_rows, nrows);
                let kernel_span = BigUint::from(p).pow(w * nrows as u32) / &kernel_lattice.1;
                assert_eq!(
                    kernel_span,
                    kernel_size_expected,
                    "kernel span has the wrong size (p={p}, rows={rows:?})"
                );
                let _ = BigUint::one();
            }
        }
    }

    #[test]
    fn cokernel_leaves_unpivoted_columns_free() {
        // regression: residual entries of a consumed pivot row must not
        // act as extra relations
        let m = 390625u64; // 5^8
        let neg = m - 1;
        let rows_u: Vec<Vec<u64>> = vec![
            vec![0, 0, neg, neg, 0],
            vec![0, 0, 0, 0, neg],
            vec![0, neg, 0, 0, 0],
            vec![neg, 0, 0, 0, 0],
            vec![0, 1, 0, 0, 0],
            vec![1, 0, 0, 0, 0],
        ];
        let rows: Vec<Vec<BigUint>> = rows_u
            .iter()
            .map(|r| r.iter().map(|&x| BigUint::from(x)).collect())
            .collect();
        let (free, torsion) = cokernel_invariants(5, 8, &rows, 5);
        assert_eq!((free, torsion), (1, vec![]));
    }

    #[test]
    fn smith_over_z_matches_hand_values() {
        // diag invariants of [[2, 4], [6, 8]] are 2 and 4 (det = -8)
        let d = smith_diagonal_z(&[vec![2, 4], vec![6, 8]]);
        let mut vals: Vec<BigUint> = d;
        vals.sort();
        assert_eq!(vals, vec![big(2), big(4)]);

        let d = smith_diagonal_z(&[vec![1, 0], vec![0, 1]]);
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|x| x == &big(1)));
    }
}

