//! Z/2-graded complex lines with exact rational-complex scalars.
//!
//! A line is a word of atoms (each an underlying 1-dimensional space or its
//! inverse) and an element is a scalar times the word's chosen generator.
//! Every isomorphism is therefore a scalar, and sign laws can be checked
//! bit-exactly.
//!
//! Generator conventions:
//! - the generator of `L1 ⊗ L2` is `g1 ⊗ g2`;
//! - the generator of `L^{-1}` is the right inverse `(g)_r^{-1}`, so
//!   `g ⊗ (g)_r^{-1} ↦ 1` under `L ⊗ L^{-1} ≅ C`;
//! - `(L1 ⊗ L2)^{-1} = L2^{-1} ⊗ L1^{-1}` and contraction pairs innermost
//!   factors first.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rug::Rational;

use crate::{Error, Result};

// ---------------------------------------------------------------------------
// exact scalars

/// Exact complex number with rational real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QC {
    pub re: Rational,
    pub im: Rational,
}

impl QC {
    pub fn zero() -> Self {
        QC { re: Rational::new(), im: Rational::new() }
    }
    pub fn one() -> Self {
        Self::int(1)
    }
    pub fn int(n: i64) -> Self {
        QC { re: Rational::from(n), im: Rational::new() }
    }
    pub fn real(r: Rational) -> Self {
        QC { re: r, im: Rational::new() }
    }
    pub fn new(re: Rational, im: Rational) -> Self {
        QC { re, im }
    }
    pub fn is_zero(&self) -> bool {
        self.re == 0 && self.im == 0
    }
    pub fn conj(&self) -> Self {
        QC { re: self.re.clone(), im: Rational::from(-&self.im) }
    }
    pub fn norm(&self) -> Rational {
        Rational::from(self.re.square_ref()) + Rational::from(self.im.square_ref())
    }
    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = self.norm();
        Some(QC { re: Rational::from(&self.re / &n), im: Rational::from(-&self.im) / n })
    }
    pub fn signed(self, sign: i32) -> Self {
        if sign < 0 {
            -self
        } else {
            self
        }
    }
}

impl fmt::Display for QC {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im == 0 {
            write!(f, "{}", self.re)
        } else {
            write!(f, "{}{:+}i", self.re, self.im)
        }
    }
}

impl Add for QC {
    type Output = QC;
    fn add(self, o: QC) -> QC {
        QC { re: self.re + o.re, im: self.im + o.im }
    }
}
impl Sub for QC {
    type Output = QC;
    fn sub(self, o: QC) -> QC {
        QC { re: self.re - o.re, im: self.im - o.im }
    }
}
impl Mul for QC {
    type Output = QC;
    fn mul(self, o: QC) -> QC {
        let re = Rational::from(&self.re * &o.re) - Rational::from(&self.im * &o.im);
        let im = Rational::from(&self.re * &o.im) + Rational::from(&self.im * &o.re);
        QC { re, im }
    }
}
impl<'a> Mul<&'a QC> for &'a QC {
    type Output = QC;
    fn mul(self, o: &QC) -> QC {
        self.clone() * o.clone()
    }
}
impl Neg for QC {
    type Output = QC;
    fn neg(self) -> QC {
        QC { re: -self.re, im: -self.im }
    }
}

// ---------------------------------------------------------------------------
// sign semantics

/// How sign rules are applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SignMode {
    /// Koszul signs of the graded category.
    #[default]
    Graded,
    /// Ordinary lines: all signs dropped, results meaningful only up to ±1.
    Ordinary,
    /// Deliberately wrong swap rule, used to check that the self-test notices.
    FlippedSwap,
}

impl SignMode {
    /// Sign picked up by `l1 ⊗ l2 ↦ l2 ⊗ l1`.
    pub fn swap_sign(self, e1: u8, e2: u8) -> i32 {
        match self {
            SignMode::Graded => {
                if e1 & e2 & 1 == 1 {
                    -1
                } else {
                    1
                }
            }
            SignMode::Ordinary => 1,
            SignMode::FlippedSwap => {
                if e1 & e2 & 1 == 1 {
                    1
                } else {
                    -1
                }
            }
        }
    }

    /// (-1)^e, or +1 in ordinary mode.
    pub fn parity_sign(self, e: u8) -> i32 {
        match self {
            SignMode::Ordinary => 1,
            _ => {
                if e & 1 == 1 {
                    -1
                } else {
                    1
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// lines and elements

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub label: String,
    pub parity: u8,
    pub inverse: bool,
}

impl Atom {
    pub fn flipped(&self) -> Atom {
        Atom { label: self.label.clone(), parity: self.parity, inverse: !self.inverse }
    }
}

/// A graded line given as an ordered tensor word of atoms. The empty word is
/// the even trivial line.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct GradedLine {
    pub factors: Vec<Atom>,
}

impl GradedLine {
    pub fn trivial() -> Self {
        GradedLine { factors: vec![] }
    }

    pub fn atom(label: impl Into<String>, parity: u8) -> Self {
        GradedLine { factors: vec![Atom { label: label.into(), parity: parity & 1, inverse: false }] }
    }

    pub fn parity(&self) -> u8 {
        self.factors.iter().fold(0u8, |a, f| a ^ (f.parity & 1))
    }

    pub fn tensor(&self, other: &GradedLine) -> GradedLine {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        GradedLine { factors }
    }

    pub fn inverse(&self) -> GradedLine {
        GradedLine { factors: self.factors.iter().rev().map(Atom::flipped).collect() }
    }

    pub fn is_trivial(&self) -> bool {
        self.factors.is_empty()
    }
}

/// Value of `gen(L) ⊗ gen(L^{-1})` under contraction, innermost first:
/// a plain atom pairs with its inverse to 1, an inverted atom with the
/// original to (-1)^parity (the left/right inverse relation).
fn pairing_sign(line: &GradedLine, mode: SignMode) -> i32 {
    line.factors.iter().filter(|a| a.inverse).fold(1, |s, a| s * mode.parity_sign(a.parity))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradedElement {
    pub line: GradedLine,
    pub scalar: QC,
}

impl GradedElement {
    pub fn new(line: GradedLine, scalar: QC) -> Self {
        GradedElement { line, scalar }
    }

    pub fn unit() -> Self {
        GradedElement { line: GradedLine::trivial(), scalar: QC::one() }
    }

    pub fn is_zero(&self) -> bool {
        self.scalar.is_zero()
    }
}

/// `a ⊗ b ∈ L1 ⊗ L2`.
pub fn tensor(a: &GradedElement, b: &GradedElement) -> GradedElement {
    GradedElement { line: a.line.tensor(&b.line), scalar: &a.scalar * &b.scalar }
}

/// Image of `a ⊗ b` in `L2 ⊗ L1` under the symmetry isomorphism.
pub fn swap(mode: SignMode, a: &GradedElement, b: &GradedElement) -> GradedElement {
    let s = mode.swap_sign(a.line.parity(), b.line.parity());
    GradedElement { line: b.line.tensor(&a.line), scalar: (&a.scalar * &b.scalar).signed(s) }
}

/// Koszul sign of reordering the atoms of a word by `perm` (new position k
/// holds old factor `perm[k]`).
pub fn permutation_sign(mode: SignMode, line: &GradedLine, perm: &[usize]) -> i32 {
    assert_eq!(perm.len(), line.factors.len());
    let mut sign = 1;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                let (a, b) = (&line.factors[perm[i]], &line.factors[perm[j]]);
                sign *= mode.swap_sign(a.parity, b.parity);
            }
        }
    }
    sign
}

/// Move an element to the reordered line.
pub fn permute(mode: SignMode, x: &GradedElement, perm: &[usize]) -> GradedElement {
    let s = permutation_sign(mode, &x.line, perm);
    let factors = perm.iter().map(|&k| x.line.factors[k].clone()).collect();
    GradedElement { line: GradedLine { factors }, scalar: x.scalar.clone().signed(s) }
}

/// `(s)_r^{-1}`: the unique element with `s ⊗ (s)_r^{-1} ↦ 1`.
pub fn right_inverse(mode: SignMode, s: &GradedElement) -> Result<GradedElement> {
    let inv = s.scalar.inv().ok_or_else(|| Error::Domain("inverse of the zero element".into()))?;
    Ok(GradedElement { line: s.line.inverse(), scalar: inv.signed(pairing_sign(&s.line, mode)) })
}

/// `(s)_l^{-1} = (-1)^{ε(L)} (s)_r^{-1}`, so that `(s)_l^{-1} ⊗ s ↦ 1`.
pub fn left_inverse(mode: SignMode, s: &GradedElement) -> Result<GradedElement> {
    let r = right_inverse(mode, s)?;
    Ok(GradedElement { scalar: r.scalar.signed(mode.parity_sign(s.line.parity())), line: r.line })
}

/// Contract `x ⊗ y ∈ L ⊗ L^{-1}` to the trivial line.
pub fn contract(mode: SignMode, x: &GradedElement, y: &GradedElement) -> Result<QC> {
    if y.line != x.line.inverse() {
        return Err(Error::Domain("contraction of non-inverse lines".into()));
    }
    Ok((&x.scalar * &y.scalar).signed(pairing_sign(&x.line, mode)))
}

/// Contract `y ⊗ x ∈ L^{-1} ⊗ L` by first swapping to `x ⊗ y`.
pub fn contract_left(mode: SignMode, y: &GradedElement, x: &GradedElement) -> Result<QC> {
    let s = mode.swap_sign(y.line.parity(), x.line.parity());
    Ok(contract(mode, x, y)?.signed(s))
}

// ---------------------------------------------------------------------------
// exact rational matrices

/// Dense rational matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Rational>,
}

impl QMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMat { rows, cols, data: vec![Rational::new(); rows * cols] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rational::from(1);
        }
        m
    }
    pub fn from_i64(rows: usize, cols: usize, v: &[i64]) -> Self {
        assert_eq!(v.len(), rows * cols);
        QMat { rows, cols, data: v.iter().map(|&x| Rational::from(x)).collect() }
    }
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }
    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Rational {
        &mut self.data[i * self.cols + j]
    }
    pub fn mul(&self, o: &QMat) -> QMat {
        assert_eq!(self.cols, o.rows);
        let mut out = QMat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.at(i, k) == &0 {
                    continue;
                }
                for j in 0..o.cols {
                    let t = Rational::from(self.at(i, k) * o.at(k, j));
                    *out.at_mut(i, j) += t;
                }
            }
        }
        out
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0)
    }
    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }
    pub fn from_columns(rows: usize, cols: &[Vec<Rational>]) -> QMat {
        let mut m = QMat::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for (i, v) in c.iter().enumerate() {
                *m.at_mut(i, j) = v.clone();
            }
        }
        m
    }
    pub fn apply(&self, v: &[Rational]) -> Vec<Rational> {
        (0..self.rows)
            .map(|i| {
                let mut s = Rational::new();
                for (j, vj) in v.iter().enumerate() {
                    s += Rational::from(self.at(i, j) * vj);
                }
                s
            })
            .collect()
    }

    /// Row echelon form; returns (rank, pivot columns, determinant sign/scale
    /// record for square input).
    fn echelon(&self) -> (QMat, Vec<usize>, Rational) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut det = Rational::from(1);
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| m.at(i, c) != &0) else {
                det = Rational::new();
                continue;
            };
            if p != r {
                for j in 0..m.cols {
                    m.data.swap(p * m.cols + j, r * m.cols + j);
                }
                det = -det;
            }
            let piv = m.at(r, c).clone();
            det *= &piv;
            for i in 0..m.rows {
                if i != r && m.at(i, c) != &0 {
                    let f = Rational::from(m.at(i, c) / &piv);
                    for j in c..m.cols {
                        let t = Rational::from(&f * m.at(r, j));
                        *m.at_mut(i, j) -= t;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots, det)
    }

    pub fn rank(&self) -> usize {
        self.echelon().1.len()
    }

    pub fn det(&self) -> Rational {
        assert_eq!(self.rows, self.cols);
        if self.rows == 0 {
            return Rational::from(1);
        }
        let (_, piv, det) = self.echelon();
        if piv.len() < self.rows {
            Rational::new()
        } else {
            det
        }
    }

    pub fn inverse(&self) -> Option<QMat> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        if n == 0 {
            return Some(QMat::zeros(0, 0));
        }
        let mut aug = QMat::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                *aug.at_mut(i, j) = self.at(i, j).clone();
            }
            *aug.at_mut(i, n + i) = Rational::from(1);
        }
        let (e, piv, _) = aug.echelon();
        if piv.len() < n || piv[n - 1] >= n {
            return None;
        }
        let mut inv = QMat::zeros(n, n);
        for i in 0..n {
            let d = e.at(i, i).clone();
            for j in 0..n {
                *inv.at_mut(i, j) = Rational::from(e.at(i, n + j) / &d);
            }
        }
        Some(inv)
    }

    /// One solution of `A x = b`, if any.
    pub fn solve(&self, b: &[Rational]) -> Option<Vec<Rational>> {
        let mut aug = QMat::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *aug.at_mut(i, j) = self.at(i, j).clone();
            }
            *aug.at_mut(i, self.cols) = b[i].clone();
        }
        let (e, piv, _) = aug.echelon();
        if piv.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![Rational::new(); self.cols];
        for (r, &c) in piv.iter().enumerate() {
            x[c] = Rational::from(e.at(r, self.cols) / e.at(r, c));
        }
        Some(x)
    }
}

// ---------------------------------------------------------------------------
// complexes

/// Bounded cochain complex of finite-dimensional rational vector spaces with
/// chosen (standard) bases. `diff[k]` is δ from degree `lo + k` to `lo + k + 1`.
#[derive(Clone, Debug)]
pub struct GradedComplex {
    pub name: String,
    pub lo: i32,
    pub dims: Vec<usize>,
    pub diff: Vec<QMat>,
}

impl GradedComplex {
    pub fn new(name: impl Into<String>, lo: i32, dims: Vec<usize>, diff: Vec<QMat>) -> Result<Self> {
        let c = GradedComplex { name: name.into(), lo, dims, diff };
        c.check()?;
        Ok(c)
    }

    /// Complex with zero differentials.
    pub fn with_zero_diff(name: impl Into<String>, lo: i32, dims: Vec<usize>) -> Self {
        let diff = (0..dims.len().saturating_sub(1)).map(|k| QMat::zeros(dims[k + 1], dims[k])).collect();
        GradedComplex { name: name.into(), lo, dims, diff }
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.dims.len() as i32 - 1
    }

    fn check(&self) -> Result<()> {
        if self.diff.len() + 1 != self.dims.len().max(1) {
            return Err(Error::Domain("differential count does not match degrees".into()));
        }
        for (k, d) in self.diff.iter().enumerate() {
            if d.rows != self.dims[k + 1] || d.cols != self.dims[k] {
                return Err(Error::Domain(format!("differential {k} has wrong shape")));
            }
        }
        for k in 1..self.diff.len() {
            if !self.diff[k].mul(&self.diff[k - 1]).is_zero() {
                return Err(Error::Domain(format!("δ∘δ ≠ 0 at degree {}", self.lo + k as i32)));
            }
        }
        Ok(())
    }

    /// Rank of δ leaving degree index k (0 outside the range).
    pub fn rank_out(&self, k: isize) -> usize {
        if k < 0 || k as usize >= self.diff.len() {
            0
        } else {
            self.diff[k as usize].rank()
        }
    }

    pub fn is_acyclic(&self) -> bool {
        (0..self.dims.len()).all(|k| self.rank_out(k as isize - 1) + self.rank_out(k as isize) == self.dims[k])
    }

    /// Euler characteristic Σ (-1)^i dim E^i.
    pub fn euler_characteristic(&self) -> i64 {
        self.dims.iter().enumerate().map(|(k, &d)| if (self.lo + k as i32).rem_euclid(2) == 0 { d as i64 } else { -(d as i64) }).sum()
    }

    fn degree_atom(&self, k: usize) -> Atom {
        let i = self.lo + k as i32;
        Atom { label: format!("det {}^{}", self.name, i), parity: (self.dims[k] % 2) as u8, inverse: i.rem_euclid(2) == 1 }
    }
}

/// `det(E) = ⊗_i det(E^i)^{(-1)^i}`, tensored in increasing degree.
pub fn det_complex(c: &GradedComplex) -> GradedLine {
    GradedLine { factors: (0..c.dims.len()).map(|k| c.degree_atom(k)).collect() }
}

/// Per-degree complements: `lifts[k]` is a list of vectors in degree `lo+k`
/// spanning a complement of the image of δ.
pub type Lifts = Vec<Vec<Vec<Rational>>>;

/// Canonical element `τ = ⊗_i (δe^{i-1} ∧ e^i)^{(-1)^i}` of an acyclic
/// complex. The wedge of inverse lines is defined by
/// `(x)_r^{-1} ∧ (y)_l^{-1} = (x ∧ y)_r^{-1}`, so an odd-degree factor is
/// `(δe^{i-1} ∧ e^i)_r^{-1}` with scalar `1/det` on the right-inverse generator.
pub fn torsion_element(c: &GradedComplex, lifts: &Lifts) -> Result<GradedElement> {
    if !c.is_acyclic() {
        return Err(Error::Domain("torsion element of a non-acyclic complex".into()));
    }
    if lifts.len() != c.dims.len() {
        return Err(Error::Domain("one lift family per degree required".into()));
    }
    let mut scalar = QC::one();
    for k in 0..c.dims.len() {
        let dim = c.dims[k];
        let mut cols: Vec<Vec<Rational>> = Vec::with_capacity(dim);
        if k > 0 {
            for v in &lifts[k - 1] {
                cols.push(c.diff[k - 1].apply(v));
            }
        }
        for v in &lifts[k] {
            if v.len() != dim {
                return Err(Error::Domain(format!("lift in degree {} has wrong length", c.lo + k as i32)));
            }
            cols.push(v.clone());
        }
        if cols.len() != dim {
            return Err(Error::Domain(format!("degenerate lifts in degree {}", c.lo + k as i32)));
        }
        let det = QMat::from_columns(dim, &cols).det();
        if det == 0 {
            return Err(Error::Domain(format!("degenerate lifts in degree {}", c.lo + k as i32)));
        }
        let i = c.lo + k as i32;
        if i.rem_euclid(2) == 0 {
            scalar = scalar * QC::real(det);
        } else {
            scalar = scalar * QC::real(Rational::from(1) / det);
        }
    }
    Ok(GradedElement { line: det_complex(c), scalar })
}

/// Standard lifts: greedily extend the image of δ to a basis with unit vectors.
pub fn standard_lifts(c: &GradedComplex) -> Lifts {
    let mut lifts: Lifts = Vec::with_capacity(c.dims.len());
    for k in 0..c.dims.len() {
        let dim = c.dims[k];
        let mut cols: Vec<Vec<Rational>> = Vec::new();
        if k > 0 {
            for v in &lifts[k - 1] {
                cols.push(c.diff[k - 1].apply(v));
            }
        }
        let mut chosen = Vec::new();
        for e in 0..dim {
            let mut unit = vec![Rational::new(); dim];
            unit[e] = Rational::from(1);
            let mut trial = cols.clone();
            trial.push(unit.clone());
            if QMat::from_columns(dim, &trial).rank() == trial.len() {
                cols = trial;
                chosen.push(unit);
            }
        }
        lifts.push(chosen);
    }
    lifts
}

// ---------------------------------------------------------------------------
// short exact sequences

/// `0 → A --f--> B --g--> C → 0`, degreewise, with chain maps given per
/// degree of the common range `lo..=hi`.
#[derive(Clone, Debug)]
pub struct ShortExact {
    pub a: GradedComplex,
    pub b: GradedComplex,
    pub c: GradedComplex,
    pub f: Vec<QMat>,
    pub g: Vec<QMat>,
}

impl ShortExact {
    pub fn new(a: GradedComplex, b: GradedComplex, c: GradedComplex, f: Vec<QMat>, g: Vec<QMat>) -> Result<Self> {
        let n = b.dims.len();
        if a.lo != b.lo || c.lo != b.lo || a.dims.len() != n || c.dims.len() != n || f.len() != n || g.len() != n {
            return Err(Error::Domain("complexes must share the degree range".into()));
        }
        for k in 0..n {
            let (fk, gk) = (&f[k], &g[k]);
            if fk.rows != b.dims[k] || fk.cols != a.dims[k] || gk.rows != c.dims[k] || gk.cols != b.dims[k] {
                return Err(Error::Domain(format!("map shapes wrong in degree {}", b.lo + k as i32)));
            }
            if !gk.mul(fk).is_zero() {
                return Err(Error::Domain("g∘f ≠ 0".into()));
            }
            if fk.rank() != a.dims[k] || gk.rank() != c.dims[k] || a.dims[k] + c.dims[k] != b.dims[k] {
                return Err(Error::Domain(format!("row not exact in degree {}", b.lo + k as i32)));
            }
        }
        for k in 0..n.saturating_sub(1) {
            if b.diff[k].mul(&f[k]) != f[k + 1].mul(&a.diff[k]) || g[k + 1].mul(&b.diff[k]) != c.diff[k].mul(&g[k]) {
                return Err(Error::Domain("maps are not chain maps".into()));
            }
        }
        Ok(ShortExact { a, b, c, f, g })
    }
}

/// Scalar of the canonical isomorphism `det(A) ⊗ det(C) → det(B)` relative
/// to the chosen generators: the factors of `det A ⊗ det C` are regrouped
/// degree by degree (Koszul sign), then `a ⊗ c ↦ f(a) ∧ c̃` in even degree
/// and, in odd degree, the inverse-transpose of the wedge composed with the
/// symmetry, `(a)_r^{-1} ⊗ (c)_r^{-1} ↦ (-1)^{ε(A^i)ε(C^i)} (f(a) ∧ c̃)_r^{-1}`,
/// which keeps the construction associative along filtrations.
///
/// A final sign `(-1)^{Σ r_A^i r_C^{i'}}`, with `r^i` the rank of δ leaving
/// degree i and `i' = i+1` for even i, `i-1` for odd i, makes the map send
/// `τ_A ⊗ τ_C` to `τ_B` for acyclic rows.
pub fn connecting_iso(mode: SignMode, ses: &ShortExact) -> Result<QC> {
    let n = ses.b.dims.len();
    // source word A_lo..A_hi, C_lo..C_hi regrouped as (A_i, C_i) per degree
    let src = det_complex(&ses.a).tensor(&det_complex(&ses.c));
    let mut perm = Vec::with_capacity(2 * n);
    for k in 0..n {
        perm.push(k);
        perm.push(n + k);
    }
    let mut scalar = QC::int(permutation_sign(mode, &src, &perm) as i64);
    let rank_parity: usize = (0..n as isize)
        .map(|k| {
            let i = ses.b.lo as isize + k;
            let partner = if i.rem_euclid(2) == 0 { k + 1 } else { k - 1 };
            ses.a.rank_out(k) * ses.c.rank_out(partner)
        })
        .sum();
    scalar = scalar.signed(mode.parity_sign((rank_parity % 2) as u8));
    for k in 0..n {
        let dim_b = ses.b.dims[k];
        let mut cols: Vec<Vec<Rational>> = (0..ses.a.dims[k]).map(|j| ses.f[k].column(j)).collect();
        for j in 0..ses.c.dims[k] {
            let mut unit = vec![Rational::new(); ses.c.dims[k]];
            unit[j] = Rational::from(1);
            let lift = ses.g[k].solve(&unit).ok_or_else(|| Error::Domain("g not surjective".into()))?;
            cols.push(lift);
        }
        let det = QMat::from_columns(dim_b, &cols).det();
        if det == 0 {
            return Err(Error::Domain("sequence not exact".into()));
        }
        let i = ses.b.lo + k as i32;
        scalar = if i.rem_euclid(2) == 0 {
            scalar * QC::real(det)
        } else {
            let s = mode.parity_sign(((ses.a.dims[k] * ses.c.dims[k]) % 2) as u8);
            scalar * QC::real(Rational::from(1) / det).signed(s)
        };
    }
    Ok(scalar)
}

/// Iterate the degree-zero model sequence `0 → H^0(L^{i-1}) → H^0(L^i) → L^i|_D → 0`
/// on CP^1 in the monomial basis `w^0..w^i`, multiplying by the section
/// vanishing at infinity and evaluating at infinity in the frame `y^i`.
/// Returns the coefficient of `σ_p^0(1 ⊗ e_1 ⊗ … ⊗ e_p)` relative to the
/// monomial wedge `1 ∧ w ∧ … ∧ w^p`.
pub fn monomial_tower_coefficient(mode: SignMode, p: usize) -> Result<QC> {
    let mut coef = QC::one();
    for i in 1..=p {
        let a = GradedComplex::with_zero_diff(format!("H0(L^{})", i - 1), 0, vec![i]);
        let b = GradedComplex::with_zero_diff(format!("H0(L^{i})"), 0, vec![i + 1]);
        let c = GradedComplex::with_zero_diff(format!("L^{i}|D"), 0, vec![1]);
        let mut f = QMat::zeros(i + 1, i);
        for j in 0..i {
            *f.at_mut(j, j) = Rational::from(1);
        }
        let mut g = QMat::zeros(1, i + 1);
        *g.at_mut(0, i) = Rational::from(1);
        let ses = ShortExact::new(a, b, c, vec![f], vec![g])?;
        coef = coef * connecting_iso(mode, &ses)?;
    }
    Ok(coef)
}

// ---------------------------------------------------------------------------
// random complexes for property checks

/// Deterministic generator of random acyclic complexes and short exact
/// sequences, shared by the property tests and the CLI self-test.
pub mod random {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub struct Gen {
        rng: ChaCha8Rng,
    }

    impl Gen {
        pub fn new(seed: u64) -> Self {
            Gen { rng: ChaCha8Rng::seed_from_u64(seed) }
        }

        pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
            self.rng.random_range(lo..=hi)
        }

        pub fn usize(&mut self, lo: usize, hi: usize) -> usize {
            self.rng.random_range(lo..=hi)
        }

        /// Random invertible integer matrix (unit lower × unit upper × diag).
        pub fn invertible(&mut self, n: usize) -> QMat {
            let mut l = QMat::identity(n);
            let mut u = QMat::identity(n);
            for i in 0..n {
                for j in 0..i {
                    *l.at_mut(i, j) = Rational::from(self.int(-2, 2));
                    *u.at_mut(j, i) = Rational::from(self.int(-2, 2));
                }
                let d = loop {
                    let d = self.int(-3, 3);
                    if d != 0 {
                        break d;
                    }
                };
                *u.at_mut(i, i) = Rational::from(d);
            }
            l.mul(&u)
        }

        /// Random acyclic complex with degrees inside [-2, 3] and dims ≤ 5.
        pub fn acyclic(&mut self, name: &str) -> GradedComplex {
            loop {
                let lo = self.int(-2, 3) as i32;
                let hi = self.int(lo as i64, 3) as i32;
                let len = (hi - lo + 1) as usize;
                // r[k]: rank of δ out of degree index k; last one is 0
                let mut r = vec![0usize; len];
                let mut dims = vec![0usize; len];
                let mut ok = true;
                for k in 0..len {
                    let prev = if k == 0 { 0 } else { r[k - 1] };
                    r[k] = if k + 1 == len { 0 } else { self.usize(0, 5 - prev.min(5)) };
                    dims[k] = prev + r[k];
                    if dims[k] > 5 {
                        ok = false;
                    }
                }
                if !ok {
                    continue;
                }
                let bases: Vec<QMat> = dims.iter().map(|&d| self.invertible(d)).collect();
                let inverses: Vec<QMat> = bases.iter().map(|m| m.inverse().expect("invertible")).collect();
                let mut diff = Vec::new();
                for k in 0..len - 1 {
                    // block form: degree k = K_k (first r[k-1]) ⊕ C_k (last r[k]);
                    // δ sends C_k identically onto K_{k+1}
                    let prev = if k == 0 { 0 } else { r[k - 1] };
                    let mut j = QMat::zeros(dims[k + 1], dims[k]);
                    for t in 0..r[k] {
                        *j.at_mut(t, prev + t) = Rational::from(1);
                    }
                    diff.push(bases[k + 1].mul(&j).mul(&inverses[k]));
                }
                return GradedComplex::new(name, lo, dims, diff).expect("constructed complex is valid");
            }
        }

        /// Random acyclic complex on a prescribed degree range.
        pub fn acyclic_on(&mut self, name: &str, lo: i32, len: usize) -> GradedComplex {
            loop {
                let c = self.acyclic(name);
                if c.dims.len() <= len {
                    // pad with zero spaces on both sides, then shift into place
                    let shift = self.usize(0, len - c.dims.len());
                    let mut dims = vec![0usize; len];
                    dims[shift..shift + c.dims.len()].copy_from_slice(&c.dims);
                    let mut diff = Vec::new();
                    for k in 0..len.saturating_sub(1) {
                        if k >= shift && k + 1 < shift + c.dims.len() {
                            diff.push(c.diff[k - shift].clone());
                        } else {
                            diff.push(QMat::zeros(dims[k + 1], dims[k]));
                        }
                    }
                    return GradedComplex::new(name, lo, dims, diff).expect("padded complex is valid");
                }
            }
        }

        /// Random valid lift family: standard lifts mixed by random invertible
        /// matrices and shifted by random image vectors.
        pub fn lifts(&mut self, c: &GradedComplex) -> Lifts {
            let base = standard_lifts(c);
            let mut out: Lifts = Vec::new();
            for (k, fam) in base.iter().enumerate() {
                let n = fam.len();
                let mix = self.invertible(n);
                let mut new_fam = Vec::new();
                for col in 0..n {
                    let mut v = vec![Rational::new(); c.dims[k]];
                    for (row, w) in fam.iter().enumerate() {
                        let m = mix.at(row, col);
                        for (vi, wi) in v.iter_mut().zip(w) {
                            *vi += Rational::from(m * wi);
                        }
                    }
                    if k > 0 && !out[k - 1].is_empty() {
                        for prev in &out[k - 1] {
                            let img = c.diff[k - 1].apply(prev);
                            let t = Rational::from(self.int(-2, 2));
                            for (vi, wi) in v.iter_mut().zip(&img) {
                                *vi += Rational::from(&t * wi);
                            }
                        }
                    }
                    new_fam.push(v);
                }
                out.push(new_fam);
            }
            out
        }

        fn random_mat(&mut self, rows: usize, cols: usize) -> QMat {
            let mut m = QMat::zeros(rows, cols);
            for x in m.data.iter_mut() {
                *x = Rational::from(self.int(-2, 2));
            }
            m
        }

        /// Random complex on a fixed degree range: an acyclic piece plus a
        /// zero-differential piece, then scrambled by a basis change.
        pub fn complex_on(&mut self, name: &str, lo: i32, len: usize) -> GradedComplex {
            let acyc = loop {
                let c = self.acyclic_on(name, lo, len);
                if c.dims.iter().all(|&d| d <= 3) {
                    break c;
                }
            };
            let extra: Vec<usize> = (0..len).map(|_| self.usize(0, 2)).collect();
            let dims: Vec<usize> = (0..len).map(|k| acyc.dims[k] + extra[k]).collect();
            let mut diff = Vec::new();
            for k in 0..len.saturating_sub(1) {
                let mut d = QMat::zeros(dims[k + 1], dims[k]);
                for i in 0..acyc.dims[k + 1] {
                    for j in 0..acyc.dims[k] {
                        *d.at_mut(i, j) = acyc.diff[k].at(i, j).clone();
                    }
                }
                diff.push(d);
            }
            let c = GradedComplex { name: name.into(), lo, dims: dims.clone(), diff };
            let bases: Vec<QMat> = dims.iter().map(|&d| self.invertible(d)).collect();
            let inverses: Vec<QMat> = bases.iter().map(|m| m.inverse().unwrap()).collect();
            let diff = c.diff.iter().enumerate().map(|(k, d)| bases[k + 1].mul(d).mul(&inverses[k])).collect();
            GradedComplex { name: name.into(), lo, dims, diff }
        }

        /// Extension `0 → A → B → C → 0` with `B = A ⊕ C` and differential
        /// `[[δ_A, δ_A h − h δ_C], [0, δ_C]]`, then a random basis change on B.
        pub fn extension(&mut self, a: &GradedComplex, c: &GradedComplex, name: &str) -> ShortExact {
            let n = a.dims.len();
            let hs: Vec<QMat> = (0..n).map(|k| self.random_mat(a.dims[k], c.dims[k])).collect();
            let dims_b: Vec<usize> = (0..n).map(|k| a.dims[k] + c.dims[k]).collect();
            let mut diff_b = Vec::new();
            for k in 0..n.saturating_sub(1) {
                let mut d = QMat::zeros(dims_b[k + 1], dims_b[k]);
                let twist = sub(&a.diff[k].mul(&hs[k]), &hs[k + 1].mul(&c.diff[k]));
                for i in 0..a.dims[k + 1] {
                    for j in 0..a.dims[k] {
                        *d.at_mut(i, j) = a.diff[k].at(i, j).clone();
                    }
                    for j in 0..c.dims[k] {
                        *d.at_mut(i, a.dims[k] + j) = twist.at(i, j).clone();
                    }
                }
                for i in 0..c.dims[k + 1] {
                    for j in 0..c.dims[k] {
                        *d.at_mut(a.dims[k + 1] + i, a.dims[k] + j) = c.diff[k].at(i, j).clone();
                    }
                }
                diff_b.push(d);
            }
            let bases: Vec<QMat> = dims_b.iter().map(|&d| self.invertible(d)).collect();
            let inverses: Vec<QMat> = bases.iter().map(|m| m.inverse().unwrap()).collect();
            let diff_b: Vec<QMat> = diff_b.iter().enumerate().map(|(k, d)| bases[k + 1].mul(d).mul(&inverses[k])).collect();
            let mut f = Vec::new();
            let mut g = Vec::new();
            for k in 0..n {
                let mut inc = QMat::zeros(dims_b[k], a.dims[k]);
                for j in 0..a.dims[k] {
                    *inc.at_mut(j, j) = Rational::from(1);
                }
                let mut proj = QMat::zeros(c.dims[k], dims_b[k]);
                for j in 0..c.dims[k] {
                    *proj.at_mut(j, a.dims[k] + j) = Rational::from(1);
                }
                f.push(bases[k].mul(&inc));
                g.push(proj.mul(&inverses[k]));
            }
            let b = GradedComplex { name: name.into(), lo: a.lo, dims: dims_b, diff: diff_b };
            ShortExact::new(a.clone(), b, c.clone(), f, g).expect("extension is exact")
        }
    }

    fn sub(x: &QMat, y: &QMat) -> QMat {
        let mut out = x.clone();
        for (o, v) in out.data.iter_mut().zip(&y.data) {
            *o -= v;
        }
        out
    }
}

/// Three-step filtration `A ⊂ B ⊂ C` realised by two extensions; returns the
/// iso scalars composed both ways: `σ_BC ∘ (σ_AB ⊗ 1)` and `σ_AC ∘ (1 ⊗ σ')`.
pub fn filtration_compositions(mode: SignMode, gen: &mut random::Gen) -> Result<(QC, QC)> {
    let len = gen.usize(1, 4);
    let lo = gen.int(-2, 3 - len as i64 + 1) as i32;
    let x = gen.complex_on("X", lo, len);
    let y = gen.complex_on("Y", lo, len);
    let z = gen.complex_on("Z", lo, len);
    // B = X ⊕ Y (extension), C = B ⊕ Z (extension); quotients C/A ≅ Y ⊕ Z.
    let ab = gen.extension(&x, &y, "B");
    let bc = gen.extension(&ab.b, &z, "C");
    let sigma_ab = connecting_iso(mode, &ab)?;
    let sigma_bc = connecting_iso(mode, &bc)?;
    // Route 1: (X ⊗ Y ⊗ Z) → (B ⊗ Z) → C.
    let route1 = sigma_ab.clone() * sigma_bc.clone();
    // Route 2 needs A = X ⊂ C with quotient Q = C/X, and Y ⊂ Q → Z.
    let n = x.dims.len();
    let mut f_ac = Vec::new();
    for k in 0..n {
        f_ac.push(bc.f[k].mul(&ab.f[k]));
    }
    // Q = C/X: choose complement coordinates via a basis of C extending f_ac.
    let mut q_dims = Vec::new();
    let mut proj = Vec::new();
    let mut sect = Vec::new();
    for k in 0..n {
        let dc = bc.b.dims[k];
        let dx = x.dims[k];
        let mut cols: Vec<Vec<Rational>> = (0..dx).map(|j| f_ac[k].column(j)).collect();
        // extend by images of lifts of Y through B, then lifts of Z through C
        for j in 0..y.dims[k] {
            let mut unit = vec![Rational::new(); y.dims[k]];
            unit[j] = Rational::from(1);
            let lb = ab.g[k].solve(&unit).unwrap();
            cols.push(bc.f[k].apply(&lb));
        }
        for j in 0..z.dims[k] {
            let mut unit = vec![Rational::new(); z.dims[k]];
            unit[j] = Rational::from(1);
            cols.push(bc.g[k].solve(&unit).unwrap());
        }
        let basis = QMat::from_columns(dc, &cols);
        let inv = basis.inverse().ok_or_else(|| Error::Numerical("filtration basis singular".into()))?;
        let qd = dc - dx;
        let mut pr = QMat::zeros(qd, dc);
        for i in 0..qd {
            for j in 0..dc {
                *pr.at_mut(i, j) = inv.at(dx + i, j).clone();
            }
        }
        let mut se = QMat::zeros(dc, qd);
        for i in 0..dc {
            for j in 0..qd {
                *se.at_mut(i, j) = basis.at(i, dx + j).clone();
            }
        }
        q_dims.push(qd);
        proj.push(pr);
        sect.push(se);
    }
    let mut q_diff = Vec::new();
    for k in 0..n.saturating_sub(1) {
        q_diff.push(proj[k + 1].mul(&bc.b.diff[k]).mul(&sect[k]));
    }
    let q = GradedComplex::new("C/X", lo, q_dims, q_diff)?;
    let ses_ac = ShortExact::new(x.clone(), bc.b.clone(), q.clone(), f_ac, proj.clone())?;
    // Y → Q induced by B → C → Q; Q → Z induced by g_BC.
    let mut f_yq = Vec::new();
    let mut g_qz = Vec::new();
    for k in 0..n {
        let mut m = QMat::zeros(q.dims[k], y.dims[k]);
        for j in 0..y.dims[k] {
            let mut unit = vec![Rational::new(); y.dims[k]];
            unit[j] = Rational::from(1);
            let lb = ab.g[k].solve(&unit).unwrap();
            let v = proj[k].apply(&bc.f[k].apply(&lb));
            for (i, vi) in v.into_iter().enumerate() {
                *m.at_mut(i, j) = vi;
            }
        }
        f_yq.push(m);
        g_qz.push(bc.g[k].mul(&sect[k]));
    }
    let ses_yqz = ShortExact::new(y, q, z, f_yq, g_qz)?;
    let sigma_ac = connecting_iso(mode, &ses_ac)?;
    let sigma_yqz = connecting_iso(mode, &ses_yqz)?;
    // Route 2: X ⊗ (Y ⊗ Z) → X ⊗ Q → C.
    let route2 = sigma_yqz * sigma_ac;
    Ok((route1, route2))
}

/// Counts from a property-suite run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SuiteReport {
    pub complexes: usize,
    pub lift_checks: usize,
    pub koszul_checks: usize,
    pub carry_checks: usize,
    pub associativity_checks: usize,
}

/// Exact property suite: Koszul coherence, lift independence of the torsion
/// element, compatibility of the connecting iso with torsion, associativity
/// along filtrations. Returns the first violated law by name.
pub fn property_suite(mode: SignMode, n: usize, seed: u64) -> std::result::Result<SuiteReport, String> {
    let mut rep = SuiteReport::default();
    for e1 in 0..2u8 {
        for e2 in 0..2u8 {
            let a = GradedElement::new(GradedLine::atom("K1", e1), QC::int(2));
            let b = GradedElement::new(GradedLine::atom("K2", e2), QC::int(3));
            let ab = swap(mode, &a, &b);
            let expect = if e1 & e2 == 1 { -6 } else { 6 };
            if ab.scalar != QC::int(expect) {
                return Err(format!("koszul swap sign wrong for parities ({e1},{e2})"));
            }
            let back = swap(mode, &GradedElement::new(b.line.clone(), QC::one()), &GradedElement::new(a.line.clone(), ab.scalar.clone()));
            if back.scalar != QC::int(6) || back.line != a.line.tensor(&b.line) {
                return Err(format!("swap∘swap ≠ id for parities ({e1},{e2})"));
            }
            rep.koszul_checks += 1;
        }
    }
    let mut gen = random::Gen::new(seed);
    for _ in 0..n {
        let c = gen.acyclic("E");
        let l1 = gen.lifts(&c);
        let l2 = gen.lifts(&c);
        let t1 = torsion_element(&c, &l1).map_err(|e| format!("torsion element failed: {e}"))?;
        let t2 = torsion_element(&c, &l2).map_err(|e| format!("torsion element failed: {e}"))?;
        if t1 != t2 || t1.is_zero() {
            return Err(format!("torsion element depends on lifts (degrees from {}, dims {:?})", c.lo, c.dims));
        }
        if t1.line.parity() as i64 != c.euler_characteristic().rem_euclid(2) {
            return Err("det parity differs from Euler characteristic".into());
        }
        rep.complexes += 1;
        rep.lift_checks += 1;

        let other = gen.acyclic_on("C", c.lo, c.dims.len());
        let ses = gen.extension(&c, &other, "B");
        let ta = torsion_element(&ses.a, &standard_lifts(&ses.a)).map_err(|e| e.to_string())?.scalar;
        let tc = torsion_element(&ses.c, &standard_lifts(&ses.c)).map_err(|e| e.to_string())?.scalar;
        let tb = torsion_element(&ses.b, &standard_lifts(&ses.b)).map_err(|e| e.to_string())?.scalar;
        let iso = connecting_iso(mode, &ses).map_err(|e| e.to_string())?;
        if ta * tc * iso != tb {
            return Err("connecting iso does not carry torsion to torsion".into());
        }
        rep.carry_checks += 1;

        let (r1, r2) = filtration_compositions(mode, &mut gen).map_err(|e| e.to_string())?;
        if r1 != r2 {
            return Err("connecting iso is not associative along a filtration".into());
        }
        rep.associativity_checks += 1;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(label: &str, parity: u8, v: i64) -> GradedElement {
        GradedElement::new(GradedLine::atom(label, parity), QC::int(v))
    }

    #[test]
    fn even_even_commutes() {
        let a = el("A", 0, 2);
        let b = el("B", 0, 3);
        let t = tensor(&a, &b);
        assert_eq!(t.scalar, QC::int(6));
        assert_eq!(t.line.parity(), 0);
        assert_eq!(swap(SignMode::Graded, &a, &b).scalar, QC::int(6));
    }

    #[test]
    fn odd_odd_swap_is_minus_one() {
        let a = el("A", 1, 1);
        let b = el("B", 1, 1);
        assert_eq!(swap(SignMode::Graded, &a, &b).scalar, QC::int(-1));
        assert_eq!(swap(SignMode::Ordinary, &a, &b).scalar, QC::int(1));
    }

    #[test]
    fn inverses_contract_to_one() {
        for parity in 0..2u8 {
            let s = GradedElement::new(GradedLine::atom("L", parity).tensor(&GradedLine::atom("M", 1)), QC::new(Rational::from(3), Rational::from((1, 2))));
            let r = right_inverse(SignMode::Graded, &s).unwrap();
            let l = left_inverse(SignMode::Graded, &s).unwrap();
            assert_eq!(contract(SignMode::Graded, &s, &r).unwrap(), QC::one());
            assert_eq!(contract_left(SignMode::Graded, &l, &s).unwrap(), QC::one());
            assert_eq!(tensor(&s, &r).line.parity(), 0);
        }
    }

    #[test]
    fn det_parities() {
        let single = GradedComplex::with_zero_diff("V", 0, vec![3]);
        assert_eq!(det_complex(&single).parity(), 1);
        let zero = GradedComplex::with_zero_diff("Z", 0, vec![]);
        assert!(det_complex(&zero).is_trivial());
        let two = GradedComplex::new("Q", 0, vec![1, 1], vec![QMat::from_i64(1, 1, &[1])]).unwrap();
        assert_eq!(det_complex(&two).parity(), 0);
    }

    #[test]
    fn two_term_torsion() {
        // degrees -1, 0: τ = (e^{-1})^{-1} ⊗ δe^{-1}
        let c = GradedComplex::new("T", -1, vec![1, 1], vec![QMat::from_i64(1, 1, &[2])]).unwrap();
        let t = torsion_element(&c, &standard_lifts(&c)).unwrap();
        assert_eq!(t.scalar, QC::int(2));
        // degrees 0, 1: τ = e^0 ⊗ (δe^0)^{-1}
        let c = GradedComplex::new("T", 0, vec![1, 1], vec![QMat::from_i64(1, 1, &[2])]).unwrap();
        let t = torsion_element(&c, &standard_lifts(&c)).unwrap();
        assert_eq!(t.scalar, QC::real(Rational::from((1, 2))));
        let id = GradedComplex::new("I", 0, vec![2, 2], vec![QMat::identity(2)]).unwrap();
        assert_eq!(torsion_element(&id, &standard_lifts(&id)).unwrap().scalar, QC::one());
    }

    #[test]
    fn non_acyclic_rejected() {
        let c = GradedComplex::with_zero_diff("N", 0, vec![1, 1]);
        assert!(torsion_element(&c, &standard_lifts(&c)).is_err());
    }

    #[test]
    fn connecting_trivial_cases() {
        let c = GradedComplex::new("C", 0, vec![1, 1], vec![QMat::from_i64(1, 1, &[3])]).unwrap();
        let a = GradedComplex::with_zero_diff("0", 0, vec![0, 0]);
        let ses = ShortExact::new(a, c.clone(), c.clone(), vec![QMat::zeros(1, 0), QMat::zeros(1, 0)], vec![QMat::identity(1), QMat::identity(1)]).unwrap();
        assert_eq!(connecting_iso(SignMode::Graded, &ses).unwrap(), QC::one());
    }

    #[test]
    fn split_sequence_sign() {
        // B = A ⊕ C in one even degree, A even-dimensional
        let a = GradedComplex::with_zero_diff("A", 0, vec![2]);
        let c = GradedComplex::with_zero_diff("C", 0, vec![1]);
        let b = GradedComplex::with_zero_diff("B", 0, vec![3]);
        let f = QMat::from_i64(3, 2, &[1, 0, 0, 1, 0, 0]);
        let g = QMat::from_i64(1, 3, &[0, 0, 1]);
        let ses = ShortExact::new(a, b, c, vec![f], vec![g]).unwrap();
        assert_eq!(connecting_iso(SignMode::Graded, &ses).unwrap(), QC::one());
    }

    #[test]
    fn suite_passes_and_catches_flipped_swap() {
        assert!(property_suite(SignMode::Graded, 40, 1).is_ok());
        let err = property_suite(SignMode::FlippedSwap, 40, 1).unwrap_err();
        assert!(err.contains("koszul"));
    }

    #[test]
    fn non_exact_rejected() {
        let a = GradedComplex::with_zero_diff("A", 0, vec![1]);
        let b = GradedComplex::with_zero_diff("B", 0, vec![2]);
        let c = GradedComplex::with_zero_diff("C", 0, vec![1]);
        let f = QMat::from_i64(2, 1, &[1, 0]);
        let g = QMat::from_i64(1, 2, &[1, 0]);
        assert!(ShortExact::new(a, b, c, vec![f], vec![g]).is_err());
    }

    #[test]
    fn monomial_tower_is_one() {
        for p in 0..=4 {
            assert_eq!(monomial_tower_coefficient(SignMode::Graded, p).unwrap(), QC::one());
        }
    }

    #[test]
    fn ordinary_mode_agrees_up_to_sign() {
        let mut g = random::Gen::new(7);
        for _ in 0..50 {
            let a = g.acyclic("A");
            let c = g.acyclic_on("C", a.lo, a.dims.len());
            let ses = g.extension(&a, &c, "B");
            let x = connecting_iso(SignMode::Graded, &ses).unwrap();
            let y = connecting_iso(SignMode::Ordinary, &ses).unwrap();
            assert!(x == y || x == -y);
        }
    }

    #[test]
    fn connecting_iso_carries_torsion() {
        let mut g = random::Gen::new(21);
        for _ in 0..200 {
            let a = g.acyclic("A");
            let c = g.acyclic_on("C", a.lo, a.dims.len());
            let ses = g.extension(&a, &c, "B");
            let ta = torsion_element(&ses.a, &standard_lifts(&ses.a)).unwrap().scalar;
            let tc = torsion_element(&ses.c, &standard_lifts(&ses.c)).unwrap().scalar;
            let tb = torsion_element(&ses.b, &standard_lifts(&ses.b)).unwrap().scalar;
            let image = ta * tc * connecting_iso(SignMode::Graded, &ses).unwrap();
            assert_eq!(image, tb, "dims A {:?} C {:?} lo {}", ses.a.dims, ses.c.dims, ses.a.lo);
        }
    }

    #[test]
    fn filtration_associative() {
        let mut g = random::Gen::new(5);
        for _ in 0..300 {
            let (r1, r2) = filtration_compositions(SignMode::Graded, &mut g).unwrap();
            assert_eq!(r1, r2);
        }
    }
}

