//! Sparse multivariate polynomials and rational functions over the joint
//! upper/lower variable space, plus polynomial matrices with cofactor-based
//! adjugates.
//!
//! Variables are indexed from zero: the first `n_upper` indices are the
//! upper-level variables `x1..xn`, the following `n_lower` are the lower-level
//! variables (`y1..yp`, also written `z1..zp` inside lower-level data).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Errors raised by polynomial arithmetic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("variable spaces differ: {0} vs {1}")]
    SpaceMismatch(VarSpace, VarSpace),
    #[error("variable index {index} out of range for {space}")]
    VarOutOfRange { index: usize, space: VarSpace },
    #[error("denominator vanishes at the evaluation point")]
    EvaluationSingular,
    #[error("zero polynomial used as a denominator")]
    ZeroDenominator,
    #[error("matrix of size {0} exceeds the cofactor budget of {max}", max = MAX_COFACTOR_SIZE)]
    MatrixTooLarge(usize),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, PolyError>;

/// Largest square matrix handled by [`PolyMatrix::adjugate_det`].
pub const MAX_COFACTOR_SIZE: usize = 8;

/// Dimensions of the joint `(x, y)` variable space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct VarSpace {
    pub n_upper: usize,
    pub n_lower: usize,
}

impl VarSpace {
    pub fn new(n_upper: usize, n_lower: usize) -> Self {
        Self { n_upper, n_lower }
    }

    /// A space with `n` anonymous variables, used for standalone polynomial
    /// optimization problems. They print as `x1..xn`.
    pub fn flat(n: usize) -> Self {
        Self { n_upper: n, n_lower: 0 }
    }

    pub fn total(&self) -> usize {
        self.n_upper + self.n_lower
    }

    pub fn is_upper(&self, var: usize) -> bool {
        var < self.n_upper
    }

    pub fn lower_index(&self, j: usize) -> usize {
        self.n_upper + j
    }

    fn check(&self, var: usize) -> Result<()> {
        if var < self.total() {
            Ok(())
        } else {
            Err(PolyError::VarOutOfRange { index: var, space: *self })
        }
    }
}

impl fmt::Display for VarSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x:{}, y:{})", self.n_upper, self.n_lower)
    }
}

/// Exponent tuple of a monomial, ordered graded-lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u16>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Monomial(e)
    }

    pub fn from_exponents(e: Vec<u16>) -> Self {
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&e, &p) in self.0.iter().zip(point) {
            if e > 0 {
                v *= p.powi(e as i32);
            }
        }
        v
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// How lower-level variables are spelled when printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LowerName {
    #[default]
    Y,
    Z,
}

/// Sparse polynomial with `f64` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    space: VarSpace,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(space: VarSpace) -> Self {
        Self { space, terms: BTreeMap::new() }
    }

    pub fn constant(space: VarSpace, c: f64) -> Self {
        let mut p = Self::zero(space);
        p.add_term(Monomial::one(space.total()), c);
        p
    }

    pub fn var(space: VarSpace, var: usize) -> Self {
        assert!(var < space.total(), "variable {var} out of range for {space}");
        let mut p = Self::zero(space);
        p.add_term(Monomial::var(space.total(), var), 1.0);
        p
    }

    /// Upper-level variable `x_{i+1}`.
    pub fn x(space: VarSpace, i: usize) -> Self {
        assert!(i < space.n_upper);
        Self::var(space, i)
    }

    /// Lower-level variable `y_{j+1}`.
    pub fn y(space: VarSpace, j: usize) -> Self {
        assert!(j < space.n_lower);
        Self::var(space, space.n_upper + j)
    }

    pub fn from_terms(space: VarSpace, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero(space);
        for (m, c) in terms {
            assert_eq!(m.0.len(), space.total());
            p.add_term(m, c);
        }
        p
    }

    pub fn space(&self) -> VarSpace {
        self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.total()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + ExactSizeIterator {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest total degree restricted to the variables selected by `mask`.
    pub fn degree_in(&self, mask: impl Fn(usize) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|m| {
                m.0.iter()
                    .enumerate()
                    .filter(|(i, _)| mask(*i))
                    .map(|(_, &e)| e as u32)
                    .sum::<u32>()
            })
            .max()
            .unwrap_or(0)
    }

    /// Degree in the lower-level variables.
    pub fn lower_degree(&self) -> u32 {
        let n = self.space.n_upper;
        self.degree_in(|i| i >= n)
    }

    pub fn upper_degree(&self) -> u32 {
        let n = self.space.n_upper;
        self.degree_in(|i| i < n)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            Some(self.coeff(&Monomial::one(self.nvars())))
        } else {
            None
        }
    }

    /// Constant term (zero when absent).
    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.nvars()))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0_f64, |a, c| a.max(c.abs()))
    }

    /// Drop coefficients below `rel_tol` times the largest one.
    pub fn prune(&mut self, rel_tol: f64) {
        let cut = rel_tol * self.max_abs_coeff();
        self.terms.retain(|_, c| c.abs() > cut);
    }

    pub fn pruned(mut self, rel_tol: f64) -> Self {
        self.prune(rel_tol);
        self
    }

    /// Drop coefficients with absolute value at most `abs_tol`.
    pub fn chop(mut self, abs_tol: f64) -> Self {
        self.terms.retain(|_, c| c.abs() > abs_tol);
        self
    }

    /// Rescale so that the largest coefficient has magnitude one.
    pub fn normalized(&self) -> Self {
        let s = self.max_abs_coeff();
        if s == 0.0 {
            self.clone()
        } else {
            self.scale(1.0 / s)
        }
    }

    pub fn uses_var(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.0[var] > 0)
    }

    pub fn depends_only_on_upper(&self) -> bool {
        self.lower_degree() == 0
    }

    fn check_space(&self, other: &Self) -> Result<()> {
        if self.space == other.space {
            Ok(())
        } else {
            Err(PolyError::SpaceMismatch(self.space, other.space))
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        let mut r = self.clone();
        for (m, &c) in &other.terms {
            r.add_term(m.clone(), c);
        }
        Ok(r)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        let mut r = self.clone();
        for (m, &c) in &other.terms {
            r.add_term(m.clone(), -c);
        }
        Ok(r)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        let mut acc: HashMap<Monomial, f64> = HashMap::with_capacity(self.terms.len() * other.terms.len());
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                *acc.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        let mut r = Self::zero(self.space);
        for (m, c) in acc {
            if c != 0.0 {
                r.terms.insert(m, c);
            }
        }
        Ok(r)
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.space);
        }
        let mut r = self.clone();
        for c in r.terms.values_mut() {
            *c *= s;
        }
        r.terms.retain(|_, c| *c != 0.0);
        r
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut result = Self::constant(self.space, 1.0);
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Result<Self> {
        self.space.check(var)?;
        let mut r = Self::zero(self.space);
        for (m, &c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut nm = m.clone();
            nm.0[var] -= 1;
            r.add_term(nm, c * e as f64);
        }
        Ok(r)
    }

    /// Gradient with respect to the lower-level variables.
    pub fn grad_lower(&self) -> Vec<Polynomial> {
        (0..self.space.n_lower)
            .map(|j| self.differentiate(self.space.n_upper + j).expect("index in range"))
            .collect()
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars() {
            return Err(PolyError::PointDimension { got: point.len(), expected: self.nvars() });
        }
        Ok(self.eval(point))
    }

    /// Evaluation without the dimension check.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.terms.iter().map(|(m, &c)| c * m.eval(point)).sum()
    }

    /// Fix some variables to numbers, keeping the variable space.
    pub fn fix_vars(&self, values: &[(usize, f64)]) -> Self {
        let mut r = Self::zero(self.space);
        for (m, &c) in &self.terms {
            let mut nm = m.clone();
            let mut coef = c;
            for &(v, val) in values {
                let e = nm.0[v];
                if e > 0 {
                    coef *= val.powi(e as i32);
                    nm.0[v] = 0;
                }
            }
            r.add_term(nm, coef);
        }
        r
    }

    /// Re-express the polynomial in another space. `map[i]` gives the new
    /// index of old variable `i`; old variables must not appear if unmapped.
    pub fn remap(&self, target: VarSpace, map: &[Option<usize>]) -> Self {
        let mut r = Self::zero(target);
        for (m, &c) in &self.terms {
            let mut e = vec![0u16; target.total()];
            for (i, &ei) in m.0.iter().enumerate() {
                if ei > 0 {
                    let j = map[i].unwrap_or_else(|| panic!("variable {i} has no image in remap"));
                    e[j] += ei;
                }
            }
            r.add_term(Monomial(e), c);
        }
        r
    }

    /// Simultaneous substitution of polynomial expressions for some variables.
    pub fn substitute_poly(&self, assignments: &BTreeMap<usize, Polynomial>) -> Result<Self> {
        for (&v, q) in assignments {
            self.space.check(v)?;
            self.check_space(q)?;
        }
        let mut cache: HashMap<(usize, u16), Polynomial> = HashMap::new();
        let mut r = Self::zero(self.space);
        for (m, &c) in &self.terms {
            let mut rest = m.clone();
            let mut term = Self::constant(self.space, c);
            for (&v, q) in assignments {
                let e = m.0[v];
                if e > 0 {
                    rest.0[v] = 0;
                    let pw = cache.entry((v, e)).or_insert_with(|| q.pow(e as u32));
                    term = &term * pw;
                }
            }
            let mut mono = Self::zero(self.space);
            mono.add_term(rest, 1.0);
            r = &r + &(&term * &mono);
        }
        Ok(r)
    }

    /// Substitution of rational expressions, producing a rational function.
    pub fn substitute(&self, assignments: &BTreeMap<usize, RationalFn>) -> Result<RationalFn> {
        RationalFn::from_poly(self.clone()).substitute(assignments)
    }

    /// Print with a chosen spelling for lower variables.
    pub fn display_with(&self, lower: LowerName) -> PolyDisplay<'_> {
        PolyDisplay { poly: self, lower }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial spaces differ")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial spaces differ")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial spaces differ")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Add for Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}

impl Sub for Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: Polynomial) -> Polynomial {
        &self - &rhs
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Formatter produced by [`Polynomial::display_with`].
pub struct PolyDisplay<'a> {
    poly: &'a Polynomial,
    lower: LowerName,
}

fn var_name(space: VarSpace, i: usize, lower: LowerName) -> String {
    if i < space.n_upper {
        format!("x{}", i + 1)
    } else {
        let c = match lower {
            LowerName::Y => 'y',
            LowerName::Z => 'z',
        };
        format!("{c}{}", i - space.n_upper + 1)
    }
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.poly;
        if p.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in p.terms.iter().rev() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if first {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let factors: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| {
                    let name = var_name(p.space, i, self.lower);
                    if e == 1 {
                        name
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.display_with(LowerName::Y).fmt(f)
    }
}

/// Quotient of two polynomials over the same space.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFn {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFn {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        num.check_space(&den)?;
        if den.is_zero() {
            return Err(PolyError::ZeroDenominator);
        }
        Ok(Self { num, den }.normalize())
    }

    pub fn from_poly(p: Polynomial) -> Self {
        let space = p.space;
        Self { num: p, den: Polynomial::constant(space, 1.0) }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn space(&self) -> VarSpace {
        self.num.space
    }

    pub fn into_parts(self) -> (Polynomial, Polynomial) {
        (self.num, self.den)
    }

    /// A constant denominator is folded into the numerator.
    fn normalize(self) -> Self {
        match self.den.constant_value() {
            Some(c) if c != 1.0 => {
                let space = self.num.space;
                Self { num: self.num.scale(1.0 / c), den: Polynomial::constant(space, 1.0) }
            }
            _ => self,
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    /// The polynomial value when the denominator is constant.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        self.den.constant_value().map(|c| self.num.scale(1.0 / c))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.num.check_space(&other.num)?;
        if self.den == other.den {
            return Ok(Self { num: &self.num + &other.num, den: self.den.clone() }.normalize());
        }
        let num = &(&self.num * &other.den) + &(&other.num * &self.den);
        Ok(Self { num, den: &self.den * &other.den }.normalize())
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.num.check_space(&other.num)?;
        Ok(Self { num: &self.num * &other.num, den: &self.den * &other.den }.normalize())
    }

    pub fn try_div(&self, other: &Self) -> Result<Self> {
        self.num.check_space(&other.num)?;
        if other.num.is_zero() {
            return Err(PolyError::ZeroDenominator);
        }
        Ok(Self { num: &self.num * &other.den, den: &self.den * &other.num }.normalize())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { num: self.num.scale(s), den: self.den.clone() }
    }

    pub fn pow(&self, e: u32) -> Self {
        Self { num: self.num.pow(e), den: self.den.pow(e) }.normalize()
    }

    /// Quotient rule: `(den * d num - num * d den) / den^2`.
    pub fn differentiate(&self, var: usize) -> Result<Self> {
        let dn = self.num.differentiate(var)?;
        if self.den.is_constant() {
            return Ok(Self { num: dn, den: self.den.clone() }.normalize());
        }
        let dd = self.den.differentiate(var)?;
        let num = &(&self.den * &dn) - &(&self.num * &dd);
        Ok(Self { num, den: &self.den * &self.den })
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        let d = self.den.evaluate(point)?;
        if d == 0.0 {
            return Err(PolyError::EvaluationSingular);
        }
        Ok(self.num.evaluate(point)? / d)
    }

    /// Simultaneous substitution. The result's denominator is the product of
    /// the assignment denominators raised to the largest power needed.
    pub fn substitute(&self, assignments: &BTreeMap<usize, RationalFn>) -> Result<RationalFn> {
        for (&v, q) in assignments {
            self.num.space.check(v)?;
            self.num.check_space(&q.num)?;
            if q.den.is_zero() {
                return Err(PolyError::ZeroDenominator);
            }
        }
        let num = substitute_cleared(&self.num, assignments);
        let den = substitute_cleared(&self.den, assignments);
        // Both carry the common factor prod d_v^{E_v} for their own maximal
        // exponents; rebalance so the two clearing factors agree.
        let (num_p, num_fac) = num;
        let (den_p, den_fac) = den;
        let space = self.space();
        let mut num_total = num_p;
        let mut den_total = den_p;
        for (&v, q) in assignments {
            if q.den.is_constant() {
                continue;
            }
            let en = num_fac.get(&v).copied().unwrap_or(0);
            let ed = den_fac.get(&v).copied().unwrap_or(0);
            if en > ed {
                den_total = &den_total * &q.den.pow(en - ed);
            } else if ed > en {
                num_total = &num_total * &q.den.pow(ed - en);
            }
        }
        let _ = space;
        RationalFn::new(num_total, den_total)
    }
}

/// Substitute into a polynomial after multiplying through by
/// `prod d_v^{E_v}` with `E_v` the largest exponent of `v`. Returns the
/// cleared polynomial and the exponents used.
fn substitute_cleared(
    p: &Polynomial,
    assignments: &BTreeMap<usize, RationalFn>,
) -> (Polynomial, BTreeMap<usize, u32>) {
    let space = p.space;
    let mut max_exp: BTreeMap<usize, u32> = BTreeMap::new();
    for (&v, q) in assignments {
        if q.den.is_constant() {
            continue;
        }
        let e = p.terms.keys().map(|m| m.0[v] as u32).max().unwrap_or(0);
        if e > 0 {
            max_exp.insert(v, e);
        }
    }
    let mut num_pows: HashMap<(usize, u32), Polynomial> = HashMap::new();
    let mut den_pows: HashMap<(usize, u32), Polynomial> = HashMap::new();
    let mut out = Polynomial::zero(space);
    for (m, &c) in &p.terms {
        let mut rest = m.clone();
        let mut term = Polynomial::constant(space, c);
        for (&v, q) in assignments {
            let e = m.0[v] as u32;
            rest.0[v] = 0;
            let q_poly_den = q.den.constant_value();
            if e > 0 {
                let pn = num_pows.entry((v, e)).or_insert_with(|| q.num.pow(e)).clone();
                term = &term * &pn;
                if let Some(dc) = q_poly_den {
                    term = term.scale(1.0 / dc.powi(e as i32));
                }
            }
            if let Some(&emax) = max_exp.get(&v) {
                if emax > e {
                    let pd = den_pows.entry((v, emax - e)).or_insert_with(|| q.den.pow(emax - e)).clone();
                    term = &term * &pd;
                }
            }
        }
        let mut mono = Polynomial::zero(space);
        mono.add_term(rest, 1.0);
        out = &out + &(&term * &mono);
    }
    (out, max_exp)
}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.constant_value() == Some(1.0) {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}

/// Which kind of arithmetic [`arith`] performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    /// Multiply the first operand by a real number, ignoring the second.
    Scale(OrderedF64),
}

/// Bit-pattern wrapper so `ArithOp` can derive `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderedF64(u64);

impl OrderedF64 {
    pub fn new(v: f64) -> Self {
        Self(v.to_bits())
    }
    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

/// Dispatching entry point for binary polynomial arithmetic.
pub fn arith(a: &Polynomial, b: &Polynomial, op: ArithOp) -> Result<Polynomial> {
    match op {
        ArithOp::Add => a.try_add(b),
        ArithOp::Sub => a.try_sub(b),
        ArithOp::Mul => a.try_mul(b),
        ArithOp::Scale(s) => {
            a.check_space(b)?;
            Ok(a.scale(s.get()))
        }
    }
}

/// Rectangular matrix of polynomials sharing one variable space.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    space: VarSpace,
    rows: usize,
    cols: usize,
    entries: Vec<Polynomial>,
}

impl PolyMatrix {
    pub fn zeros(space: VarSpace, rows: usize, cols: usize) -> Self {
        Self { space, rows, cols, entries: vec![Polynomial::zero(space); rows * cols] }
    }

    pub fn identity(space: VarSpace, n: usize) -> Self {
        let mut m = Self::zeros(space, n, n);
        for i in 0..n {
            m.set(i, i, Polynomial::constant(space, 1.0));
        }
        m
    }

    pub fn from_rows(space: VarSpace, rows: Vec<Vec<Polynomial>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(PolyError::NotSquare { rows: r, cols: row.len() });
            }
            for p in row {
                if p.space != space {
                    return Err(PolyError::SpaceMismatch(space, p.space));
                }
                entries.push(p);
            }
        }
        Ok(Self { space, rows: r, cols: c, entries })
    }

    pub fn from_constants(space: VarSpace, rows: &[Vec<f64>]) -> Self {
        let polys = rows
            .iter()
            .map(|r| r.iter().map(|&v| Polynomial::constant(space, v)).collect())
            .collect();
        Self::from_rows(space, polys).expect("rectangular input")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn space(&self) -> VarSpace {
        self.space
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.space, self.space);
        self.entries[i * self.cols + j] = p;
    }

    pub fn row(&self, i: usize) -> &[Polynomial] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.space, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(PolyError::SpaceMismatch(self.space, other.space));
        }
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut r = Self::zeros(self.space, self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Polynomial::zero(self.space);
                for k in 0..self.cols {
                    let a = self.get(i, k);
                    let b = other.get(k, j);
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &(a * b);
                    }
                }
                r.set(i, j, acc);
            }
        }
        Ok(r)
    }

    pub fn mul_vec(&self, v: &[Polynomial]) -> Vec<Polynomial> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut acc = Polynomial::zero(self.space);
                for (k, vk) in v.iter().enumerate() {
                    let a = self.get(i, k);
                    if !a.is_zero() && !vk.is_zero() {
                        acc = &acc + &(a * vk);
                    }
                }
                acc
            })
            .collect()
    }

    pub fn evaluate(&self, point: &[f64]) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(point))
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(Polynomial::is_constant)
    }

    /// Determinant by memoized cofactor expansion.
    pub fn det(&self) -> Result<Polynomial> {
        Ok(self.adjugate_det()?.1)
    }

    /// Adjugate and determinant, satisfying `M * adj(M) = det(M) * I`.
    pub fn adjugate_det(&self) -> Result<(PolyMatrix, Polynomial)> {
        if self.rows != self.cols {
            return Err(PolyError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        if n > MAX_COFACTOR_SIZE {
            return Err(PolyError::MatrixTooLarge(n));
        }
        if n == 0 {
            return Ok((Self::zeros(self.space, 0, 0), Polynomial::constant(self.space, 1.0)));
        }
        let full: u16 = ((1u32 << n) - 1) as u16;
        let mut memo: HashMap<(u16, u16), Polynomial> = HashMap::new();
        let det = self.minor(full, full, &mut memo);
        let mut adj = Self::zeros(self.space, n, n);
        for i in 0..n {
            for j in 0..n {
                let m = self.minor(full & !(1 << i), full & !(1 << j), &mut memo);
                let c = if (i + j) % 2 == 0 { m } else { -m };
                // adj = cofactor matrix transposed
                adj.set(j, i, c);
            }
        }
        Ok((adj, det))
    }

    fn minor(&self, rows: u16, cols: u16, memo: &mut HashMap<(u16, u16), Polynomial>) -> Polynomial {
        if rows == 0 {
            return Polynomial::constant(self.space, 1.0);
        }
        if let Some(p) = memo.get(&(rows, cols)) {
            return p.clone();
        }
        let r = rows.trailing_zeros() as usize;
        let mut acc = Polynomial::zero(self.space);
        let mut pos = 0;
        for c in 0..self.cols {
            if cols & (1 << c) == 0 {
                continue;
            }
            let a = self.get(r, c);
            if !a.is_zero() {
                let sub = self.minor(rows & !(1 << r), cols & !(1 << c), memo);
                if !sub.is_zero() {
                    let term = a * &sub;
                    acc = if pos % 2 == 0 { &acc + &term } else { &acc - &term };
                }
            }
            pos += 1;
        }
        memo.insert((rows, cols), acc.clone());
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> VarSpace {
        VarSpace::new(1, 2)
    }

    #[test]
    fn binomial_square() {
        let s = VarSpace::new(1, 1);
        let d = &Polynomial::y(s, 0) - &Polynomial::x(s, 0);
        let sq = &d * &d;
        assert_eq!(sq.num_terms(), 3);
        assert_eq!(sq.coeff(&Monomial::from_exponents(vec![0, 2])), 1.0);
        assert_eq!(sq.coeff(&Monomial::from_exponents(vec![1, 1])), -2.0);
        assert_eq!(sq.coeff(&Monomial::from_exponents(vec![2, 0])), 1.0);
    }

    #[test]
    fn additive_identity_and_pruning() {
        let s = sp();
        let p = &Polynomial::x(s, 0) + &Polynomial::constant(s, 3.0);
        assert_eq!(&p + &Polynomial::zero(s), p);
        let z = &p - &p;
        assert!(z.is_zero());
        assert_eq!(z.num_terms(), 0);
    }

    #[test]
    fn space_mismatch_is_an_error() {
        let a = Polynomial::constant(VarSpace::new(1, 1), 1.0);
        let b = Polynomial::constant(VarSpace::new(2, 1), 1.0);
        assert!(matches!(a.try_add(&b), Err(PolyError::SpaceMismatch(..))));
        assert!(arith(&a, &b, ArithOp::Mul).is_err());
    }

    #[test]
    fn derivative_of_tp6_lower_objective() {
        // (2 z1 - 4)^2 + (2 z2 - 1)^2 + x z1
        let s = sp();
        let x = Polynomial::x(s, 0);
        let z1 = Polynomial::y(s, 0);
        let z2 = Polynomial::y(s, 1);
        let two = Polynomial::constant(s, 2.0);
        let a = &(&two * &z1) - &Polynomial::constant(s, 4.0);
        let b = &(&two * &z2) - &Polynomial::constant(s, 1.0);
        let f = &(&(&a * &a) + &(&b * &b)) + &(&x * &z1);
        let df = f.differentiate(1).unwrap();
        let expected = &(&z1.scale(8.0) - &Polynomial::constant(s, 16.0)) + &x;
        assert_eq!(df, expected);
        // z-only polynomial has zero x-derivative
        assert!((&z1 * &z2).differentiate(0).unwrap().is_zero());
    }

    #[test]
    fn quotient_rule() {
        let s = VarSpace::new(0, 1);
        let z = Polynomial::y(s, 0);
        let num = &Polynomial::constant(s, 1.0) + &z.scale(2.0);
        let den = &Polynomial::constant(s, 6.0) + &z;
        let r = RationalFn::new(num, den.clone()).unwrap();
        let d = r.differentiate(0).unwrap();
        assert_eq!(d.num(), &Polynomial::constant(s, 11.0));
        assert_eq!(d.den(), &(&den * &den));
    }

    #[test]
    fn evaluation_examples() {
        let s = VarSpace::new(1, 1);
        let x = Polynomial::x(s, 0);
        let y = Polynomial::y(s, 0);
        let a = &x - &Polynomial::constant(s, 1.5);
        let f = &(&a * &a) + &(&y * &y);
        assert!((f.evaluate(&[1.9, 0.2]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(Polynomial::constant(s, 7.0).evaluate(&[3.0, -1.0]).unwrap(), 7.0);
        assert!(f.evaluate(&[1.0]).is_err());

        let s2 = VarSpace::new(1, 2);
        let y1 = &Polynomial::y(s2, 0) - &Polynomial::constant(s2, 3.0);
        let y2 = &Polynomial::y(s2, 1) - &Polynomial::constant(s2, 4.0);
        let g = (&(&y1 * &y1) + &(&y2 * &y2)).scale(0.5);
        assert!((g.evaluate(&[1.9111, 2.9784, 2.2315]).unwrap() - 1.5641).abs() < 1e-3);
    }

    #[test]
    fn rational_singular_evaluation() {
        let s = VarSpace::new(0, 1);
        let r = RationalFn::new(Polynomial::constant(s, 1.0), Polynomial::y(s, 0)).unwrap();
        assert_eq!(r.evaluate(&[0.0]), Err(PolyError::EvaluationSingular));
        assert!(RationalFn::new(Polynomial::constant(s, 1.0), Polynomial::zero(s)).is_err());
    }

    #[test]
    fn constant_assignment_yields_polynomial() {
        // z -> (0.25, 2.75 - x1) in a two-variable lower objective
        let s = VarSpace::new(1, 2);
        let z1 = Polynomial::y(s, 0);
        let z2 = Polynomial::y(s, 1);
        let f = &(&z1 * &z2) + &z2;
        let mut asg = BTreeMap::new();
        asg.insert(1, RationalFn::from_poly(Polynomial::constant(s, 0.25)));
        asg.insert(2, RationalFn::from_poly(&Polynomial::constant(s, 2.75) - &Polynomial::x(s, 0)));
        let r = f.substitute(&asg).unwrap();
        assert!(r.is_polynomial());
        let p = r.as_polynomial().unwrap();
        // (0.25 + 1) * (2.75 - x1)
        assert!((p.evaluate(&[1.0, 9.0, 9.0]).unwrap() - 1.25 * 1.75).abs() < 1e-12);
    }

    #[test]
    fn identity_like_substitution_vanishes() {
        let s = VarSpace::new(1, 1);
        let d = &Polynomial::y(s, 0) - &Polynomial::x(s, 0);
        let f = &d * &d;
        let mut asg = BTreeMap::new();
        asg.insert(1, RationalFn::from_poly(Polynomial::x(s, 0)));
        let r = f.substitute(&asg).unwrap();
        assert!(r.num().is_zero());
    }

    #[test]
    fn rational_substitution_clears_denominators() {
        let s = VarSpace::new(1, 1);
        let x = Polynomial::x(s, 0);
        let y = Polynomial::y(s, 0);
        // f = y^2 + x*y, y -> 1/(1+x^2)
        let f = &(&y * &y) + &(&x * &y);
        let q = RationalFn::new(Polynomial::constant(s, 1.0), &Polynomial::constant(s, 1.0) + &(&x * &x)).unwrap();
        let mut asg = BTreeMap::new();
        asg.insert(1, q.clone());
        let r = f.substitute(&asg).unwrap();
        for &xv in &[-1.3, 0.0, 0.7, 2.0] {
            let qv = q.evaluate(&[xv, 0.0]).unwrap();
            let direct = qv * qv + xv * qv;
            assert!((r.evaluate(&[xv, 5.0]).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn adjugate_of_small_matrices() {
        let s = VarSpace::new(1, 2);
        let x = Polynomial::x(s, 0);
        let one = Polynomial::constant(s, 1.0);
        let m = PolyMatrix::from_rows(s, vec![vec![x.clone(), -&one], vec![Polynomial::zero(s), one.clone()]]).unwrap();
        let (adj, det) = m.adjugate_det().unwrap();
        assert_eq!(det, x);
        assert_eq!(adj.get(0, 0), &one);
        assert_eq!(adj.get(0, 1), &one);
        assert!(adj.get(1, 0).is_zero());
        assert_eq!(adj.get(1, 1), &x);

        let id = PolyMatrix::identity(s, 3);
        let (adj, det) = id.adjugate_det().unwrap();
        assert_eq!(adj, id);
        assert_eq!(det, one);

        let g = PolyMatrix::from_constants(s, &[vec![41.0, -9.0], vec![-9.0, 41.0]]);
        assert_eq!(g.det().unwrap().constant_value(), Some(1600.0));
    }

    #[test]
    fn cofactor_budget() {
        let s = VarSpace::new(1, 1);
        let m = PolyMatrix::identity(s, 9);
        assert_eq!(m.adjugate_det().unwrap_err(), PolyError::MatrixTooLarge(9));
        let r = PolyMatrix::zeros(s, 2, 3);
        assert!(matches!(r.adjugate_det(), Err(PolyError::NotSquare { .. })));
    }

    #[test]
    fn display_uses_requested_names() {
        let s = VarSpace::new(1, 1);
        let p = &Polynomial::y(s, 0).scale(-2.0) + &Polynomial::x(s, 0);
        assert_eq!(format!("{}", p.display_with(LowerName::Z)), "-2*z1 + x1");
        assert_eq!(format!("{p}"), "-2*y1 + x1");
    }
}
