//! Free-group words over M symbols and their evaluation at tuples of group elements.
//!
//! Letters are nonzero integers: `k` is the k-th generator and `-k` its inverse.
//! The canonical order is shortlex with `1 < -1 < 2 < -2 < ...`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{LieError, Result};
use crate::lie::{adjoint, AlgebraElement, GroupElement, GroupKind, MEMBERSHIP_TOL};
use crate::sampling;

/// Longest word the symbolic combinators will build.
pub const MAX_SYMBOLIC_LEN: usize = 1 << 26;

/// A freely reduced word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word {
    letters: Vec<i32>,
}

fn letter_key(l: i32) -> u32 {
    2 * (l.unsigned_abs() - 1) + u32::from(l < 0)
}

impl Word {
    pub fn empty() -> Self {
        Word { letters: Vec::new() }
    }

    /// Free reduction of a raw letter sequence over an alphabet of `alphabet` symbols.
    pub fn reduce(raw: &[i32], alphabet: u32) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|l| **l == 0 || l.unsigned_abs() > alphabet) {
            return Err(LieError::Usage(format!("letter {bad} outside alphabet of size {alphabet}")));
        }
        Ok(Word { letters: reduce_letters(raw) })
    }

    /// Wrap letters already known to be reduced and nonzero.
    pub(crate) fn from_reduced(letters: Vec<i32>) -> Self {
        debug_assert!(is_reduced(&letters));
        Word { letters }
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Largest generator index used.
    pub fn max_symbol(&self) -> u32 {
        self.letters.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn inverse(&self) -> Word {
        Word { letters: self.letters.iter().rev().map(|l| -l).collect() }
    }

    /// Reduced product `self * other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut out = self.letters.clone();
        for &l in &other.letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word { letters: out }
    }

    /// Reduced commutator `self * other * self^-1 * other^-1`.
    pub fn commutator(&self, other: &Word) -> Word {
        self.concat(other).concat(&self.inverse()).concat(&other.inverse())
    }

    /// Reduced power; negative exponents use the inverse.
    pub fn pow(&self, k: i64) -> Result<Word> {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let n = k.unsigned_abs() as usize;
        if base.len().saturating_mul(n) > MAX_SYMBOLIC_LEN {
            return Err(LieError::Size(format!(
                "power would have {} letters",
                base.len() as u128 * n as u128
            )));
        }
        let mut acc = Word::empty();
        for _ in 0..n {
            acc = acc.concat(&base);
        }
        Ok(acc)
    }

    /// Human-readable form: `a b A B`, capitals for inverses.
    pub fn to_text(&self) -> String {
        self.letters
            .iter()
            .map(|&l| {
                let c = (b'a' + (l.unsigned_abs() - 1) as u8) as char;
                if l < 0 {
                    c.to_ascii_uppercase().to_string()
                } else {
                    c.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parse the `a b A B` form (whitespace optional).
    pub fn parse_text(s: &str, alphabet: u32) -> Result<Word> {
        let mut raw = Vec::new();
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            if !c.is_ascii_alphabetic() {
                return Err(LieError::Usage(format!("bad letter '{c}' in word")));
            }
            let k = (c.to_ascii_lowercase() as u8 - b'a') as i32 + 1;
            raw.push(if c.is_ascii_uppercase() { -k } else { k });
        }
        Word::reduce(&raw, alphabet)
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.letters.len().cmp(&other.letters.len()).then_with(|| {
            for (a, b) in self.letters.iter().zip(&other.letters) {
                match letter_key(*a).cmp(&letter_key(*b)) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&self.to_text())
        }
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.letters.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<i32>::deserialize(d)?;
        if raw.contains(&0) || !is_reduced(&raw) {
            return Err(serde::de::Error::custom("word is not reduced"));
        }
        Ok(Word { letters: raw })
    }
}

fn reduce_letters(raw: &[i32]) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::with_capacity(raw.len());
    for &l in raw {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

fn is_reduced(letters: &[i32]) -> bool {
    letters.windows(2).all(|w| w[0] != -w[1])
}

/// Ordered M-tuple of elements of one group.
#[derive(Clone, Debug, PartialEq)]
pub struct Tuple {
    kind: GroupKind,
    elements: Vec<GroupElement>,
}

impl Tuple {
    pub fn new(elements: Vec<GroupElement>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| LieError::Usage("empty tuple".into()))?;
        let kind = first.kind();
        for g in &elements {
            if g.kind() != kind {
                return Err(LieError::Usage("tuple mixes groups".into()));
            }
            let r = g.membership_residual();
            if !(r <= MEMBERSHIP_TOL) {
                return Err(LieError::InvalidElement { residual: r });
            }
        }
        Ok(Tuple { kind, elements })
    }

    pub fn pair(a: GroupElement, b: GroupElement) -> Result<Self> {
        Tuple::new(vec![a, b])
    }

    /// Seeded generic pair near the identity: each generator is `Exp(v)` with a random
    /// direction and norm drawn from [0.6, 1.0].
    pub fn from_seed(kind: GroupKind, seed: u64) -> Tuple {
        use rand::Rng;
        let mut rng = sampling::rng(seed ^ 0x5eed_0000_0000_0000);
        let elements = (0..2)
            .map(|_| {
                let r: f64 = rng.random_range(0.6..1.0);
                sampling::random_direction(kind, &mut rng).scale(r).exp()
            })
            .collect();
        Tuple { kind, elements }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn alphabet(&self) -> u32 {
        self.elements.len() as u32
    }

    /// Hex digest of the bit patterns of all matrix entries.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.name().as_bytes());
        for g in &self.elements {
            for x in g.entries() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    /// Perturb each element on the right by `Exp` of the matching block of `xi`.
    pub fn perturbed(&self, xi: &DVector<f64>) -> Tuple {
        let n = self.kind.spec().algebra_dim;
        let elements = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let v = AlgebraElement::new(self.kind, xi.rows(i * n, n).into_owned());
                g.mul(&v.exp())
            })
            .collect();
        Tuple { kind: self.kind, elements }
    }

    /// Product metric: sum of component distances.
    pub fn distance(&self, other: &Tuple) -> f64 {
        self.elements
            .iter()
            .zip(&other.elements)
            .map(|(a, b)| crate::lie::distance(a, b))
            .sum()
    }

    pub(crate) fn evaluator(&self) -> Evaluator {
        Evaluator::new(self)
    }
}

/// Cached generator matrices and inverses for repeated evaluation.
pub(crate) struct Evaluator {
    kind: GroupKind,
    gens: Vec<DMatrix<f64>>,
    invs: Vec<DMatrix<f64>>,
}

impl Evaluator {
    pub(crate) fn new(t: &Tuple) -> Self {
        Evaluator {
            kind: t.kind,
            gens: t.elements.iter().map(|g| g.matrix().clone()).collect(),
            invs: t.elements.iter().map(|g| g.inverse().into_matrix()).collect(),
        }
    }

    pub(crate) fn letter(&self, l: i32) -> &DMatrix<f64> {
        let i = (l.unsigned_abs() - 1) as usize;
        if l > 0 {
            &self.gens[i]
        } else {
            &self.invs[i]
        }
    }

    pub(crate) fn eval_letters(&self, letters: &[i32]) -> DMatrix<f64> {
        let d = self.gens[0].nrows();
        let mut acc = DMatrix::<f64>::identity(d, d);
        let mut tmp = DMatrix::<f64>::zeros(d, d);
        for &l in letters {
            acc.mul_to(self.letter(l), &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
        }
        acc
    }

    pub(crate) fn eval(&self, w: &Word) -> GroupElement {
        GroupElement::from_matrix_unchecked(self.kind, self.eval_letters(&w.letters))
    }
}

/// Value of `w` at the tuple; the empty word gives the identity.
pub fn evaluate(w: &Word, t: &Tuple) -> Result<GroupElement> {
    if w.max_symbol() > t.alphabet() {
        return Err(LieError::Usage(format!(
            "word uses symbol {} but the tuple has {} elements",
            w.max_symbol(),
            t.alphabet()
        )));
    }
    Ok(t.evaluator().eval(w))
}

/// Left-trivialized Jacobian of `xi -> w(t * exp(xi))` at 0, an `n x (M n)` matrix.
///
/// Accumulates `D(uv) = D(v) + Ad_v^-1 D(u)` letter by letter.
pub fn word_jacobian(w: &Word, t: &Tuple) -> Result<DMatrix<f64>> {
    if w.max_symbol() > t.alphabet() {
        return Err(LieError::Usage("word uses symbols outside the tuple".into()));
    }
    let n = t.kind.spec().algebra_dim;
    let m = t.len();
    let ad_g: Vec<DMatrix<f64>> = t.elements.iter().map(adjoint).collect();
    let ad_gi: Vec<DMatrix<f64>> = t.elements.iter().map(|g| adjoint(&g.inverse())).collect();
    let mut jac = DMatrix::<f64>::zeros(n, m * n);
    for &l in &w.letters {
        let i = (l.unsigned_abs() - 1) as usize;
        if l > 0 {
            jac = &ad_gi[i] * &jac;
            let mut block = jac.columns_mut(i * n, n);
            block += DMatrix::<f64>::identity(n, n);
        } else {
            // (a e^{uv})^-1 = a^-1 e^{-u Ad_a v}
            jac = &ad_g[i] * &jac;
            let mut block = jac.columns_mut(i * n, n);
            block -= &ad_g[i];
        }
    }
    Ok(jac)
}

/// Left-trivialized derivative of `u -> w(t * exp(u dir))` at `u = 0`.
pub fn word_derivative(w: &Word, t: &Tuple, dir: &[AlgebraElement]) -> Result<AlgebraElement> {
    if dir.len() != t.len() {
        return Err(LieError::Usage("direction count differs from tuple size".into()));
    }
    if w.max_symbol() > t.alphabet() {
        return Err(LieError::Usage("word uses symbols outside the tuple".into()));
    }
    let n = t.kind.spec().algebra_dim;
    let mut acc = DVector::<f64>::zeros(n);
    for &l in &w.letters {
        let i = (l.unsigned_abs() - 1) as usize;
        let g = &t.elements[i];
        if l > 0 {
            acc = adjoint(&g.inverse()) * acc + &dir[i].coords;
        } else {
            let a = adjoint(g);
            acc = &a * acc - &a * &dir[i].coords;
        }
    }
    Ok(AlgebraElement::new(t.kind, acc))
}

/// Symbolic `phi_g^k(h)` with `phi_g(h) = g h g^-1 h^-1`.
pub fn iterated_commutator(g: &Word, h: &Word, k: u32) -> Result<Word> {
    let projected = iterated_commutator_bound(g.len(), h.len(), k);
    if k > 30 || projected > MAX_SYMBOLIC_LEN as u128 {
        return Err(LieError::Size(format!(
            "iterated commutator of depth {k} may reach {projected} letters"
        )));
    }
    let mut w = h.clone();
    for _ in 0..k {
        w = g.commutator(&w);
    }
    Ok(w)
}

/// `2k|g| + 2^k (|h| + 2|g|)`, an upper bound for the depth-k iterated commutator.
pub fn iterated_commutator_bound(g_len: usize, h_len: usize, k: u32) -> u128 {
    let p = 1u128.checked_shl(k).unwrap_or(u128::MAX);
    (2 * k as u128 * g_len as u128).saturating_add(p.saturating_mul((h_len + 2 * g_len) as u128))
}

/// Left-nested commutator `[...[[w1, w2], w3], ..., ws]`.
pub fn nested_product_commutator(ws: &[Word]) -> Result<Word> {
    if ws.len() < 2 {
        return Err(LieError::Usage("nested commutator needs at least two words".into()));
    }
    let mut acc = ws[0].clone();
    for w in &ws[1..] {
        acc = acc.commutator(w);
    }
    Ok(acc)
}

/// All reduced words of length `<= max_len` in shortlex order.
pub fn enumerate_reduced(alphabet: u32, max_len: usize) -> Vec<Word> {
    let letters = alphabet_letters(alphabet);
    let mut out = vec![Word::empty()];
    let mut start = 0;
    for _ in 0..max_len {
        let end = out.len();
        for i in start..end {
            let last = out[i].letters.last().copied();
            for &l in &letters {
                if last == Some(-l) {
                    continue;
                }
                let mut next = out[i].letters.clone();
                next.push(l);
                out.push(Word { letters: next });
            }
        }
        start = end;
    }
    out
}

/// Letters in canonical order `1, -1, 2, -2, ...`.
pub fn alphabet_letters(alphabet: u32) -> Vec<i32> {
    (1..=alphabet as i32).flat_map(|k| [k, -k]).collect()
}

/// Number of reduced words of length `<= len` over `alphabet` symbols.
pub fn reduced_word_count(alphabet: u32, len: usize) -> u64 {
    let m = alphabet as u64;
    let mut total = 1;
    let mut level = 2 * m;
    for _ in 0..len {
        total += level;
        level *= 2 * m - 1;
    }
    total
}
