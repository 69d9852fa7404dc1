//! Sparse coordinate-list tensors, subtensor families and latent scalings.
//!
//! A [`SparseTensor`] stores only its observed (strictly positive) entries;
//! every absent cell is unobserved. A *family-k* subtensor is obtained by
//! fixing `D - k` coordinates and letting the remaining `k` range freely. It
//! is identified by a [`SubtensorKey`] with exactly `k` null slots.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("tensor shape must have at least one dimension")]
    EmptyShape,
    #[error("dimension {dim} has size 0")]
    ZeroDimension { dim: usize },
    #[error("shape {0:?} has too many cells to address")]
    ShapeTooLarge(Vec<usize>),
    #[error("index {index:?} has {got} coordinates, tensor has {expected} dimensions")]
    DimensionMismatch {
        index: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("value {value} at {index:?} is not strictly positive (zero marks an unobserved cell)")]
    NonPositiveValue { index: Vec<usize>, value: f64 },
    #[error("value at {index:?} is not finite")]
    NonFiniteValue { index: Vec<usize> },
    #[error("index {index:?} is out of bounds for shape {shape:?}")]
    IndexOutOfBounds { index: Vec<usize>, shape: Vec<usize> },
    #[error("index {0:?} appears more than once")]
    DuplicateIndex(Vec<usize>),
    #[error("subtensor dimensionality k={k} must lie in [1, {}]", .ndim.saturating_sub(1))]
    InvalidK { k: usize, ndim: usize },
    #[error("subtensor key {key} does not fit shape {shape:?} with k={k}")]
    InvalidKey {
        key: SubtensorKey,
        shape: Vec<usize>,
        k: usize,
    },
    #[error("scale {value} for key {key} is not strictly positive")]
    NonPositiveScale { key: SubtensorKey, value: f64 },
    #[error("scale set (shape {scales:?}) does not conform to tensor shape {tensor:?}")]
    ShapeMismatch { tensor: Vec<usize>, scales: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(TensorError::EmptyShape);
    }
    if let Some(dim) = shape.iter().position(|&n| n == 0) {
        return Err(TensorError::ZeroDimension { dim });
    }
    shape
        .iter()
        .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64))
        .ok_or_else(|| TensorError::ShapeTooLarge(shape.to_vec()))?;
    Ok(())
}

fn validate_k(ndim: usize, k: usize) -> Result<()> {
    if k == 0 || k >= ndim {
        return Err(TensorError::InvalidK { k, ndim });
    }
    Ok(())
}

fn check_bounds(index: &[usize], shape: &[usize]) -> Result<()> {
    if index.len() != shape.len() {
        return Err(TensorError::DimensionMismatch {
            index: index.to_vec(),
            expected: shape.len(),
            got: index.len(),
        });
    }
    if index.iter().zip(shape).any(|(&i, &n)| i >= n) {
        return Err(TensorError::IndexOutOfBounds {
            index: index.to_vec(),
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

/// Row-major code of `index` restricted to `dims`. Lexicographic order of the
/// restricted coordinates coincides with numeric order of the code.
fn code_over(index: &[usize], shape: &[usize], dims: &[usize]) -> u64 {
    dims.iter()
        .fold(0u64, |acc, &d| acc * shape[d] as u64 + index[d] as u64)
}

/// A D-dimensional sparse tensor of strictly positive observed values.
///
/// Entries are kept in lexicographic index order, so iteration is
/// deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    shape: Vec<usize>,
    coords: Vec<usize>,
    values: Vec<f64>,
    codes: Vec<u64>,
}

impl SparseTensor {
    /// Builds a validated tensor from `(index, value)` pairs in any order.
    pub fn new<I>(shape: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        validate_shape(&shape)?;
        let all: Vec<usize> = (0..shape.len()).collect();
        let mut staged: Vec<(u64, Vec<usize>, f64)> = Vec::new();
        for (index, value) in entries {
            check_bounds(&index, &shape)?;
            if value.is_nan() || value.is_infinite() {
                return Err(TensorError::NonFiniteValue { index });
            }
            if value <= 0.0 {
                return Err(TensorError::NonPositiveValue { index, value });
            }
            staged.push((code_over(&index, &shape, &all), index, value));
        }
        staged.sort_unstable_by_key(|(code, _, _)| *code);
        if let Some(w) = staged.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(TensorError::DuplicateIndex(w[1].1.clone()));
        }
        let mut coords = Vec::with_capacity(staged.len() * shape.len());
        let mut values = Vec::with_capacity(staged.len());
        let mut codes = Vec::with_capacity(staged.len());
        for (code, index, value) in staged {
            coords.extend_from_slice(&index);
            values.push(value);
            codes.push(code);
        }
        Ok(Self {
            shape,
            coords,
            values,
            codes,
        })
    }

    /// Same observed pattern as `self` with replaced values. Caller guarantees
    /// positivity.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        debug_assert!(values.iter().all(|&v| v > 0.0));
        Self {
            shape: self.shape.clone(),
            coords: self.coords.clone(),
            values,
            codes: self.codes.clone(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of observed entries, `|Known(A)|`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of cells in the index space.
    pub fn num_cells(&self) -> u64 {
        self.shape.iter().map(|&n| n as u64).product()
    }

    /// Index of the `e`-th stored entry.
    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, e: usize) -> &[usize] {
        let d = self.ndim();
        &self.coords[e * d..(e + 1) * d]
    }

    pub fn value(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.coords.chunks_exact(self.ndim()).zip(self.values.iter().copied())
    }

    /// Position of `index` among the stored entries, if observed.
    pub fn position(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.ndim() || index.iter().zip(&self.shape).any(|(&i, &n)| i >= n) {
            return None;
        }
        let all: Vec<usize> = (0..self.ndim()).collect();
        let code = code_over(index, &self.shape, &all);
        self.codes.binary_search(&code).ok()
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.position(index).map(|e| self.values[e])
    }

    pub fn is_observed(&self, index: &[usize]) -> bool {
        self.position(index).is_some()
    }

    pub fn check_index(&self, index: &[usize]) -> Result<()> {
        check_bounds(index, &self.shape)
    }
}

/// Identifies one subtensor: fixed coordinates in some slots, `None` in the
/// `k` free slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubtensorKey(Vec<Option<usize>>);

impl SubtensorKey {
    pub fn new(coords: Vec<Option<usize>>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[Option<usize>] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    /// Positions of the null slots.
    pub fn free_dims(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(d, c)| c.is_none().then_some(d))
            .collect()
    }

    pub fn fixed_dims(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(d, c)| c.is_some().then_some(d))
            .collect()
    }

    /// Whether the full index `index` lies inside this subtensor.
    pub fn contains(&self, index: &[usize]) -> bool {
        index.len() == self.0.len() && self.0.iter().zip(index).all(|(c, &i)| c.is_none_or(|c| c == i))
    }

    fn validate(&self, shape: &[usize], k: usize) -> Result<()> {
        let fits = self.0.len() == shape.len()
            && self.free_dims().len() == k
            && self.0.iter().zip(shape).all(|(c, &n)| c.is_none_or(|c| c < n));
        if fits {
            Ok(())
        } else {
            Err(TensorError::InvalidKey {
                key: self.clone(),
                shape: shape.to_vec(),
                k,
            })
        }
    }
}

impl fmt::Display for SubtensorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (d, c) in self.0.iter().enumerate() {
            if d > 0 {
                write!(f, ",")?;
            }
            match c {
                Some(i) => write!(f, "{i}")?,
                None => write!(f, "_")?,
            }
        }
        write!(f, "]")
    }
}

/// One family of subtensors: all keys sharing the same set of fixed
/// dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    fixed: Vec<usize>,
}

impl Family {
    pub fn fixed_dims(&self) -> &[usize] {
        &self.fixed
    }

    /// Number of keys in this family for `shape`.
    pub fn size(&self, shape: &[usize]) -> u64 {
        self.fixed.iter().map(|&d| shape[d] as u64).product()
    }

    fn code(&self, index: &[usize], shape: &[usize]) -> u64 {
        code_over(index, shape, &self.fixed)
    }

    fn key_from_code(&self, mut code: u64, shape: &[usize]) -> SubtensorKey {
        let mut coords = vec![None; shape.len()];
        for &d in self.fixed.iter().rev() {
            let n = shape[d] as u64;
            coords[d] = Some((code % n) as usize);
            code /= n;
        }
        SubtensorKey(coords)
    }

    fn code_of_key(&self, key: &SubtensorKey, shape: &[usize]) -> u64 {
        self.fixed.iter().fold(0u64, |acc, &d| {
            acc * shape[d] as u64 + key.0[d].expect("fixed slot") as u64
        })
    }
}

/// The families of `k`-dimensional subtensors of a `ndim`-dimensional
/// tensor, ordered lexicographically by their fixed-dimension subsets.
pub fn families(ndim: usize, k: usize) -> Result<Vec<Family>> {
    validate_k(ndim, k)?;
    let r = ndim - k;
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..r).collect();
    loop {
        out.push(Family { fixed: combo.clone() });
        // advance to the next r-combination of 0..ndim
        let mut i = r;
        while i > 0 && combo[i - 1] == ndim - r + (i - 1) {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..r {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(out)
}

fn family_of(families: &[Family], key: &SubtensorKey) -> Option<usize> {
    let fixed = key.fixed_dims();
    families.iter().position(|f| f.fixed == fixed)
}

/// Every family-`k` key of `shape`, family by family, keys lexicographic.
pub fn enumerate_subtensors(shape: &[usize], k: usize) -> Result<Vec<SubtensorKey>> {
    validate_shape(shape)?;
    let fams = families(shape.len(), k)?;
    let mut out = Vec::new();
    for fam in &fams {
        out.extend((0..fam.size(shape)).map(|c| fam.key_from_code(c, shape)));
    }
    Ok(out)
}

/// The `C(D, D-k)` family-`k` keys whose subtensors contain `index`.
pub fn containing_keys(index: &[usize], k: usize, shape: &[usize]) -> Result<Vec<SubtensorKey>> {
    validate_shape(shape)?;
    check_bounds(index, shape)?;
    let fams = families(shape.len(), k)?;
    Ok(fams
        .iter()
        .map(|fam| fam.key_from_code(fam.code(index, shape), shape))
        .collect())
}

/// Inverted index from each non-empty family-k subtensor to the positions of
/// its observed entries.
#[derive(Debug, Clone)]
pub struct SubtensorIndex {
    shape: Vec<usize>,
    k: usize,
    families: Vec<FamilyIndex>,
}

#[derive(Debug, Clone)]
pub struct FamilyIndex {
    family: Family,
    /// Sorted codes of the non-empty keys.
    keys: Vec<u64>,
    /// `members[offsets[s]..offsets[s + 1]]` are the entries of slot `s`.
    offsets: Vec<usize>,
    members: Vec<usize>,
    /// Slot of each tensor entry within this family.
    entry_slot: Vec<usize>,
}

impl FamilyIndex {
    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Number of non-empty subtensors in the family.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn members(&self, slot: usize) -> &[usize] {
        &self.members[self.offsets[slot]..self.offsets[slot + 1]]
    }

    pub fn entry_slot(&self) -> &[usize] {
        &self.entry_slot
    }

    pub fn key_codes(&self) -> &[u64] {
        &self.keys
    }
}

impl SubtensorIndex {
    pub fn build(tensor: &SparseTensor, k: usize) -> Result<Self> {
        let shape = tensor.shape().to_vec();
        let fams = families(shape.len(), k)?;
        let families = fams
            .into_par_iter()
            .map(|family| {
                let codes: Vec<u64> = (0..tensor.nnz())
                    .map(|e| family.code(tensor.index(e), &shape))
                    .collect();
                let mut order: Vec<usize> = (0..tensor.nnz()).collect();
                order.sort_by_key(|&e| codes[e]);
                let mut keys = Vec::new();
                let mut offsets = vec![0];
                let mut entry_slot = vec![0; tensor.nnz()];
                for (pos, &e) in order.iter().enumerate() {
                    if keys.last() != Some(&codes[e]) {
                        if !keys.is_empty() {
                            offsets.push(pos);
                        }
                        keys.push(codes[e]);
                    }
                    entry_slot[e] = keys.len() - 1;
                }
                offsets.push(order.len());
                FamilyIndex {
                    family,
                    keys,
                    offsets,
                    members: order,
                    entry_slot,
                }
            })
            .collect();
        Ok(Self { shape, k, families })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn families(&self) -> &[FamilyIndex] {
        &self.families
    }

    /// Total number of non-empty subtensors over all families.
    pub fn num_keys(&self) -> usize {
        self.families.iter().map(FamilyIndex::len).sum()
    }

    pub fn key(&self, family: usize, slot: usize) -> SubtensorKey {
        let f = &self.families[family];
        f.family.key_from_code(f.keys[slot], &self.shape)
    }

    /// Non-empty keys with their observed-entry counts.
    pub fn key_counts(&self) -> Vec<(SubtensorKey, usize)> {
        let mut out = Vec::with_capacity(self.num_keys());
        for (fi, f) in self.families.iter().enumerate() {
            for slot in 0..f.len() {
                out.push((self.key(fi, slot), f.members(slot).len()));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FamilyScales {
    fixed: Vec<usize>,
    keys: Vec<u64>,
    values: Vec<f64>,
}

/// Strictly positive scales attached to family-k subtensor keys. Keys not
/// present carry the implicit scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSet {
    shape: Vec<usize>,
    k: usize,
    families: Vec<FamilyScales>,
}

impl ScaleSet {
    /// An empty scale set (every key at the implicit scale 1).
    pub fn identity(shape: &[usize], k: usize) -> Result<Self> {
        validate_shape(shape)?;
        let families = families(shape.len(), k)?
            .into_iter()
            .map(|f| FamilyScales {
                fixed: f.fixed,
                keys: Vec::new(),
                values: Vec::new(),
            })
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            k,
            families,
        })
    }

    /// Builds a scale set from explicit `(key, scale)` pairs. Later pairs
    /// override earlier ones for the same key.
    pub fn from_pairs<I>(shape: &[usize], k: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SubtensorKey, f64)>,
    {
        let mut set = Self::identity(shape, k)?;
        let fams = families(shape.len(), k)?;
        let mut staged: Vec<Vec<(u64, f64)>> = vec![Vec::new(); fams.len()];
        for (key, value) in pairs {
            key.validate(shape, k)?;
            if !(value > 0.0 && value.is_finite()) {
                return Err(TensorError::NonPositiveScale { key, value });
            }
            let fi = family_of(&fams, &key).expect("validated key has a family");
            staged[fi].push((fams[fi].code_of_key(&key, shape), value));
        }
        for (fs, mut pairs) in set.families.iter_mut().zip(staged) {
            // stable sort keeps insertion order among equal codes; keep the last
            pairs.sort_by_key(|(c, _)| *c);
            for (c, v) in pairs {
                if fs.keys.last() == Some(&c) {
                    *fs.values.last_mut().unwrap() = v;
                } else {
                    fs.keys.push(c);
                    fs.values.push(v);
                }
            }
        }
        Ok(set)
    }

    /// Builds a scale set aligned with `index`, one value per non-empty key
    /// (`values[family][slot]`).
    pub(crate) fn from_index(index: &SubtensorIndex, values: Vec<Vec<f64>>) -> Self {
        let families = index
            .families
            .iter()
            .zip(values)
            .map(|(f, values)| FamilyScales {
                fixed: f.family.fixed.clone(),
                keys: f.keys.clone(),
                values,
            })
            .collect();
        Self {
            shape: index.shape.clone(),
            k: index.k,
            families,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of explicitly stored keys.
    pub fn len(&self) -> usize {
        self.families.iter().map(|f| f.keys.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lookup(&self, family: usize, code: u64) -> Option<f64> {
        let f = &self.families[family];
        f.keys.binary_search(&code).ok().map(|s| f.values[s])
    }

    /// Explicit scale for `key`, if stored.
    pub fn get(&self, key: &SubtensorKey) -> Option<f64> {
        if key.validate(&self.shape, self.k).is_err() {
            return None;
        }
        let fams = families(self.shape.len(), self.k).ok()?;
        let fi = family_of(&fams, key)?;
        self.lookup(fi, fams[fi].code_of_key(key, &self.shape))
    }

    /// Scale for `key`, defaulting to 1.
    pub fn scale(&self, key: &SubtensorKey) -> f64 {
        self.get(key).unwrap_or(1.0)
    }

    fn family_code(&self, family: usize, index: &[usize]) -> u64 {
        code_over(index, &self.shape, &self.families[family].fixed)
    }

    /// Product of the scales of every key containing `index` (implicit 1 for
    /// absent keys). `index` must be in bounds.
    pub fn factor(&self, index: &[usize]) -> f64 {
        (0..self.families.len())
            .map(|fi| self.lookup(fi, self.family_code(fi, index)).unwrap_or(1.0))
            .product()
    }

    /// Product of the inverse scales of every key containing `index`.
    pub fn inverse_factor(&self, index: &[usize]) -> f64 {
        (0..self.families.len())
            .map(|fi| self.lookup(fi, self.family_code(fi, index)).map_or(1.0, |z| 1.0 / z))
            .product()
    }

    /// Whether every key containing `index` has an explicit scale.
    pub fn covers(&self, index: &[usize]) -> bool {
        (0..self.families.len()).all(|fi| self.lookup(fi, self.family_code(fi, index)).is_some())
    }

    pub fn iter(&self) -> impl Iterator<Item = (SubtensorKey, f64)> + '_ {
        self.families.iter().flat_map(move |f| {
            let fam = Family { fixed: f.fixed.clone() };
            f.keys
                .iter()
                .zip(&f.values)
                .map(move |(&c, &v)| (fam.key_from_code(c, &self.shape), v))
        })
    }

    /// Element-wise inverse.
    pub fn inverse(&self) -> Self {
        let mut out = self.clone();
        for f in &mut out.families {
            for v in &mut f.values {
                *v = 1.0 / *v;
            }
        }
        out
    }

    /// Hadamard product; keys missing on one side count as 1.
    pub fn hadamard(&self, other: &ScaleSet) -> Result<Self> {
        if self.shape != other.shape || self.k != other.k {
            return Err(TensorError::ShapeMismatch {
                tensor: self.shape.clone(),
                scales: other.shape.clone(),
            });
        }
        let mut pairs: Vec<(SubtensorKey, f64)> = self.iter().collect();
        for (key, v) in other.iter() {
            pairs.push((key.clone(), self.scale(&key) * v));
        }
        Self::from_pairs(&self.shape, self.k, pairs)
    }
}

/// Latent scaling `Z *_k A`: every observed entry is multiplied by the
/// scales of all subtensors containing it.
pub fn scale_apply(tensor: &SparseTensor, scales: &ScaleSet) -> Result<SparseTensor> {
    if tensor.shape() != scales.shape() {
        return Err(TensorError::ShapeMismatch {
            tensor: tensor.shape().to_vec(),
            scales: scales.shape().to_vec(),
        });
    }
    let values = tensor.iter().map(|(index, v)| v * scales.factor(index)).collect();
    Ok(tensor.with_values(values))
}

/// Binomial coefficient, small arguments only.
pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1, |acc, i| acc * (n - i) / (i + 1))
}
