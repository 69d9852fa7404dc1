//! Rating datasets: MovieLens and Jester parsers, demographic feature
//! encoding, k-fold splits and train/test tensor construction.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{SparseTensor, TensorError};

/// Sentinel for "not rated" in Jester rows.
pub const JESTER_UNRATED: f64 = 99.0;
pub const AGE_GROUPS: usize = 6;
pub const GENDERS: usize = 2;
pub const OCCUPATIONS: usize = 21;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("user features are required but no users file was loaded")]
    MissingFeatureFile,
    #[error("user {0} has no feature record")]
    MissingUserFeatures(u64),
    #[error("unknown feature category {0:?} (expected age, gender or occup)")]
    UnknownCategory(String),
    #[error("at least one feature category is required")]
    NoCategories,
    #[error("cannot split {records} records into {folds} folds")]
    TooFewRecords { records: usize, folds: usize },
    #[error("fold plan does not match dataset ({plan} assignments for {records} records)")]
    FoldMismatch { plan: usize, records: usize },
    #[error("test fold {fold} out of range for {n_folds} folds")]
    InvalidFold { fold: usize, n_folds: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn parse_err(line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MovieLensFormat {
    #[serde(rename = "1m")]
    OneM,
    #[serde(rename = "10m")]
    TenM,
}

impl MovieLensFormat {
    pub fn native_range(self) -> (f64, f64) {
        match self {
            MovieLensFormat::OneM => (1.0, 5.0),
            MovieLensFormat::TenM => (0.5, 5.0),
        }
    }

    fn valid(self, rating: f64) -> bool {
        let (lo, hi) = self.native_range();
        let step_ok = match self {
            MovieLensFormat::OneM => rating.fract() == 0.0,
            MovieLensFormat::TenM => (rating * 2.0).fract() == 0.0,
        };
        rating >= lo && rating <= hi && step_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: u64,
    pub product_id: u64,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    /// Position inside the gender feature block.
    pub fn index(self) -> usize {
        match self {
            Gender::Female => 0,
            Gender::Male => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFeatures {
    pub user_id: u64,
    pub gender: Gender,
    pub age: u32,
    pub occupation: u8,
}

impl UserFeatures {
    pub fn age_group(&self) -> usize {
        ((self.age / 10) as usize).min(AGE_GROUPS - 1)
    }
}

/// Raw dataset ids mapped to contiguous dense indices in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary(IndexSet<u64>);

impl Vocabulary {
    pub fn insert(&mut self, raw: u64) -> usize {
        self.0.insert_full(raw).0
    }

    pub fn index_of(&self, raw: u64) -> Option<usize> {
        self.0.get_index_of(&raw)
    }

    pub fn raw(&self, index: usize) -> Option<u64> {
        self.0.get_index(index).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<u64> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone)]
pub struct RatingsDataset {
    pub name: String,
    pub records: Vec<RatingRecord>,
    pub users: Vocabulary,
    pub products: Vocabulary,
    pub features: Option<BTreeMap<u64, UserFeatures>>,
    /// Added to every rating to make it strictly positive.
    pub shift: f64,
    pub native_range: (f64, f64),
    /// Repeated (user, product) records dropped at load time.
    pub duplicates: usize,
    pairs: Vec<(usize, usize)>,
}

impl RatingsDataset {
    /// Assembles a dataset, keeping the first record of each (user, product)
    /// pair. `users`/`products` may be pre-seeded so that entities without
    /// records still get an index.
    pub fn from_records(
        name: impl Into<String>,
        raw: Vec<RatingRecord>,
        mut users: Vocabulary,
        mut products: Vocabulary,
        shift: f64,
        native_range: (f64, f64),
    ) -> Self {
        let mut seen = std::collections::HashSet::with_capacity(raw.len());
        let mut records = Vec::with_capacity(raw.len());
        let mut pairs = Vec::with_capacity(raw.len());
        let mut duplicates = 0;
        for r in raw {
            if !seen.insert((r.user_id, r.product_id)) {
                duplicates += 1;
                continue;
            }
            let u = users.insert(r.user_id);
            let p = products.insert(r.product_id);
            pairs.push((u, p));
            records.push(r);
        }
        Self {
            name: name.into(),
            records,
            users,
            products,
            features: None,
            shift,
            native_range,
            duplicates,
            pairs,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Dense (user, product) indices of record `i`.
    pub fn pair(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    pub fn shifted(&self, i: usize) -> f64 {
        self.records[i].rating + self.shift
    }

    pub fn unshift(&self, value: f64) -> f64 {
        value - self.shift
    }

    pub fn has_features(&self) -> bool {
        self.features.is_some()
    }
}

/// Parses `UserID::MovieID::Rating::Timestamp` lines.
pub fn parse_movielens_ratings<R: BufRead>(reader: R, format: MovieLensFormat) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 '::' fields, got {}", fields.len()),
            ));
        }
        let user_id = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad user id {:?}", fields[0])))?;
        let product_id = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad movie id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad rating {:?}", fields[2])))?;
        if !format.valid(rating) {
            return Err(parse_err(lineno, format!("rating {rating} outside the native scale")));
        }
        let timestamp = fields[3]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad timestamp {:?}", fields[3])))?;
        out.push(RatingRecord {
            user_id,
            product_id,
            rating,
            timestamp: Some(timestamp),
        });
    }
    Ok(out)
}

/// Parses `UserID::Gender::Age::Occupation::Zip` lines.
pub fn parse_movielens_users<R: BufRead>(reader: R) -> Result<BTreeMap<u64, UserFeatures>> {
    let mut out = BTreeMap::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 5 {
            return Err(parse_err(
                lineno,
                format!("expected 5 '::' fields, got {}", fields.len()),
            ));
        }
        let user_id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad user id {:?}", fields[0])))?;
        let gender = match fields[1] {
            "F" => Gender::Female,
            "M" => Gender::Male,
            g => return Err(parse_err(lineno, format!("bad gender {g:?}"))),
        };
        let age = fields[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad age {:?}", fields[2])))?;
        let occupation: u8 = fields[3]
            .parse()
            .ok()
            .filter(|&o: &u8| (o as usize) < OCCUPATIONS)
            .ok_or_else(|| parse_err(lineno, format!("bad occupation {:?}", fields[3])))?;
        out.insert(
            user_id,
            UserFeatures {
                user_id,
                gender,
                age,
                occupation,
            },
        );
    }
    Ok(out)
}

pub fn load_movielens(
    ratings_path: &Path,
    users_path: Option<&Path>,
    format: MovieLensFormat,
) -> Result<RatingsDataset> {
    let records = parse_movielens_ratings(open(ratings_path)?, format)?;
    let name = match format {
        MovieLensFormat::OneM => "movielens1m",
        MovieLensFormat::TenM => "movielens10m",
    };
    let mut ds = RatingsDataset::from_records(
        name,
        records,
        Vocabulary::default(),
        Vocabulary::default(),
        0.0,
        format.native_range(),
    );
    if let Some(p) = users_path {
        ds.features = Some(parse_movielens_users(open(p)?)?);
    }
    Ok(ds)
}

/// Parses Jester rows: a leading count column (ignored), then one rating in
/// `[-10, 10]` per joke or [`JESTER_UNRATED`].
pub fn parse_jester<R: BufRead>(reader: R, delimiter: char) -> Result<RatingsDataset> {
    let mut records = Vec::new();
    let mut users = Vocabulary::default();
    let mut products = Vocabulary::default();
    let mut row = 0u64;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        users.insert(row);
        for (col, field) in line.split(delimiter).skip(1).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                continue;
            }
            let joke = col as u64 + 1;
            products.insert(joke);
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad rating {field:?}")))?;
            if v == JESTER_UNRATED {
                continue;
            }
            if !(-10.0..=10.0).contains(&v) {
                return Err(parse_err(lineno, format!("rating {v} outside [-10, 10]")));
            }
            records.push(RatingRecord {
                user_id: row,
                product_id: joke,
                rating: v,
                timestamp: None,
            });
        }
    }
    let min = records.iter().map(|r| r.rating).fold(f64::INFINITY, f64::min);
    let shift = if records.is_empty() { 0.0 } else { 1.0 - min };
    Ok(RatingsDataset::from_records(
        "jester2",
        records,
        users,
        products,
        shift,
        (-10.0, 10.0),
    ))
}

pub fn load_jester(path: &Path, delimiter: char) -> Result<RatingsDataset> {
    parse_jester(open(path)?, delimiter)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Age,
    Gender,
    #[serde(rename = "occup")]
    Occupation,
}

impl Category {
    pub fn block_size(self) -> usize {
        match self {
            Category::Age => AGE_GROUPS,
            Category::Gender => GENDERS,
            Category::Occupation => OCCUPATIONS,
        }
    }

    fn position(self, f: &UserFeatures) -> usize {
        match self {
            Category::Age => f.age_group(),
            Category::Gender => f.gender.index(),
            Category::Occupation => f.occupation as usize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Age => "age",
            Category::Gender => "gender",
            Category::Occupation => "occup",
        }
    }
}

impl FromStr for Category {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" => Ok(Category::Age),
            "gender" => Ok(Category::Gender),
            "occup" | "occupation" => Ok(Category::Occupation),
            other => Err(DataError::UnknownCategory(other.to_string())),
        }
    }
}

/// Parses a comma-separated category list such as `age,gender`.
pub fn parse_categories(list: &str) -> Result<Vec<Category>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Layout of the feature dimension: blocks for the included categories, in
/// the fixed order age, gender, occupation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureEncoding {
    categories: Vec<Category>,
    offsets: Vec<usize>,
    dim: usize,
    /// Feature indices of every user in the table.
    pub user_indices: BTreeMap<u64, Vec<usize>>,
}

impl FeatureEncoding {
    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// Size of the feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One feature index per included category.
    pub fn indices(&self, f: &UserFeatures) -> Vec<usize> {
        self.categories
            .iter()
            .zip(&self.offsets)
            .map(|(c, off)| off + c.position(f))
            .collect()
    }
}

pub fn encode_features(features: &BTreeMap<u64, UserFeatures>, categories: &[Category]) -> Result<FeatureEncoding> {
    if categories.is_empty() {
        return Err(DataError::NoCategories);
    }
    let mut cats = categories.to_vec();
    cats.sort_unstable();
    cats.dedup();
    let mut offsets = Vec::with_capacity(cats.len());
    let mut dim = 0;
    for c in &cats {
        offsets.push(dim);
        dim += c.block_size();
    }
    let mut enc = FeatureEncoding {
        categories: cats,
        offsets,
        dim,
        user_indices: BTreeMap::new(),
    };
    enc.user_indices = features.iter().map(|(&id, f)| (id, enc.indices(f))).collect();
    Ok(enc)
}

/// Random assignment of records to folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn new(n_records: usize, n_folds: usize, seed: u64) -> Result<Self> {
        if n_folds < 2 || n_records < n_folds {
            return Err(DataError::TooFewRecords {
                records: n_records,
                folds: n_folds,
            });
        }
        let mut perm: Vec<usize> = (0..n_records).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n_records];
        for (pos, &r) in perm.iter().enumerate() {
            assignment[r] = pos % n_folds;
        }
        Ok(Self {
            n_folds,
            seed,
            assignment,
        })
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    fn check(&self, records: usize, test_fold: usize) -> Result<()> {
        if self.assignment.len() != records {
            return Err(DataError::FoldMismatch {
                plan: self.assignment.len(),
                records,
            });
        }
        if test_fold >= self.n_folds {
            return Err(DataError::InvalidFold {
                fold: test_fold,
                n_folds: self.n_folds,
            });
        }
        Ok(())
    }
}

pub fn split_kfold(dataset: &RatingsDataset, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    FoldPlan::new(dataset.len(), n_folds, seed)
}

/// Held-out rating on the shifted scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint {
    pub user: usize,
    pub product: usize,
    pub truth: f64,
    /// Feature indices of the user (3-D splits only).
    pub features: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: SparseTensor,
    pub test: Vec<TestPoint>,
}

/// `users x products` tensor over all records (shifted values).
pub fn full_tensor_2d(dataset: &RatingsDataset) -> Result<SparseTensor> {
    Ok(SparseTensor::new(
        vec![dataset.users.len().max(1), dataset.products.len().max(1)],
        (0..dataset.len()).map(|i| {
            let (u, p) = dataset.pair(i);
            (vec![u, p], dataset.shifted(i))
        }),
    )?)
}

pub fn build_tensor_2d(dataset: &RatingsDataset, plan: &FoldPlan, test_fold: usize) -> Result<Split> {
    plan.check(dataset.len(), test_fold)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..dataset.len() {
        let (u, p) = dataset.pair(i);
        if plan.assignment[i] == test_fold {
            test.push(TestPoint {
                user: u,
                product: p,
                truth: dataset.shifted(i),
                features: Vec::new(),
            });
        } else {
            train.push((vec![u, p], dataset.shifted(i)));
        }
    }
    let shape = vec![dataset.users.len().max(1), dataset.products.len().max(1)];
    Ok(Split {
        train: SparseTensor::new(shape, train)?,
        test,
    })
}

fn user_feature_indices(dataset: &RatingsDataset, enc: &FeatureEncoding) -> Result<Vec<Vec<usize>>> {
    dataset
        .users
        .ids()
        .map(|id| {
            enc.user_indices
                .get(&id)
                .cloned()
                .ok_or(DataError::MissingUserFeatures(id))
        })
        .collect()
}

/// Encoding for `categories`, failing when the dataset has no user table.
pub fn feature_encoding(dataset: &RatingsDataset, categories: &[Category]) -> Result<FeatureEncoding> {
    let table = dataset.features.as_ref().ok_or(DataError::MissingFeatureFile)?;
    encode_features(table, categories)
}

/// `users x features x products` tensor over all records.
pub fn full_tensor_3d(dataset: &RatingsDataset, enc: &FeatureEncoding) -> Result<SparseTensor> {
    let per_user = user_feature_indices(dataset, enc)?;
    let mut entries = Vec::new();
    for i in 0..dataset.len() {
        let (u, p) = dataset.pair(i);
        for &f in &per_user[u] {
            entries.push((vec![u, f, p], dataset.shifted(i)));
        }
    }
    Ok(SparseTensor::new(
        vec![dataset.users.len().max(1), enc.dim(), dataset.products.len().max(1)],
        entries,
    )?)
}

/// Every training record is written once per feature index of its user; the
/// test mask keeps each held-out pair with its user's feature indices.
pub fn build_tensor_3d(
    dataset: &RatingsDataset,
    categories: &[Category],
    plan: &FoldPlan,
    test_fold: usize,
) -> Result<(Split, FeatureEncoding)> {
    let enc = feature_encoding(dataset, categories)?;
    plan.check(dataset.len(), test_fold)?;
    let per_user = user_feature_indices(dataset, &enc)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..dataset.len() {
        let (u, p) = dataset.pair(i);
        if plan.assignment[i] == test_fold {
            test.push(TestPoint {
                user: u,
                product: p,
                truth: dataset.shifted(i),
                features: per_user[u].clone(),
            });
        } else {
            for &f in &per_user[u] {
                train.push((vec![u, f, p], dataset.shifted(i)));
            }
        }
    }
    let shape = vec![dataset.users.len().max(1), enc.dim(), dataset.products.len().max(1)];
    Ok((
        Split {
            train: SparseTensor::new(shape, train)?,
            test,
        },
        enc,
    ))
}

/// Environment variable naming the directory that holds the datasets.
pub const DATA_DIR_ENV: &str = "LLI_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    MovieLens1M,
    MovieLens10M,
    Jester2,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::MovieLens1M => "movielens1m",
            DatasetKind::MovieLens10M => "movielens10m",
            DatasetKind::Jester2 => "jester2",
        }
    }

    /// Ratings file and optional users file below a data root, using the
    /// directory names of the public archives (`ml-1m`, `ml-10M100K`) and
    /// `jester2/jester.csv`.
    pub fn default_paths(self, root: &Path) -> (PathBuf, Option<PathBuf>) {
        match self {
            DatasetKind::MovieLens1M => (
                root.join("ml-1m").join("ratings.dat"),
                Some(root.join("ml-1m").join("users.dat")),
            ),
            DatasetKind::MovieLens10M => (root.join("ml-10M100K").join("ratings.dat"), None),
            DatasetKind::Jester2 => (root.join("jester2").join("jester.csv"), None),
        }
    }

    pub fn has_features(self) -> bool {
        self == DatasetKind::MovieLens1M
    }
}

/// `$LLI_DATA_DIR`, if set and non-empty.
pub fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Loads a dataset from explicit paths. The users file is only read for
/// MovieLens 1M.
pub fn load_dataset(kind: DatasetKind, ratings: &Path, users: Option<&Path>) -> Result<RatingsDataset> {
    match kind {
        DatasetKind::MovieLens1M => load_movielens(ratings, users, MovieLensFormat::OneM),
        DatasetKind::MovieLens10M => load_movielens(ratings, None, MovieLensFormat::TenM),
        DatasetKind::Jester2 => load_jester(ratings, ','),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn movielens_rating_line() {
        let recs = parse_movielens_ratings(Cursor::new("1::1193::5::978300760\n"), MovieLensFormat::OneM).unwrap();
        assert_eq!(
            recs,
            vec![RatingRecord {
                user_id: 1,
                product_id: 1193,
                rating: 5.0,
                timestamp: Some(978300760),
            }]
        );
    }

    #[test]
    fn movielens_rejects_out_of_range() {
        let err = parse_movielens_ratings(Cursor::new("1::2::5::1\n1::3::0::1\n"), MovieLensFormat::OneM).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
        assert!(parse_movielens_ratings(Cursor::new("1::2::3.5::1\n"), MovieLensFormat::OneM).is_err());
        let half = parse_movielens_ratings(Cursor::new("1::2::3.5::1\n1::3::0.5::2\n"), MovieLensFormat::TenM).unwrap();
        assert_eq!(half[0].rating, 3.5);
        assert!(parse_movielens_ratings(Cursor::new("1::2::3.25::1\n"), MovieLensFormat::TenM).is_err());
        assert!(parse_movielens_ratings(Cursor::new("1::2::3\n"), MovieLensFormat::OneM).is_err());
    }

    #[test]
    fn movielens_user_line() {
        let users = parse_movielens_users(Cursor::new("1::F::1::10::48067\n")).unwrap();
        assert_eq!(
            users[&1],
            UserFeatures {
                user_id: 1,
                gender: Gender::Female,
                age: 1,
                occupation: 10,
            }
        );
        assert!(parse_movielens_users(Cursor::new("1::X::1::10::48067\n")).is_err());
        assert!(parse_movielens_users(Cursor::new("1::M::1::21::48067\n")).is_err());
    }

    #[test]
    fn jester_shift_and_sentinels() {
        let ds = parse_jester(Cursor::new("3,-10.0,3.5,99\n0,99,99,99\n"), ',').unwrap();
        assert_eq!(ds.shift, 11.0);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.shifted(0), 1.0);
        assert_eq!(ds.shifted(1), 14.5);
        assert_eq!(ds.users.len(), 2);
        assert_eq!(ds.products.len(), 3);
        assert!(ds.records.iter().all(|r| r.user_id == 1));
        assert_eq!(ds.unshift(ds.shifted(1)), 3.5);
        let err = parse_jester(Cursor::new("1,-10.5\n"), ',').unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }));
        let tabs = parse_jester(Cursor::new("2\t1.0\t2.0\n"), '\t').unwrap();
        assert_eq!(tabs.shift, 0.0);
    }

    #[test]
    fn duplicates_keep_first() {
        let recs = parse_movielens_ratings(
            Cursor::new("1::2::5::1\n1::2::3::2\n2::2::4::3\n"),
            MovieLensFormat::OneM,
        )
        .unwrap();
        let ds = RatingsDataset::from_records("t", recs, Vocabulary::default(), Vocabulary::default(), 0.0, (1.0, 5.0));
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.duplicates, 1);
        assert_eq!(ds.records[0].rating, 5.0);
        assert_eq!(ds.pair(1), (1, 0));
    }

    fn user(age: u32, gender: Gender, occupation: u8) -> UserFeatures {
        UserFeatures {
            user_id: 1,
            gender,
            age,
            occupation,
        }
    }

    #[test]
    fn feature_encoding_blocks() {
        assert_eq!(user(56, Gender::Male, 0).age_group(), 5);
        assert_eq!(user(1, Gender::Male, 0).age_group(), 0);
        let table: BTreeMap<u64, UserFeatures> = [(1, user(25, Gender::Male, 10))].into();
        let enc = encode_features(&table, &[Category::Gender, Category::Age]).unwrap();
        assert_eq!(enc.dim(), 8);
        assert_eq!(enc.user_indices[&1], vec![2, 6 + Gender::Male.index()]);
        let enc = encode_features(&table, &[Category::Occupation]).unwrap();
        assert_eq!(enc.dim(), 21);
        assert_eq!(enc.user_indices[&1], vec![10]);
        let all = encode_features(&table, &parse_categories("age,gender,occup").unwrap()).unwrap();
        assert_eq!(all.dim(), 29);
        assert!(matches!(encode_features(&table, &[]), Err(DataError::NoCategories)));
        assert!(matches!(
            parse_categories("age,zip"),
            Err(DataError::UnknownCategory(_))
        ));
    }

    #[test]
    fn folds_partition_records() {
        let plan = FoldPlan::new(10, 5, 7).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2; 5]);
        assert_eq!(plan, FoldPlan::new(10, 5, 7).unwrap());
        assert_ne!(plan.assignment, FoldPlan::new(10, 5, 8).unwrap().assignment);
        let uneven = FoldPlan::new(13, 5, 1).unwrap();
        let sizes = uneven.fold_sizes();
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert!(matches!(FoldPlan::new(10, 1, 0), Err(DataError::TooFewRecords { .. })));
        assert!(matches!(FoldPlan::new(3, 5, 0), Err(DataError::TooFewRecords { .. })));
    }

    fn five_records() -> RatingsDataset {
        let text = "1::10::4::0\n1::11::3::0\n2::10::5::0\n2::12::2::0\n3::11::1::0\n";
        let recs = parse_movielens_ratings(Cursor::new(text), MovieLensFormat::OneM).unwrap();
        let mut ds =
            RatingsDataset::from_records("t", recs, Vocabulary::default(), Vocabulary::default(), 0.0, (1.0, 5.0));
        let users = "1::M::56::3::x\n2::F::25::0::x\n3::M::18::20::x\n";
        ds.features = Some(parse_movielens_users(Cursor::new(users)).unwrap());
        ds
    }

    #[test]
    fn tensor_2d_split() {
        let ds = five_records();
        let plan = split_kfold(&ds, 5, 3).unwrap();
        for fold in 0..5 {
            let split = build_tensor_2d(&ds, &plan, fold).unwrap();
            assert_eq!(split.train.nnz(), 4);
            assert_eq!(split.test.len(), 1);
            assert_eq!(split.train.shape(), &[3, 3]);
        }
        // user 3 has a single record; the fold holding it leaves row 2 empty
        let last = (0..5)
            .find(|&f| build_tensor_2d(&ds, &plan, f).unwrap().test[0].user == 2)
            .unwrap();
        let split = build_tensor_2d(&ds, &plan, last).unwrap();
        assert!(split.train.iter().all(|(i, _)| i[0] != 2));
        assert!(matches!(
            build_tensor_2d(&ds, &plan, 5),
            Err(DataError::InvalidFold { .. })
        ));
    }

    #[test]
    fn tensor_3d_split() {
        let ds = five_records();
        let plan = split_kfold(&ds, 5, 3).unwrap();
        let (split, enc) = build_tensor_3d(&ds, &[Category::Age, Category::Gender], &plan, 0).unwrap();
        assert_eq!(enc.dim(), 8);
        assert_eq!(split.train.nnz(), 8);
        assert_eq!(split.train.shape(), &[3, 8, 3]);
        assert_eq!(split.test[0].features.len(), 2);
        let (split, _) = build_tensor_3d(&ds, &[Category::Gender], &plan, 0).unwrap();
        assert_eq!(split.train.nnz(), 4);

        let mut bare = five_records();
        bare.features = None;
        assert!(matches!(
            build_tensor_3d(&bare, &[Category::Age], &plan, 0),
            Err(DataError::MissingFeatureFile)
        ));
    }
}
