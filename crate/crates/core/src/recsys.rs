//! Rating prediction and top-N ranking over completed tensors.
//!
//! 2-D tensors are `users x products`; 3-D tensors are
//! `users x features x products` and are projected onto `(user, product)`
//! by taking the maximum over the feature dimension.

use thiserror::Error;

use crate::completion::CompletedTensor;
use crate::tensor::TensorError;

#[derive(Debug, Error, PartialEq)]
pub enum RecsysError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected a {expected}-D model, got {got}-D")]
    WrongArity { expected: usize, got: usize },
    #[error("feature list is empty")]
    NoFeatures,
    #[error("n must be at least 1")]
    ZeroN,
}

pub type Result<T> = std::result::Result<T, RecsysError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Observed,
    Completed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub user: usize,
    pub product: usize,
    pub rating: f64,
    pub source: Source,
    /// Feature slice attaining the maximum (3-D models only).
    pub argmax_feature: Option<usize>,
}

fn require_ndim(model: &CompletedTensor, ndim: usize) -> Result<()> {
    if model.shape().len() != ndim {
        return Err(RecsysError::WrongArity {
            expected: ndim,
            got: model.shape().len(),
        });
    }
    Ok(())
}

/// Rating of `product` by `user` in a 2-D model.
pub fn predict_2d(model: &CompletedTensor, user: usize, product: usize) -> Result<Prediction> {
    require_ndim(model, 2)?;
    let index = [user, product];
    model.source().check_index(&index)?;
    let (rating, source) = match model.source().get(&index) {
        Some(v) => (v, Source::Observed),
        None => (model.model().scales.inverse_factor(&index), Source::Completed),
    };
    Ok(Prediction {
        user,
        product,
        rating,
        source,
        argmax_feature: None,
    })
}

/// Maximum of the completed fiber `[user, f, product]` over `features`, with
/// ties going to the lowest feature index.
pub fn predict_3d_masked(
    model: &CompletedTensor,
    user: usize,
    product: usize,
    features: &[usize],
) -> Result<Prediction> {
    require_ndim(model, 3)?;
    if features.is_empty() {
        return Err(RecsysError::NoFeatures);
    }
    let mut best: Option<(f64, usize, Source)> = None;
    for &f in features {
        let index = [user, f, product];
        model.source().check_index(&index)?;
        let (v, src) = match model.source().get(&index) {
            Some(v) => (v, Source::Observed),
            None => (model.model().scales.inverse_factor(&index), Source::Completed),
        };
        let better = match best {
            None => true,
            Some((bv, bf, _)) => v > bv || (v == bv && f < bf),
        };
        if better {
            best = Some((v, f, src));
        }
    }
    let (rating, f, source) = best.expect("non-empty feature list");
    Ok(Prediction {
        user,
        product,
        rating,
        source,
        argmax_feature: Some(f),
    })
}

/// Max-projection over the full feature dimension.
pub fn predict_3d(model: &CompletedTensor, user: usize, product: usize) -> Result<Prediction> {
    require_ndim(model, 3)?;
    let features: Vec<usize> = (0..model.shape()[1]).collect();
    predict_3d_masked(model, user, product, &features)
}

/// Products ranked for `user` by predicted rating, highest first, ties by
/// ascending product index. 3-D models rank by max-projection over
/// `features` (all features when `None`).
pub fn top_n(
    model: &CompletedTensor,
    user: usize,
    n: usize,
    exclude_observed: bool,
    features: Option<&[usize]>,
) -> Result<Vec<Prediction>> {
    if n == 0 {
        return Err(RecsysError::ZeroN);
    }
    let shape = model.shape();
    let ndim = shape.len();
    if !(ndim == 2 || ndim == 3) {
        return Err(RecsysError::WrongArity { expected: 2, got: ndim });
    }
    if user >= shape[0] {
        let mut index = vec![0; ndim];
        index[0] = user;
        return Err(TensorError::IndexOutOfBounds {
            index,
            shape: shape.to_vec(),
        }
        .into());
    }
    let all: Vec<usize> = if ndim == 3 { (0..shape[1]).collect() } else { Vec::new() };
    let feats = features.unwrap_or(&all);
    let n_products = shape[ndim - 1];
    let mut preds = Vec::with_capacity(n_products);
    for p in 0..n_products {
        let pred = if ndim == 2 {
            predict_2d(model, user, p)?
        } else {
            predict_3d_masked(model, user, p, feats)?
        };
        if exclude_observed && pred.source == Source::Observed {
            continue;
        }
        preds.push(pred);
    }
    preds.sort_by(|a, b| b.rating.total_cmp(&a.rating).then(a.product.cmp(&b.product)));
    preds.truncate(n);
    Ok(preds)
}
