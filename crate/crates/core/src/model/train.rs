use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss, Hyperparams, LossKind, MscnModel};
use crate::executor::LabeledQuery;
use crate::featurizer::{batch, build_catalog, featurize, EncodingCatalog, FeaturizedQuery, SampleMode};
use crate::neural::AdamState;
use crate::storage::Database;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mean_qerror: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MscnModel,
    pub history: Vec<EpochRecord>,
    pub train_size: usize,
    pub val_size: usize,
}

/// Deterministic 90/10 split of `n` items into (train, validation) indices.
/// At least one item lands on each side when `n >= 2`.
pub fn split_train_validation(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let val = if n >= 2 { (n / 10).max(1) } else { 0 };
    let train = idx.split_off(val);
    (train, idx)
}

// keeps the split stream apart from the initialization stream
const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn mean_qerror(model: &MscnModel, set: &[FeaturizedQuery], batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let k = model.catalog.log_span();
    let mut total = 0.0;
    for chunk in set.chunks(batch_size) {
        let refs: Vec<&FeaturizedQuery> = chunk.iter().collect();
        let b = batch(&refs)?;
        let y = model.predict_normalized(&b)?;
        let labels = b.labels.as_ref().ok_or_else(|| Error::InvalidArgument("unlabeled query".into()))?;
        let lv = loss(&y, labels, LossKind::MeanQError, k)?;
        total += lv.value * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Mini-batch Adam for `hp.epochs` epochs. The last-epoch model is returned;
/// the validation set is only used for the per-epoch history.
pub fn train(
    catalog: EncodingCatalog,
    train_set: &[FeaturizedQuery],
    val_set: &[FeaturizedQuery],
    hp: &Hyperparams,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let mut model = MscnModel::new(catalog, hp.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(1));
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(hp.epochs);
    let k = model.catalog.log_span();

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let refs: Vec<&FeaturizedQuery> = chunk.iter().map(|&i| &train_set[i]).collect();
            let b = batch(&refs)?;
            let labels = b.labels.as_ref().ok_or_else(|| Error::InvalidArgument("unlabeled training query".into()))?;
            let (y, cache) = model.forward(&b)?;
            let lv = loss(&y, labels, hp.loss, k)?;
            let grads = model.backward(&cache, &lv.grad);
            crate::neural::adam_step(&mut params, &grads, &mut adam, hp.lr)?;
            model.set_params(&params)?;
            epoch_loss += lv.value * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_mean_qerror: mean_qerror(&model, val_set, hp.batch_size.max(256))?,
        };
        if !record.train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        history.push(record);
    }
    Ok(TrainOutcome {
        model,
        history,
        train_size: train_set.len(),
        val_size: val_set.len(),
    })
}

/// Builds the catalog from the corpus labels, splits 90/10 and trains.
pub fn train_on_corpus(
    db: &Database,
    corpus: &[LabeledQuery],
    mode: SampleMode,
    hp: &Hyperparams,
) -> Result<TrainOutcome> {
    let labels: Vec<u64> = corpus.iter().map(|q| q.true_cardinality).collect();
    let sample_size = corpus
        .iter()
        .flat_map(|q| q.bitmaps.values())
        .map(|b| b.len())
        .next()
        .unwrap_or(0);
    let catalog = build_catalog(db, &labels, sample_size, mode)?;
    let features = corpus
        .iter()
        .map(|q| featurize(q, &catalog))
        .collect::<Result<Vec<_>>>()?;
    let (tr, va) = split_train_validation(features.len(), hp.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>();
    train(catalog, &pick(&tr), &pick(&va), hp)
}
