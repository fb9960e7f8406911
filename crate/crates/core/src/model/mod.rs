//! The multi-set convolutional network.
//!
//! Each of the three sets (tables, joins, predicates) goes through its own
//! two-layer MLP element-wise; the outputs are averaged over the real
//! elements of the set, concatenated, and fed to an output MLP that ends in
//! a sigmoid. The sigmoid output lives in normalized log-cardinality space.

mod loss;
mod persist;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::executor::{sample_bitmaps, LabeledQuery};
use crate::featurizer::{featurize, featurize_spec, FeaturizedBatch, EncodingCatalog, SampleMode, SetBatch};
use crate::neural::{masked_mean_pool, masked_mean_pool_backward, Activation, Dense2, Dense2Cache, Matrix};
use crate::query::{validate, QuerySpec};
use crate::storage::{Database, SampleSet};
use crate::{Error, Result};

pub use loss::{loss, qerror_identity_gap, LossKind, LossValue};
pub use persist::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use train::{split_train_validation, train, train_on_corpus, EpochRecord, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub d: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d: 64,
            epochs: 100,
            batch_size: 256,
            lr: 0.001,
            loss: LossKind::MeanQError,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Wider network and larger batches, for corpora around 10^5 queries.
    pub fn large() -> Self {
        Hyperparams {
            d: 256,
            epochs: 100,
            batch_size: 1024,
            lr: 0.001,
            ..Hyperparams::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.d == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("d, epochs and batch size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MscnModel {
    pub table_net: Dense2,
    pub join_net: Dense2,
    pub pred_net: Dense2,
    pub out_net: Dense2,
    pub catalog: EncodingCatalog,
    pub hyper: Hyperparams,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug)]
pub struct ForwardCache {
    sets: [SetCache; 3],
    out: Dense2Cache,
}

#[derive(Debug)]
struct SetCache {
    net: Dense2Cache,
    owner: Vec<usize>,
    counts: Vec<f64>,
}

/// Gradients in flat parameter order.
pub type Gradients = Vec<f64>;

fn gather(set: &SetBatch) -> (Matrix, Vec<usize>) {
    let mut data = Vec::new();
    let mut owner = Vec::new();
    for b in 0..set.batch {
        for i in 0..set.max_len {
            if set.is_real(b, i) {
                data.extend_from_slice(set.element(b, i));
                owner.push(b);
            }
        }
    }
    (
        Matrix {
            rows: owner.len(),
            cols: set.width,
            data,
        },
        owner,
    )
}

impl MscnModel {
    pub fn new(catalog: EncodingCatalog, hyper: Hyperparams) -> Result<Self> {
        hyper.check()?;
        let d = hyper.d;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        Ok(MscnModel {
            table_net: Dense2::init(catalog.table_width(), d, d, Activation::Relu, &mut rng),
            join_net: Dense2::init(catalog.join_width(), d, d, Activation::Relu, &mut rng),
            pred_net: Dense2::init(catalog.predicate_width(), d, d, Activation::Relu, &mut rng),
            out_net: Dense2::init(3 * d, d, 1, Activation::Sigmoid, &mut rng),
            catalog,
            hyper,
        })
    }

    fn nets(&self) -> [&Dense2; 4] {
        [&self.table_net, &self.join_net, &self.pred_net, &self.out_net]
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    /// Parameters in file order: table, join, predicate, output module, each
    /// as `W1, b1, W2, b2` with row-major matrices.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for n in self.nets() {
            n.flatten_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.param_count()
            )));
        }
        let rest = self.table_net.load_from(params)?;
        let rest = self.join_net.load_from(rest)?;
        let rest = self.pred_net.load_from(rest)?;
        self.out_net.load_from(rest)?;
        Ok(())
    }

    /// Normalized predictions in `(0, 1)`, one per query.
    pub fn forward(&self, batch: &FeaturizedBatch) -> Result<(Vec<f64>, ForwardCache)> {
        let n = batch.len();
        let d = self.hyper.d;
        let mut merged = Matrix::zeros(n, 3 * d);
        let sets = [
            (&batch.tables, &self.table_net),
            (&batch.joins, &self.join_net),
            (&batch.predicates, &self.pred_net),
        ];
        let mut caches = Vec::with_capacity(3);
        for (s, (set, net)) in sets.into_iter().enumerate() {
            if set.width != net.input_width() {
                return Err(Error::Dimension(format!(
                    "set {s} has width {}, model expects {}",
                    set.width,
                    net.input_width()
                )));
            }
            let (x, owner) = gather(set);
            let cache = net.forward(x)?;
            let (pooled, counts) = masked_mean_pool(cache.output(), &owner, n)?;
            for b in 0..n {
                merged.row_mut(b)[s * d..(s + 1) * d].copy_from_slice(pooled.row(b));
            }
            caches.push(SetCache { net: cache, owner, counts });
        }
        let out = self.out_net.forward(merged)?;
        let y = out.output().data.clone();
        let sets: [SetCache; 3] = caches.try_into().expect("three sets");
        Ok((y, ForwardCache { sets, out }))
    }

    pub fn predict_normalized(&self, batch: &FeaturizedBatch) -> Result<Vec<f64>> {
        Ok(self.forward(batch)?.0)
    }

    /// Backpropagates `dy = ∂L/∂y` into flat parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, dy: &[f64]) -> Gradients {
        let d = self.hyper.d;
        let n = dy.len();
        let dy = Matrix {
            rows: n,
            cols: 1,
            data: dy.to_vec(),
        };
        let (out_grads, dmerged) = self.out_net.backward(&cache.out, &dy, true);
        let dmerged = dmerged.expect("requested");
        let mut flat = Vec::with_capacity(self.param_count());
        for (s, net) in [&self.table_net, &self.join_net, &self.pred_net].into_iter().enumerate() {
            let mut dpooled = Matrix::zeros(n, d);
            for b in 0..n {
                dpooled.row_mut(b).copy_from_slice(&dmerged.row(b)[s * d..(s + 1) * d]);
            }
            let sc = &cache.sets[s];
            let dset = masked_mean_pool_backward(&dpooled, &sc.owner, &sc.counts);
            let (g, _) = net.backward(&sc.net, &dset, false);
            g.flatten_into(&mut flat);
        }
        out_grads.flatten_into(&mut flat);
        flat
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &FeaturizedBatch, kind: LossKind) -> Result<(f64, Gradients)> {
        let labels = batch
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("batch has no labels".into()))?;
        let (y, cache) = self.forward(batch)?;
        let lv = loss(&y, labels, kind, self.catalog.log_span())?;
        Ok((lv.value, self.backward(&cache, &lv.grad)))
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.catalog.denormalize_label(y)
    }

    /// Estimates a query that already carries its sample bitmaps.
    pub fn predict_labeled(&self, q: &LabeledQuery) -> Result<f64> {
        let mut f = featurize(q, &self.catalog)?;
        f.label = None;
        let batch = crate::featurizer::batch(&[&f])?;
        Ok(self.denormalize(self.predict_normalized(&batch)?[0]))
    }
}

/// Estimates the cardinality of `spec`, evaluating its base-table predicates
/// on `samples` when the model uses sample features.
pub fn predict(model: &MscnModel, spec: &QuerySpec, db: &Database, samples: Option<&SampleSet>) -> Result<f64> {
    validate(spec, db).map_err(Error::Validation)?;
    let bitmaps = match model.catalog.sample_mode {
        SampleMode::None => Default::default(),
        _ => {
            let samples = samples.ok_or_else(|| Error::MissingSample("model needs materialized samples".into()))?;
            sample_bitmaps(spec, samples)?
        }
    };
    let f = featurize_spec(spec, &bitmaps, None, &model.catalog)?;
    let batch = crate::featurizer::batch(&[&f])?;
    Ok(model.denormalize(model.predict_normalized(&batch)?[0]))
}
