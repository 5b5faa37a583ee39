use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use super::store::ParamStore;
use super::tape::{NodeId, Tape};
use crate::{Error, Result};

/// Shared knobs for all training commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            optimizer: AdamConfig::default(),
        }
    }
}

/// Per-example SGD (batch size 1), Adam updates, mean loss per epoch.
///
/// `build_loss` records the example's forward pass on the tape and returns a
/// scalar loss node. Aborts with a diagnostic when the loss goes non-finite.
pub fn run_epochs<E>(
    store: &mut ParamStore,
    examples: &[E],
    cfg: &TrainConfig,
    mut build_loss: impl FnMut(&mut Tape, &ParamStore, &E) -> Result<NodeId>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Train("no training examples".into()));
    }
    let mut adam = Adam::new(cfg.optimizer.clone(), store);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (k, ex) in examples.iter().enumerate() {
            let mut tape = Tape::new();
            let loss = build_loss(&mut tape, store, ex)?;
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Train(format!(
                    "diverged at epoch {epoch}, example {k}: loss = {value}"
                )));
            }
            total += value;
            tape.backward_into(loss, store)?;
            adam.step(store);
        }
        let mean = total / examples.len() as f64;
        trace.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::Matrix;

    #[test]
    fn same_seed_same_data_is_bit_identical() {
        let run = || {
            let mut rng = crate::neural::store::seeded_rng(11);
            let mut store = ParamStore::new();
            let w = store.add_xavier(&mut rng, "w", 3, 1);
            let examples = vec![(0.5, 1.0), (-0.25, 0.0), (2.0, 1.0)];
            let cfg = TrainConfig {
                epochs: 5,
                optimizer: AdamConfig::default(),
            };
            run_epochs(
                &mut store,
                &examples,
                &cfg,
                |tape, store, &(x, y)| {
                    let wn = tape.param(store, w);
                    let xs = tape.colvec(&[x, x * x, 1.0]);
                    let logit = tape.dot(wn, xs);
                    Ok(tape.bce_with_logit(logit, y))
                },
                |_, _| {},
            )
            .unwrap();
            store.value(w).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_aborts_with_diagnostic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::from_vec(1, 1, vec![1.0]));
        let examples = vec![()];
        let cfg = TrainConfig {
            epochs: 1,
            optimizer: AdamConfig::default(),
        };
        let err = run_epochs(
            &mut store,
            &examples,
            &cfg,
            |tape, store, _| {
                let wn = tape.param(store, w);
                let bad = tape.scale(wn, f64::INFINITY);
                Ok(tape.sum(bad))
            },
            |_, _| {},
        )
        .unwrap_err();
        assert!(err.to_string().contains("diverged"));
    }
}
