//! Minibatch gradient steps shared by the supervised trainers.

use numcore::{Adam, Graph, ParamStore, Var};

use crate::{Error, Result};

/// Accumulates the mean loss gradient over `batch` and applies one Adam step
/// to the parameters accepted by `trainable`. Returns the summed loss.
/// Nothing is applied when any gradient is non-finite.
pub fn adam_step<T>(
    store: &mut ParamStore,
    opt: &mut Adam,
    batch: &[T],
    trainable: impl Fn(&str) -> bool,
    loss: impl Fn(&mut Graph, &T) -> Result<Var>,
) -> Result<f64> {
    store.zero_grads();
    let inv = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    for item in batch {
        let grads = {
            let mut g = Graph::new(store);
            let l = loss(&mut g, item)?;
            total += g.scalar(l);
            let scaled = g.scale(l, inv)?;
            g.backward(scaled)?
        };
        store.accumulate(&grads);
    }
    if !total.is_finite() || !store.grads_finite() {
        return Err(Error::Diverged("non-finite loss or gradient".into()));
    }
    opt.step_filtered(store, trainable);
    Ok(total)
}

/// Deterministic epoch order over `n` items.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    numcore::Rng::derive(seed, 0x5eed_0000 + epoch as u64).shuffle(&mut idx);
    idx
}
