use crate::array::ParamStore;
use crate::graph::{Graph, Var};
use crate::{NumError, Result};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest per-parameter relative error.
    pub max_rel_error: f64,
    /// Relative error for every parameter, in store order.
    pub per_param: Vec<(String, f64)>,
}

impl GradCheck {
    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares analytic gradients of `f` with central differences.
///
/// For each parameter array the error is
/// `‖analytic − central‖ / (‖analytic‖ + ‖central‖ + 1e-12)`; the report's
/// maximum is taken over parameters.
pub fn finite_diff_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(NumError::Argument(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let out = f(&mut g)?;
        Ok(g.scalar(out))
    };

    let (first, grads) = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        (g.scalar(out), g.backward(out)?)
    };
    let second = eval(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumError::NonDeterministic { first, second });
    }

    let mut work = store.clone();
    let mut per_param = Vec::with_capacity(store.len());
    let mut max_rel_error = 0.0f64;
    for idx in 0..store.len() {
        let (name, arr) = store.by_index(idx);
        let analytic: Vec<f64> = grads
            .get(idx)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; arr.len()]);
        let mut central = vec![0.0; arr.len()];
        for (j, c) in central.iter_mut().enumerate() {
            let orig = arr.data()[j];
            work.by_index_mut(idx).data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work.by_index_mut(idx).data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work.by_index_mut(idx).data_mut()[j] = orig;
            *c = (plus - minus) / (2.0 * eps);
        }
        let diff = norm(analytic.iter().zip(&central).map(|(a, c)| a - c));
        let rel = diff / (norm(analytic.iter().copied()) + norm(central.iter().copied()) + 1e-12);
        max_rel_error = max_rel_error.max(rel);
        per_param.push((name.to_string(), rel));
    }
    Ok(GradCheck {
        max_rel_error,
        per_param,
    })
}

fn norm(xs: impl Iterator<Item = f64>) -> f64 {
    xs.map(|x| x * x).sum::<f64>().sqrt()
}
