use alloc::vec::Vec;

use rand::Rng;

use super::{Graph, ParamStore, Scalar, Var};
use crate::Result;

/// A scalar-valued function of the parameters in a store, evaluable at any
/// precision.
pub trait GradFn {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>) -> Result<Var>;
}

/// `sum(x * r)` for a random fixed `r`, turning any output into a scalar
/// whose gradient exercises the full Jacobian.
pub fn random_projection_loss<T: Scalar, R: Rng>(g: &mut Graph<'_, T>, x: Var, rng: &mut R) -> Result<Var> {
    let (r, c) = g.shape(x);
    let weights = (0..r * c).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
    let w = g.input(r, c, weights)?;
    let prod = g.mul(x, w)?;
    Ok(g.sum(prod))
}

fn analytic_grads<T: Scalar, F: GradFn>(store: &ParamStore<T>, f: &F) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new(store);
    let out = f.eval(&mut g)?;
    let grads = g.backward(out);
    Ok(store
        .ids()
        .map(|id| match grads.get(id) {
            Some(d) => d.iter().map(|v| v.as_f64()).collect(),
            None => alloc::vec![0.0; store.get(id).numel()],
        })
        .collect())
}

fn compare<F: GradFn>(store: &mut ParamStore<f64>, f: &F, analytic: &[Vec<f64>], eps: f64) -> Result<f64> {
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(s);
        let out = f.eval(&mut g)?;
        Ok(g.value(out).iter().sum())
    };
    let mut worst: f64 = 0.0;
    for id in store.ids().collect::<Vec<_>>() {
        for i in 0..store.get(id).numel() {
            let orig = store.get(id).data[i];
            store.get_mut(id).data[i] = orig + eps;
            let plus = eval(store)?;
            store.get_mut(id).data[i] = orig - eps;
            let minus = eval(store)?;
            store.get_mut(id).data[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.0][i];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Compares the analytic gradient of `f` with respect to every parameter in
/// `store` against central finite differences. Returns the maximum of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
pub fn grad_check<F: GradFn>(store: &mut ParamStore<f64>, f: &F, eps: f64) -> Result<f64> {
    let analytic = analytic_grads(store, f)?;
    compare(store, f, &analytic, eps)
}

/// Like [`grad_check`] but with the analytic pass run in `f32`; the finite
/// differences stay in `f64`.
pub fn grad_check_f32<F: GradFn>(store: &mut ParamStore<f64>, f: &F, eps: f64) -> Result<f64> {
    let analytic = analytic_grads(&store.cast::<f32>(), f)?;
    compare(store, f, &analytic, eps)
}
