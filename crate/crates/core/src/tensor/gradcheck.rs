//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::param::ParamStore;
use super::Tensor;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-6;

/// `|a − b| / max(1, |a|, |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn eval<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = f(&mut g, xv)?;
    Ok(g.value(y).item())
}

/// Compares `backward()` against central differences on every coordinate
/// of `x` and returns the worst relative error.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let y = f(&mut g, xv)?;
    g.backward(y)?;
    let analytic = g.grad(xv).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; x.len()]);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], fd));
    }
    Ok(worst)
}

/// Same check over every coordinate of every parameter in `store`. `f`
/// builds the scalar loss from the store.
pub fn grad_check_params<F>(f: F, store: &mut ParamStore, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    g.backward(y)?;
    g.accumulate_param_grads(store);
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.clone()).collect();

    let value = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let y = f(&mut g, store)?;
        Ok(g.value(y).item())
    };
    let mut worst = 0.0f64;
    let ids: Vec<_> = store.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for i in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let up = value(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let down = value(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[pi][i], fd));
        }
    }
    store.zero_grads();
    Ok(worst)
}
