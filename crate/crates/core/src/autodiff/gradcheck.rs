//! Central finite-difference verification of analytic gradients.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradFailure {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub failures: Vec<GradFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64, tol: f64) {
        let rel_err = (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs());
        self.checked += 1;
        self.max_rel_err = self.max_rel_err.max(rel_err);
        if !(rel_err <= tol) {
            self.failures.push(GradFailure {
                name: name.to_string(),
                index,
                analytic,
                numeric,
                rel_err,
            });
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("finite-difference step must be positive, got {h}")))
    }
}

/// Checks `d f(θ) / d θ` for a single input tensor.
pub fn grad_check<F>(f: F, theta: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    check_step(h)?;
    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.leaf(&theta.shape, data, true)?;
        let y = f(&mut g, x)?;
        Ok(g.scalar(y))
    };

    let mut g = Graph::new();
    let x = g.leaf(&theta.shape, theta.data.clone(), true)?;
    let y = f(&mut g, x)?;
    g.backward(y)?;
    let analytic = g.grad(x).to_vec();

    let mut report = GradCheckReport::default();
    for i in 0..theta.data.len() {
        let mut plus = theta.data.clone();
        let mut minus = theta.data.clone();
        plus[i] += h;
        minus[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        report.record("theta", i, analytic[i], numeric, tol);
    }
    Ok(report)
}

/// Checks the gradient of a scalar objective with respect to every
/// coordinate of every parameter in `store`. The store's values are restored
/// and its gradient buffers zeroed on return.
pub fn grad_check_params<F>(store: &mut ParamStore, f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let ids: Vec<ParamId> = store.ids().collect();
    grad_check_param_ids(store, &ids, f, h, tol)
}

/// [`grad_check_params`] restricted to the listed parameters.
pub fn grad_check_param_ids<F>(store: &mut ParamStore, ids: &[ParamId], f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    check_step(h)?;
    store.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss)?;
    g.accumulate_param_grads(store);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| store.get(id).grad.clone()).collect();
    store.zero_grad();

    let mut report = GradCheckReport::default();
    for (pi, &id) in ids.iter().enumerate() {
        let name = store.get(id).name.clone();
        for i in 0..store.get(id).data.len() {
            let orig = store.get(id).data[i];
            store.get_mut(id).data[i] = orig + h;
            let mut gp = Graph::new();
            let lp = f(&mut gp, store)?;
            let fp = gp.scalar(lp);
            store.get_mut(id).data[i] = orig - h;
            let mut gm = Graph::new();
            let lm = f(&mut gm, store)?;
            let fm = gm.scalar(lm);
            store.get_mut(id).data[i] = orig;
            report.record(&name, i, analytic[pi][i], (fp - fm) / (2.0 * h), tol);
        }
    }
    Ok(report)
}
