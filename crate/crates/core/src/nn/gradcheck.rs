//! Central finite-difference gradient checks against the tape.

use super::store::ParameterStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Comparison for one parameter (or input) tensor.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub name: String,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)`, 0 when both vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scalar_of(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.numel() != 1 {
        return Err(Error::Shape(format!("loss of shape {:?}", t.shape())));
    }
    Ok(t.data()[0])
}

/// Checks the gradient of `loss` w.r.t. every parameter in `store`.
pub fn check_params<F>(store: &ParameterStore<f64>, h: f64, loss: F) -> Result<Vec<GradReport>>
where
    F: Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    tape.backward(l)?;
    let mut with_grads = store.clone();
    with_grads.zero_grads();
    tape.accumulate_param_grads(&mut with_grads)?;

    let mut reports = Vec::new();
    for (name, p) in store.iter() {
        let analytic = with_grads
            .get(name)
            .and_then(Tensor::grad)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; p.numel()]);
        let mut numeric = vec![0.0; p.numel()];
        let mut probe = store.clone();
        for (i, num) in numeric.iter_mut().enumerate() {
            let x0 = p.data()[i];
            let mut eval = |x: f64| -> Result<f64> {
                probe.get_mut(name).expect("same layout").data_mut()[i] = x;
                let mut t = Tape::new();
                let l = loss(&mut t, &probe)?;
                scalar_of(&t, l)
            };
            let plus = eval(x0 + h)?;
            let minus = eval(x0 - h)?;
            eval(x0)?;
            *num = (plus - minus) / (2.0 * h);
        }
        reports.push(GradReport {
            name: name.to_string(),
            rel_error: rel_error(&analytic, &numeric),
            analytic_norm: norm(&analytic),
            numeric_norm: norm(&numeric),
        });
    }
    Ok(reports)
}

/// Checks the gradient of `loss` w.r.t. free input tensors.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], h: f64, loss: F) -> Result<Vec<GradReport>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let run = |values: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.variable(t.clone())).collect();
        let l = loss(&mut tape, &vars)?;
        Ok((tape, vars, l))
    };
    let (mut tape, vars, l) = run(inputs)?;
    tape.backward(l)?;
    let mut reports = Vec::new();
    for (j, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[j])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut numeric = vec![0.0; input.numel()];
        let mut probe = inputs.to_vec();
        for (i, num) in numeric.iter_mut().enumerate() {
            let x0 = input.data()[i];
            let mut eval = |x: f64| -> Result<f64> {
                probe[j].data_mut()[i] = x;
                let (t, _, l) = run(&probe)?;
                scalar_of(&t, l)
            };
            let plus = eval(x0 + h)?;
            let minus = eval(x0 - h)?;
            eval(x0)?;
            *num = (plus - minus) / (2.0 * h);
        }
        reports.push(GradReport {
            name: format!("input{j}"),
            rel_error: rel_error(&analytic, &numeric),
            analytic_norm: norm(&analytic),
            numeric_norm: norm(&numeric),
        });
    }
    Ok(reports)
}
