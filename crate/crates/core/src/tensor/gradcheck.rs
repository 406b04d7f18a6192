use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Agreement between analytic and central-difference gradients for one
/// parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub index: usize,
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-12)`
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub loss: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.params.iter().all(|p| p.rel_error < tol)
    }
}

fn evaluate<F>(params: &[Tensor<f64>], f: &F, track: bool) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), track)).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar objective, got shape {:?}",
            g.shape(out)
        )));
    }
    Ok((g, vars, out))
}

/// Compares reverse-mode gradients of the scalar objective `f` against
/// central differences with step `eps`, one report entry per parameter tensor.
///
/// `f` receives a fresh graph and one leaf per entry of `params`.
pub fn grad_check<F>(params: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let scalar = |p: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, o) = evaluate(p, &f, false)?;
        Ok(g.value(o).data()[0])
    };

    let (mut g, vars, out) = evaluate(params, &f, true)?;
    let loss = g.value(out).data()[0];
    let again = scalar(params)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::Determinism {
            first: loss,
            second: again,
        });
    }
    g.backward(out)?;

    let mut work = params.to_vec();
    let mut checks = Vec::with_capacity(params.len());
    for (index, var) in vars.iter().enumerate() {
        let analytic = g
            .grad(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; params[index].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for e in 0..params[index].numel() {
            let base = params[index].data()[e];
            work[index].data_mut()[e] = base + eps;
            let plus = scalar(&work)?;
            work[index].data_mut()[e] = base - eps;
            let minus = scalar(&work)?;
            work[index].data_mut()[e] = base;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let (an, nn) = (norm(&analytic), norm(&numeric));
        checks.push(ParamCheck {
            index,
            rel_error: norm(&diff) / an.max(nn).max(1e-12),
            max_abs_error: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
            analytic_norm: an,
            numeric_norm: nn,
        });
    }
    Ok(GradCheckReport {
        loss,
        params: checks,
    })
}
