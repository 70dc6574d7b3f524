use crate::autodiff::{GradMode, Tape, Tensor, Var};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Fixed projection weights so that a vector-valued root becomes the scalar
/// objective `Σ wᵢ rootᵢ`.
pub fn projection(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + ((i as f64 + 1.0) * 0.618_033_988_7).fract()).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Compares tape gradients of `Σ wᵢ rootᵢ` with respect to every input
/// against central finite differences.
pub fn check<F>(inputs: &[Tensor], build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let objective = |vals: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let root = build(&mut tape, &vars)?;
        let out = tape.value(root).data();
        let w = projection(out.len());
        Ok(out.iter().zip(&w).map(|(a, b)| a * b).sum())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let root = build(&mut tape, &vars)?;
    let seed = projection(tape.value(root).numel());
    let grads = tape.backward(root, &seed, GradMode::Summed)?;

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut vals = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .leaf(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            vals[i].data_mut()[j] = orig + FD_STEP;
            let up = objective(&vals)?;
            vals[i].data_mut()[j] = orig - FD_STEP;
            let down = objective(&vals)?;
            vals[i].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[j], fd));
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err: worst,
        checked,
    })
}
