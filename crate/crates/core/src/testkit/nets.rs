//! Random stacks of affine layers used to cross-check per-example norms.

use rand::Rng;

use crate::autodiff::{GradMode, PerExampleCaptures, Tape, Tensor, Var};
use crate::dp::{per_example_gradients, GradMap};
use crate::error::Result;
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct AffineNet {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub input: Tensor,
    pub targets: Vec<usize>,
    pub batch: usize,
}

impl AffineNet {
    /// `layers` affine maps with GELU in between, widths in `2..=16`, ending
    /// in a per-example cross-entropy.
    pub fn random(seed: u64, layers: usize, seq: usize, batch: usize) -> Self {
        let mut rng = seeded(seed);
        let widths: Vec<usize> = (0..=layers).map(|_| rng.gen_range(2..=16)).collect();
        let weights = widths
            .windows(2)
            .map(|w| Tensor::randn(&[w[0], w[1]], 1.0 / (w[0] as f64).sqrt(), &mut rng))
            .collect();
        let biases = widths[1..]
            .iter()
            .map(|&p| Tensor::randn(&[p], 0.1, &mut rng))
            .collect();
        let input = Tensor::randn(&[batch, seq, widths[0]], 1.0, &mut rng);
        let vocab = widths[layers];
        let targets = (0..batch * seq).map(|_| rng.gen_range(0..vocab)).collect();
        Self {
            weights,
            biases,
            input,
            targets,
            batch,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.weights.len())
            .flat_map(|i| [format!("l{i}.b"), format!("l{i}.w")])
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape) -> Result<Var> {
        let mut h = tape.leaf(self.input.clone(), false);
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if i > 0 {
                h = tape.gelu(h)?;
            }
            let wv = tape.param(&format!("l{i}.w"), w.clone(), true);
            let bv = tape.param(&format!("l{i}.b"), b.clone(), true);
            h = tape.affine(h, wv, Some(bv))?;
        }
        let mask = vec![1.0; self.targets.len()];
        tape.cross_entropy(h, &self.targets, &mask)
    }

    pub fn per_example_grads(&self) -> Result<Vec<GradMap>> {
        let mut tape = Tape::new();
        let l = self.forward(&mut tape)?;
        per_example_gradients(&tape, l)
    }

    pub fn captures(&self) -> Result<PerExampleCaptures> {
        let mut tape = Tape::new();
        let l = self.forward(&mut tape)?;
        let g = tape.backward(l, &vec![1.0; self.batch], GradMode::PerExample)?;
        Ok(g.into_captures().expect("per-example mode"))
    }
}
