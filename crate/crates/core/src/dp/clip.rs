use super::{ClipConfig, GradMap};
use crate::autodiff::{PerExampleCaptures, Tensor};
use crate::error::{Error, Result};
use crate::rng::NoiseStream;

/// `min(1, C / ‖g_i‖)`, with 1 for a zero gradient.
pub fn clip_factors(norms: &[f64], clipping_norm: f64) -> Vec<f64> {
    norms
        .iter()
        .map(|&n| if n > clipping_norm { clipping_norm / n } else { 1.0 })
        .collect()
}

pub fn scale_map(g: &GradMap, s: f64) -> GradMap {
    g.iter()
        .map(|(k, t)| {
            let mut t = t.clone();
            t.scale_in_place(s);
            (k.clone(), t)
        })
        .collect()
}

/// `Σ c_i g_i`, reduced in ascending example order.
pub fn clipped_sum(per_example: &[GradMap], factors: &[f64]) -> Result<GradMap> {
    if per_example.len() != factors.len() || per_example.is_empty() {
        return Err(Error::Structure(format!(
            "{} gradients for {} clip factors",
            per_example.len(),
            factors.len()
        )));
    }
    let mut sum: GradMap = per_example[0]
        .iter()
        .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
        .collect();
    for (g, &c) in per_example.iter().zip(factors) {
        for (k, acc) in sum.iter_mut() {
            let t = g
                .get(k)
                .ok_or_else(|| Error::Structure(format!("missing gradient for {k}")))?;
            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += c * b;
            }
        }
    }
    Ok(sum)
}

/// `Σᵢ cᵢ gᵢ` assembled from per-example captures, for every parameter in
/// `expected` (shapes taken from `params`). Equals a batch-summed backward
/// pass seeded with the clip factors, without a second pass over the tape.
pub fn clipped_sum_captured<'a>(
    captures: &PerExampleCaptures,
    factors: &[f64],
    params: &GradMap,
    expected: impl IntoIterator<Item = &'a str>,
) -> Result<GradMap> {
    if factors.len() != captures.batch {
        return Err(Error::Structure(format!(
            "{} clip factors for a batch of {}",
            factors.len(),
            captures.batch
        )));
    }
    let grouped = captures.by_param();
    let mut sum = GradMap::new();
    for name in expected {
        let shape = params
            .get(name)
            .ok_or_else(|| Error::Structure(format!("unknown parameter {name}")))?
            .shape();
        let records = grouped
            .get(name)
            .ok_or_else(|| Error::Config(format!("no per-example capture for parameter {name}")))?;
        let mut acc = Tensor::zeros(shape);
        for r in records {
            for (contrib, &c) in r.per_example.iter().zip(factors) {
                if contrib.numel() != acc.numel() {
                    return Err(Error::Shape {
                        op: "clipped_sum_captured",
                        left: shape.to_vec(),
                        right: vec![contrib.numel()],
                    });
                }
                contrib.accumulate_into(c, acc.data_mut());
            }
        }
        sum.insert(name.to_string(), acc);
    }
    Ok(sum)
}

/// Batch mean of a summed gradient. Shared by the private and non-private
/// paths so that both perform bit-identical arithmetic.
pub fn mean_gradient(sum: &GradMap, batch_size: usize) -> GradMap {
    let b = batch_size as f64;
    sum.iter()
        .map(|(k, t)| {
            let data = t.data().iter().map(|x| x / b).collect();
            (k.clone(), Tensor::new(t.shape().to_vec(), data).expect("finite"))
        })
        .collect()
}

/// Gaussian mechanism: `(Σ c_i g_i + N(0, σ²C²I)) / B`.
///
/// Noise for parameter `name` at training step `step` comes from
/// `NoiseStream::new(seed, step, name)`, so it does not depend on iteration
/// order or on any other parameter.
pub fn privatize(clipped_sum: &GradMap, cfg: &ClipConfig, seed: u64, step: u64) -> Result<GradMap> {
    cfg.validate()?;
    let std = cfg.noise_multiplier * cfg.clipping_norm;
    if std == 0.0 {
        return Ok(mean_gradient(clipped_sum, cfg.batch_size));
    }
    let mut noisy = GradMap::new();
    for (name, t) in clipped_sum {
        let mut stream = NoiseStream::new(seed, step, name);
        let data: Vec<f64> = t.data().iter().map(|&x| x + std * stream.next_normal()).collect();
        noisy.insert(name.clone(), Tensor::new(t.shape().to_vec(), data)?);
    }
    Ok(mean_gradient(&noisy, cfg.batch_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::ClipMode;

    #[test]
    fn factor_examples() {
        let c = 0.1;
        assert_eq!(clip_factors(&[c / 2.0, 2.0 * c, 0.0], c), vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn zero_noise_is_the_clipped_mean() {
        let mut g = GradMap::new();
        g.insert("w".into(), Tensor::new(vec![3], vec![0.3, -0.7, 1.1]).unwrap());
        let cfg = ClipConfig {
            clipping_norm: 1.0,
            noise_multiplier: 0.0,
            batch_size: 3,
            mode: ClipMode::Ghost,
        };
        let p = privatize(&g, &cfg, 5, 9).unwrap();
        assert_eq!(p, mean_gradient(&g, 3));
        assert_eq!(p["w"].data()[0], 0.3 / 3.0);
    }
}
