//! Regression deltas over the time axis of a `[bins x frames]` matrix.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `d[t] = sum_{n=1..N} n * (x[t+n] - x[t-n]) / (2 * sum n^2)`, edges
/// replicated. Delta-deltas are deltas of deltas.
pub fn deltas(x: &Tensor<f32>, window: usize) -> Result<Tensor<f32>> {
    if x.rank() != 2 {
        return Err(Error::shape(
            "deltas",
            format!("expected [bins x frames], got {:?}", x.shape()),
        ));
    }
    let (bins, frames) = (x.shape()[0], x.shape()[1]);
    if window == 0 {
        return Err(Error::config("delta window must be >= 1".to_string()));
    }
    if frames <= 2 * window {
        return Err(Error::data(format!(
            "deltas need more than {} frames, got {}",
            2 * window,
            frames
        )));
    }
    let denom: f32 = 2.0 * (1..=window).map(|n| (n * n) as f32).sum::<f32>();
    let mut out = Tensor::<f32>::zeros(&[bins, frames]);
    let xd = x.data();
    let od = out.data_mut();
    for b in 0..bins {
        let row = &xd[b * frames..(b + 1) * frames];
        let dst = &mut od[b * frames..(b + 1) * frames];
        for (t, slot) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for n in 1..=window {
                let ahead = row[(t + n).min(frames - 1)];
                let behind = row[t.saturating_sub(n)];
                acc += n as f32 * (ahead - behind);
            }
            *slot = acc / denom;
        }
    }
    Ok(out)
}
