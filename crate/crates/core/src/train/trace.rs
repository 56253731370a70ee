use super::sgd::Aggregate;
use crate::report::sig6;

/// Per-step diagnostics. Norms are of the clipped units: examples for
/// DP-SGD, microbatch means for the microbatch variant, model deltas for
/// federated rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub batch_size: usize,
    /// Mean loss over the batch before the update; NaN for an empty batch.
    pub loss: f64,
    pub grad_norm_p50: f64,
    pub grad_norm_p90: f64,
    pub grad_norm_max: f64,
    pub clipped_fraction: f64,
    pub max_clipped_norm: f64,
    /// Standard deviation of the noise in the averaged update, per coordinate.
    pub noise_std: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl TraceRow {
    pub(crate) fn new(step: u64, batch_size: usize, agg: &Aggregate, noise_std: f64) -> Self {
        let mut norms = agg.pre_norms.clone();
        norms.sort_by(f64::total_cmp);
        let clipped = norms.iter().filter(|&&n| n > agg.clip).count();
        Self {
            step,
            batch_size,
            loss: if agg.examples == 0 { f64::NAN } else { agg.loss_sum / agg.examples as f64 },
            grad_norm_p50: quantile(&norms, 0.5),
            grad_norm_p90: quantile(&norms, 0.9),
            grad_norm_max: norms.last().copied().unwrap_or(f64::NAN),
            clipped_fraction: if norms.is_empty() { 0.0 } else { clipped as f64 / norms.len() as f64 },
            max_clipped_norm: agg.post_norms.iter().copied().fold(0.0, f64::max),
            noise_std,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Raw noise coordinates added to the clipped sums, when recording.
    pub noise_draws: Vec<f64>,
}

impl Trace {
    pub const CSV_HEADER: &'static str =
        "step,batch_size,loss,grad_norm_p50,grad_norm_p90,grad_norm_max,clipped_fraction,max_clipped_norm,noise_std";

    pub fn max_clipped_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.max_clipped_norm).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let cells = [
                r.loss,
                r.grad_norm_p50,
                r.grad_norm_p90,
                r.grad_norm_max,
                r.clipped_fraction,
                r.max_clipped_norm,
                r.noise_std,
            ]
            .map(sig6);
            s.push_str(&format!("{},{},{}\n", r.step, r.batch_size, cells.join(",")));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
        assert!(quantile(&[], 0.5).is_nan());
    }
}
