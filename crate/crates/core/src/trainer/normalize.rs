use serde::{Deserialize, Serialize};

/// Running mean and variance, merged batch by batch (parallel Welford).
///
/// The critic is trained on returns standardized by these statistics so the
/// value loss stays on the same scale as the policy loss whatever the reward
/// magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: f64,
    m2: f64,
}

impl Default for RunningNorm {
    fn default() -> Self {
        RunningNorm {
            count: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }
}

impl RunningNorm {
    const MIN_STD: f64 = 1e-4;

    pub fn std(&self) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2 / self.count).sqrt().max(Self::MIN_STD)
    }

    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let total = self.count + n;
        let delta = mean - self.mean;
        self.mean += delta * n / total;
        self.m2 += m2 + delta * delta * self.count * n / total;
        self.count = total;
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        x * self.std() + self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_batches_match_direct_statistics() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 10.0 - 3.0).collect();
        let mut n = RunningNorm::default();
        for chunk in xs.chunks(7) {
            n.update(chunk);
        }
        let mean = xs.iter().sum::<f64>() / 100.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 100.0;
        assert!((n.mean - mean).abs() < 1e-12);
        assert!((n.std() - var.sqrt()).abs() < 1e-12);
        let x = 4.2;
        assert!((n.denormalize(n.normalize(x)) - x).abs() < 1e-12);
    }

    #[test]
    fn identity_before_data() {
        let n = RunningNorm::default();
        assert_eq!(n.normalize(3.0), 3.0);
    }
}
