use rand::Rng;

use crate::mdp::Action;

/// One Q-value per action, in [`Action::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QValues(pub [f64; Action::COUNT]);

impl QValues {
    pub fn from_slice<T: super::Real>(q: &[T]) -> Self {
        let mut out = [0.0; Action::COUNT];
        for (o, v) in out.iter_mut().zip(q) {
            *o = v.as_f64();
        }
        QValues(out)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(q: &QValues) -> Action {
    Action::ALL[greedy_index(&q.0)]
}

/// Boltzmann probabilities `exp(q_i / beta) / sum_j exp(q_j / beta)`.
pub fn softmax_probs(q: &[f64], beta: f64) -> Vec<f64> {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = q.iter().map(|&v| ((v - max) / beta).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

/// Draws an index from the Boltzmann distribution over `q`.
pub fn softmax_index<R: Rng + ?Sized>(q: &[f64], beta: f64, rng: &mut R) -> usize {
    let p = softmax_probs(q, beta);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum just under one.
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

pub fn softmax_sample<R: Rng + ?Sized>(q: &QValues, beta: f64, rng: &mut R) -> Action {
    Action::ALL[softmax_index(&q.0, beta, rng)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_action(&QValues([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])), Action::Land);
        assert_eq!(greedy_action(&QValues([0.5; 6])), Action::North);
        assert_eq!(greedy_action(&QValues([1.0, 2.0, 3.0, 2.0, 1.0, 0.0])), Action::South);
    }

    #[test]
    fn two_action_softmax() {
        let p = softmax_probs(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn extreme_values_stay_finite() {
        let p = softmax_probs(&[1e6, -1e6, 0.0], 1e-6);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(softmax_index(&[1e6, -1e6, 0.0], 1e-6, &mut rng), 0);
    }

    #[test]
    fn hot_temperature_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = QValues([0.3, -1.0, 2.0, 0.0, 0.7, 1.1]);
        let draws = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[softmax_sample(&q, 1e6, &mut rng).index()] += 1;
        }
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 5 degrees of freedom, alpha = 0.01.
        assert!(chi2 < 15.086, "chi2 = {chi2}");
    }

    #[test]
    fn cold_temperature_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let mut q = [0.0; 6];
            q.iter_mut().for_each(|v| *v = rng.random_range(-5.0..5.0));
            let q = QValues(q);
            assert_eq!(softmax_sample(&q, 1e-6, &mut rng), greedy_action(&q));
        }
    }
}
