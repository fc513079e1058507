use super::adam::Adam;
use super::network::{BatchInput, QNetwork};
use super::policy::greedy_index;
use super::{NetError, Real};

/// Minibatch of transitions laid out for the network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitionBatch<T> {
    pub n: usize,
    pub maps: Vec<T>,
    pub times: Vec<T>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_maps: Vec<T>,
    pub next_times: Vec<T>,
    pub terminal: Vec<bool>,
}

impl<T: Real> TransitionBatch<T> {
    pub fn states(&self) -> BatchInput<'_, T> {
        BatchInput { n: self.n, maps: &self.maps, scalars: &self.times }
    }

    pub fn next_states(&self) -> BatchInput<'_, T> {
        BatchInput { n: self.n, maps: &self.next_maps, scalars: &self.next_times }
    }
}

/// Double-DQN targets from precomputed next-state Q-values: the online
/// network picks the action, the target network values it. Terminal
/// transitions do not bootstrap.
pub fn ddqn_targets_from_q<T: Real>(
    q_next_online: &[T],
    q_next_target: &[T],
    rewards: &[f64],
    terminal: &[bool],
    gamma: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let a = q_next_online.len() / n.max(1);
    (0..n)
        .map(|i| {
            if terminal[i] {
                return rewards[i];
            }
            let online: Vec<f64> = q_next_online[i * a..(i + 1) * a].iter().map(|v| v.as_f64()).collect();
            let best = greedy_index(&online);
            rewards[i] + gamma * q_next_target[i * a + best].as_f64()
        })
        .collect()
}

pub fn ddqn_target<T: Real>(
    batch: &TransitionBatch<T>,
    online: &QNetwork<T>,
    target: &QNetwork<T>,
    gamma: f64,
) -> Result<Vec<f64>, NetError> {
    let next = batch.next_states();
    let q_online = online.forward(&next)?;
    let q_target = target.forward(&next)?;
    Ok(ddqn_targets_from_q(&q_online, &q_target, &batch.rewards, &batch.terminal, gamma))
}

/// One gradient step on the mean squared TD error. Returns the loss before
/// the update.
pub fn train_step<T: Real>(
    online: &mut QNetwork<T>,
    target: &QNetwork<T>,
    opt: &mut Adam<T>,
    batch: &TransitionBatch<T>,
    gamma: f64,
) -> Result<f64, NetError> {
    let n = batch.n;
    if n == 0 {
        return Err(NetError::Shape("empty batch".into()));
    }
    let y = ddqn_target(batch, online, target, gamma)?;
    let tape = online.forward_tape(&batch.states())?;
    let q = tape.output();
    let a = online.arch().outputs;
    let mut loss = 0.0;
    let mut d_out = vec![T::zero(); n * a];
    for i in 0..n {
        let act = batch.actions[i];
        let err = q[i * a + act].as_f64() - y[i];
        loss += err * err;
        d_out[i * a + act] = T::of_f64(2.0 * err / n as f64);
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(NetError::Diverged(loss));
    }
    let grad = online.backward(&tape, &d_out);
    opt.step(online.params_mut(), &grad);
    Ok(loss)
}

/// `target <- (1 - tau) * target + tau * online`.
pub fn soft_update<T: Real>(target: &mut QNetwork<T>, online: &QNetwork<T>, tau: f64) -> Result<(), NetError> {
    if target.arch() != online.arch() {
        return Err(NetError::Shape("target and online architectures differ".into()));
    }
    let tau = T::of_f64(tau);
    let keep = T::one() - tau;
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = keep * *t + tau * o;
    }
    Ok(())
}
