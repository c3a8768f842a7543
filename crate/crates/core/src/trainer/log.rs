use serde::{Deserialize, Serialize};

/// One actor/critic update pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub i: usize,
    /// TD loss of the sampled batch before the critic step.
    pub l1: f64,
    /// Policy objective of the batch under the updated critic.
    pub l2: f64,
    /// Squared norm of the unclipped policy gradient.
    pub grad_norm_sq: f64,
    pub alpha_w: f64,
    pub alpha_theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: usize,
    /// Undiscounted sum of the original stage cost.
    pub sum_l: f64,
    /// Discounted sum of the additional stage cost.
    pub disc_sum_c: f64,
    /// Only recorded when timing is enabled, so logs stay reproducible.
    pub wall_ms: Option<f64>,
    /// State after the last step.
    pub final_state: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub iterations: Vec<IterationRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunLog {
    pub fn grad_norm_sq(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.grad_norm_sq).collect()
    }

    pub(crate) fn flatten(&self) -> (Vec<f64>, Vec<f64>) {
        let mut iters = Vec::with_capacity(self.iterations.len() * 6);
        for r in &self.iterations {
            iters.extend_from_slice(&[r.i as f64, r.l1, r.l2, r.grad_norm_sq, r.alpha_w, r.alpha_theta]);
        }
        let mut eps = Vec::new();
        for e in &self.episodes {
            eps.extend_from_slice(&[
                e.episode as f64,
                e.steps as f64,
                e.sum_l,
                e.disc_sum_c,
                e.wall_ms.unwrap_or(f64::NAN),
                e.final_state.len() as f64,
            ]);
            eps.extend_from_slice(&e.final_state);
        }
        (iters, eps)
    }

    pub(crate) fn unflatten(iters: &[f64], eps: &[f64]) -> Option<RunLog> {
        if iters.len() % 6 != 0 {
            return None;
        }
        let iterations = iters
            .chunks(6)
            .map(|r| IterationRecord {
                i: r[0] as usize,
                l1: r[1],
                l2: r[2],
                grad_norm_sq: r[3],
                alpha_w: r[4],
                alpha_theta: r[5],
            })
            .collect();
        let mut episodes = Vec::new();
        let mut pos = 0;
        while pos < eps.len() {
            let head = eps.get(pos..pos + 6)?;
            let n = head[5] as usize;
            let final_state = eps.get(pos + 6..pos + 6 + n)?.to_vec();
            episodes.push(EpisodeRecord {
                episode: head[0] as usize,
                steps: head[1] as usize,
                sum_l: head[2],
                disc_sum_c: head[3],
                wall_ms: if head[4].is_nan() { None } else { Some(head[4]) },
                final_state,
            });
            pos += 6 + n;
        }
        Some(RunLog { iterations, episodes })
    }
}
