use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Actor, ActorTrace};
use crate::approximators::gaussian::{gaussian_log_density_partials, squash_correction_partial};
use crate::approximators::{gaussian_log_density, squash_correction, GaussianHeadOutput, Mlp, MlpSpec, MlpTrace};
use crate::error::{check_len, Error, Result};
use crate::rng::{fill_standard_normal, stream, Stream};

/// Plain tanh-Gaussian actor: the baseline the mixture reduces to when the
/// knowledge set is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SacActor {
    pub network: Mlp,
}

#[derive(Debug, Clone)]
pub struct SacTrace {
    trace: MlpTrace,
    clamped: Vec<bool>,
    head: GaussianHeadOutput,
    noise: Vec<f64>,
    pre: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl ActorTrace for SacTrace {
    fn action(&self) -> &[f64] {
        &self.action
    }

    fn log_prob(&self) -> f64 {
        self.log_prob
    }

    fn weight_entropy(&self) -> f64 {
        0.0
    }
}

impl SacActor {
    /// Drawn from the inner-actor init stream of `seed`.
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        Ok(Self {
            network: Mlp::init(
                MlpSpec::new(obs_dim, hidden, 2 * action_dim),
                &mut stream(seed, Stream::InitInner),
            )?,
        })
    }
}

impl Actor for SacActor {
    type Trace = SacTrace;

    fn obs_dim(&self) -> usize {
        self.network.spec.input_dim
    }

    fn action_dim(&self) -> usize {
        self.network.spec.output_dim / 2
    }

    fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<SacTrace> {
        check_len("observation", self.obs_dim(), obs.len())?;
        let mut noise = vec![0.0; self.action_dim()];
        fill_standard_normal(rng, &mut noise);
        let trace = self.network.forward_traced(obs)?;
        let (head, clamped) = GaussianHeadOutput::from_network(trace.output());
        let pre: Vec<f64> = head
            .mean
            .iter()
            .zip(&head.log_std)
            .zip(&noise)
            .map(|((&mu, &ls), &e)| mu + libm::exp(ls) * e)
            .collect();
        let action = pre.iter().map(|&v| libm::tanh(v)).collect();
        let log_prob =
            gaussian_log_density(&pre, &head.mean, &head.log_std) - squash_correction(&pre);
        if !log_prob.is_finite() {
            return Err(Error::NonFinite {
                what: "mixture log-probability",
                index: 0,
            });
        }
        Ok(SacTrace {
            trace,
            clamped,
            head,
            noise,
            pre,
            action,
            log_prob,
        })
    }

    fn greedy_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (head, _) = GaussianHeadOutput::from_network(&self.network.forward(obs)?);
        Ok(head.mean.iter().map(|&m| libm::tanh(m)).collect())
    }

    fn weights(&self, obs: &[f64]) -> Result<Vec<f64>> {
        check_len("observation", self.obs_dim(), obs.len())?;
        Ok(vec![1.0])
    }

    fn param_blocks(&self) -> Vec<&[f64]> {
        vec![&self.network.params]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.network.params]
    }

    fn accumulate_grads(
        &self,
        t: &SacTrace,
        d_log_prob: f64,
        d_action: &[f64],
        _d_entropy: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<()> {
        let d = self.action_dim();
        check_len("action gradient", d, d_action.len())?;
        let gl = d_log_prob;
        let mut up = vec![0.0; 2 * d];
        for k in 0..d {
            let a = t.action[k];
            let mut g_x = d_action[k] * (1.0 - a * a);
            let (gx, gm, gls) = gaussian_log_density_partials(t.pre[k], t.head.mean[k], t.head.log_std[k]);
            g_x += gl * gx;
            g_x -= gl * squash_correction_partial(a);
            up[k] = gl * gm + g_x;
            up[d + k] = if t.clamped[k] {
                0.0
            } else {
                gl * gls + g_x * (libm::exp(t.head.log_std[k]) * t.noise[k])
            };
        }
        self.network.backward_into(&t.trace, &up, &mut grads[0])?;
        Ok(())
    }
}
