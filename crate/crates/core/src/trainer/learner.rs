use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objective::der_objective;
use super::weights::{compute_eta, compute_gamma, correct_feature, update_priority, AdaptiveWeights};
use super::Mechanisms;
use crate::buffers::{CounterDesign, FifoBuffer, LayerSpec, PluralStack, Record, Target};
use crate::error::{Error, Result};
use crate::nn::{Adam, HeadKind, Mlp, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub fifo_capacity: usize,
    pub layers: Vec<LayerSpec>,
    pub zeta: f64,
    pub batch_size: usize,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub rho: f64,
    pub lambda: f64,
    pub lr_mult: f64,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub mechanisms: Mechanisms,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            fifo_capacity: 512,
            layers: vec![LayerSpec {
                capacity: 512,
                design: CounterDesign::classic(),
            }],
            zeta: 0.0,
            batch_size: 32,
            alpha_init: 1.0,
            beta_init: 0.5,
            rho: 0.5,
            lambda: 0.5,
            lr_mult: 1e-2,
            learning_rate: 1e-3,
            hidden: vec![32, 32],
            mechanisms: Mechanisms::ALL,
        }
    }
}

/// Diagnostics of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub loss_fifo: f64,
    pub loss_rs: f64,
    pub reg_mean: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta_q: f64,
    /// Regularization records whose stored feature was corrected.
    pub n_corrected: usize,
    /// Mean `1 - gamma_bar` over the regularization half after the update.
    pub blocked_mass: f64,
    pub uniform_fallback: bool,
}

/// Model, optimizer, buffers and multipliers of one continual learner.
#[derive(Debug, Clone)]
pub struct Learner {
    model: Mlp,
    head: HeadKind,
    optimizer: Adam,
    fifo: FifoBuffer,
    stack: PluralStack,
    weights: AdaptiveWeights,
    mechanisms: Mechanisms,
    batch_size: usize,
    next_id: u64,
    steps: u64,
    grads: Vec<f64>,
    trace: Trace,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(
        config: &LearnerConfig,
        head: HeadKind,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if config.batch_size == 0 || config.fifo_capacity == 0 {
            return Err(Error::Config("batch size and FIFO capacity must be positive".into()));
        }
        let mut dims = vec![input_dim];
        dims.extend(&config.hidden);
        dims.push(head.output_dim());
        let model = Mlp::new(&dims, rng);
        Self::with_model(config, head, model)
    }

    pub fn with_model(config: &LearnerConfig, head: HeadKind, model: Mlp) -> Result<Self> {
        if model.output_dim() != head.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: head.output_dim(),
                got: model.output_dim(),
            });
        }
        let stack = PluralStack::new(&config.layers, config.zeta)?;
        let weights = AdaptiveWeights::new(
            config.alpha_init,
            config.beta_init,
            config.rho,
            config.lambda,
            config.lr_mult,
        )?;
        Ok(Self {
            optimizer: Adam::new(model.num_params(), config.learning_rate),
            grads: vec![0.0; model.num_params()],
            model,
            head,
            fifo: FifoBuffer::new(config.fifo_capacity),
            stack,
            weights,
            mechanisms: config.mechanisms,
            batch_size: config.batch_size,
            next_id: 0,
            steps: 0,
            trace: Trace::default(),
        })
    }

    /// Appends one stream datum. The FIFO eviction, if any, is given its
    /// feature under the current model and passed down the reservoir stack.
    pub fn observe<R: Rng + ?Sized>(&mut self, x: Vec<f64>, y: Target, rng: &mut R) -> Result<()> {
        let rec = Record::new(self.next_id, x, y);
        self.next_id += 1;
        if let Some(mut evicted) = self.fifo.push(rec) {
            evicted.z = self.model.forward(&evicted.x)?;
            self.stack.offer(evicted, rng);
        }
        Ok(())
    }

    /// Runs `min(max_updates, fifo_len / batch_size)` steps; returns the last report.
    pub fn train_session<R: Rng + ?Sized>(
        &mut self,
        max_updates: usize,
        rng: &mut R,
    ) -> Result<Option<StepReport>> {
        let updates = max_updates.min(self.fifo.len() / self.batch_size);
        let mut last = None;
        for _ in 0..updates {
            last = Some(self.training_step(rng)?);
        }
        Ok(last)
    }

    /// One replay step: sample, block and correct the regularization half,
    /// track the threshold, then update the network and the multipliers.
    pub fn training_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepReport> {
        if self.fifo.is_empty() {
            return Err(Error::Config("training step needs data in the FIFO buffer".into()));
        }
        let fifo_batch: Vec<Record> = self
            .fifo
            .sample(self.batch_size, rng)
            .into_iter()
            .cloned()
            .collect();
        let replay = self.stack.sample_replay(self.batch_size, rng);
        let reg = &replay.regularization;
        let mech = self.mechanisms;

        // Disagreement of the stored features with the current model.
        let outputs: Vec<Vec<f64>> = reg
            .iter()
            .map(|r| self.model.forward(&r.x))
            .collect::<Result<_>>()?;
        let deltas: Vec<f64> = outputs
            .iter()
            .zip(reg)
            .map(|(h, r)| 0.5 * h.iter().zip(&r.z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let first_batch = self.weights.delta_q.is_none();
        if first_batch {
            self.weights
                .update_delta_q(&deltas, self.batch_size, self.stack.total_capacity());
        }
        let delta_q = self.weights.delta_q_or_zero();
        let rho = self.weights.rho;
        let etas: Vec<f64> = deltas.iter().map(|&d| compute_eta(d, delta_q, rho)).collect();
        let gammas: Vec<f64> = deltas
            .iter()
            .zip(&etas)
            .map(|(&d, &e)| compute_gamma(d, e, delta_q))
            .collect();

        // Blocking and correction write-back.
        let mut n_corrected = 0;
        let mut blocked_mass = 0.0;
        for ((rec, h), &gamma) in reg.iter().zip(&outputs).zip(&gammas) {
            let gamma_bar = if mech.block {
                update_priority(rec.gamma_bar, gamma, self.weights.lambda)
            } else {
                rec.gamma_bar
            };
            blocked_mass += 1.0 - gamma_bar;
            if !(mech.block || mech.correct) {
                continue;
            }
            let z = if mech.correct && gamma > 0.0 {
                n_corrected += 1;
                correct_feature(&rec.z, h, gamma)?
            } else {
                rec.z.clone()
            };
            self.stack.update_feature(rec.id, z, gamma_bar);
        }
        if !reg.is_empty() {
            blocked_mass /= reg.len() as f64;
        }

        if !first_batch {
            self.weights
                .update_delta_q(&deltas, self.batch_size, self.stack.total_capacity());
        }

        let reg_weights: Vec<f64> = if mech.correct {
            gammas.iter().map(|g| (1.0 - g) * (1.0 - g)).collect()
        } else {
            vec![1.0; reg.len()]
        };
        let alpha = self.weights.alpha();
        let beta = self.weights.beta();
        let fifo_refs: Vec<&Record> = fifo_batch.iter().collect();
        let reh_refs: Vec<&Record> = replay.rehearsal.iter().collect();
        let reg_refs: Vec<&Record> = reg.iter().collect();
        let parts = der_objective(
            &self.model,
            self.head,
            &fifo_refs,
            &reh_refs,
            &reg_refs,
            &reg_weights,
            alpha,
            beta,
            &mut self.grads,
            &mut self.trace,
        )?;

        self.optimizer.step(self.model.params_mut(), &self.grads)?;

        if !reg.is_empty() {
            let compensated = deltas
                .iter()
                .zip(&etas)
                .map(|(&d, &e)| if mech.correct { e } else { 1.0 } * (d - delta_q))
                .sum::<f64>()
                / reg.len() as f64;
            let (g_beta, g_alpha) =
                super::weights::multiplier_gradients(parts.fifo, parts.rehearsal, compensated);
            self.weights
                .apply_gradients(g_beta, g_alpha, mech.adapt_beta, mech.adapt_alpha);
        }

        self.steps += 1;
        Ok(StepReport {
            step: self.steps,
            loss_fifo: parts.fifo,
            loss_rs: parts.rehearsal,
            reg_mean: parts.reg,
            alpha: self.weights.alpha(),
            beta: self.weights.beta(),
            delta_q: self.weights.delta_q_or_zero(),
            n_corrected,
            blocked_mass,
            uniform_fallback: replay.uniform_fallback,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.forward(x)
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn fifo(&self) -> &FifoBuffer {
        &self.fifo
    }

    pub fn stack(&self) -> &PluralStack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut PluralStack {
        &mut self.stack
    }

    pub fn weights(&self) -> &AdaptiveWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut AdaptiveWeights {
        &mut self.weights
    }

    pub fn mechanisms(&self) -> Mechanisms {
        self.mechanisms
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}
