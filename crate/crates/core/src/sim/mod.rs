//! Deterministic multi-client quantized-SGD simulator.
//!
//! Each round, every client samples a batch from its partition, clips and
//! averages per-sample gradients, quantizes, adds binomial noise, and ships
//! the codes; the server decodes, aggregates in fixed client order, and
//! steps the model. All randomness is addressed by
//! (master seed, client, round, coordinate), so client work may run on any
//! number of worker threads without changing a single bit of output.

pub mod idx;
pub mod metrics;
pub mod objective;

use crate::codec::{self, QuantizedMessage};
use crate::error::{BqError, Result};
use crate::planner::Plan;
use crate::privacy::{PrivacyLedger, PrivacySpec};
use crate::rng::{Purpose, Stream};
use crate::wire;
use metrics::{ClientRoundMetrics, MetricsRow};
use objective::Objective;
use rand::seq::SliceRandom;

/// One simulated client: identity, aggregation weight, sampling and budget
/// parameters, solved plan, and data partition (global sample indices).
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub id: u32,
    pub weight: f64,
    pub batch_size: usize,
    pub privacy: PrivacySpec,
    pub plan: Plan,
    pub partition: Vec<usize>,
}

/// Global training parameters.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub rounds: u64,
    pub clip_bound: f64,
    pub master_seed: u64,
    /// Recompute the full gradient norm every this many rounds (1 = every
    /// round). Rows in between carry the last computed value.
    pub eval_every: u64,
    /// Worker-thread cap for client steps. Affects speed only.
    pub threads: usize,
    pub theta0: Option<Vec<f64>>,
    /// Collect per-client wire-frame traces in the output.
    pub collect_traces: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            rounds: 100,
            clip_bound: 1.0,
            master_seed: 0,
            eval_every: 1,
            threads: 1,
            theta0: None,
            collect_traces: false,
        }
    }
}

/// Everything a run produces.
#[derive(Debug)]
pub struct TrainOutput {
    pub metrics: Vec<MetricsRow>,
    pub theta: Vec<f64>,
    pub ledgers: Vec<PrivacyLedger>,
    /// Payload bits actually sent, summed over clients and rounds.
    pub total_payload_bits: u64,
    /// Header bits, reported separately from the paper-facing cost.
    pub total_header_bits: u64,
    /// Round at which the divergence guard tripped, if it did.
    pub diverged_at: Option<u64>,
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
    pub warnings: Vec<String>,
    /// Concatenated wire frames per client when trace collection is on.
    pub traces: Vec<Vec<u8>>,
}

/// Split 0..n_samples into `clients` disjoint, exhaustive partitions:
/// shuffle under the partition stream, then deal round-robin so any
/// remainder spreads one extra sample over the first partitions.
pub fn partition_data(n_samples: usize, clients: usize, master_seed: u64) -> Result<Vec<Vec<usize>>> {
    if clients == 0 {
        return Err(BqError::InvalidConfig("need at least one client".into()));
    }
    if clients > n_samples {
        return Err(BqError::InvalidConfig(format!(
            "{clients} clients cannot split {n_samples} samples"
        )));
    }
    let mut indices: Vec<usize> = (0..n_samples).collect();
    let mut rng = Stream::new(master_seed, u32::MAX, 0, Purpose::Partition).whole();
    indices.shuffle(&mut rng);
    let mut partitions = vec![Vec::with_capacity(n_samples / clients + 1); clients];
    for (i, idx) in indices.into_iter().enumerate() {
        partitions[i % clients].push(idx);
    }
    Ok(partitions)
}

/// Expected partition sizes without materializing the partitions.
pub fn partition_sizes(n_samples: usize, clients: usize) -> Vec<usize> {
    (0..clients)
        .map(|i| n_samples / clients + usize::from(i < n_samples % clients))
        .collect()
}

/// One client round: sample a batch without replacement, clip-average the
/// per-sample gradients, quantize, add noise.
pub fn local_step(
    client: &ClientConfig,
    theta: &[f64],
    obj: &dyn Objective,
    clip_bound: f64,
    master_seed: u64,
    round: u64,
) -> Result<QuantizedMessage> {
    let n = client.partition.len();
    let batch = client.batch_size;
    if batch == 0 || batch > n {
        return Err(BqError::InvalidConfig(format!(
            "client {}: batch size {batch} not in [1, {n}]",
            client.id
        )));
    }
    let mut rng = Stream::new(master_seed, client.id, round, Purpose::BatchSample).whole();
    let picks = rand::seq::index::sample(&mut rng, n, batch);

    let mut grads = Vec::with_capacity(batch);
    let mut g = vec![0.0; obj.dimension()];
    for local in picks.iter() {
        obj.gradient(theta, client.partition[local], &mut g);
        grads.push(g.clone());
    }
    let clipped = codec::clip_batch_average(&grads, clip_bound)?;

    let config = client.plan.to_config(clip_bound)?;
    let quantize_stream = Stream::new(master_seed, client.id, round, Purpose::Quantize);
    let noise_stream = Stream::new(master_seed, client.id, round, Purpose::Noise);
    codec::encode(&clipped, &config, &quantize_stream, &noise_stream)
}

/// Weighted server aggregate: sum_i p_i decode(msg_i), in the order given
/// (ascending client id by convention).
pub fn aggregate(messages: &[QuantizedMessage], weights: &[f64]) -> Result<Vec<f64>> {
    if messages.len() != weights.len() {
        return Err(BqError::IncompleteRound {
            expected: weights.len(),
            got: messages.len(),
        });
    }
    let d = messages
        .first()
        .ok_or(BqError::IncompleteRound {
            expected: 1,
            got: 0,
        })?
        .dimension();
    let mut total = vec![0.0f64; d];
    for (msg, &p) in messages.iter().zip(weights) {
        if msg.dimension() != d {
            return Err(BqError::InvalidInput(format!(
                "message dimension {} does not match {d}",
                msg.dimension()
            )));
        }
        for (acc, v) in total.iter_mut().zip(codec::decode(msg)?) {
            *acc += p * v;
        }
    }
    Ok(total)
}

/// Weighted full objective: F(theta) = sum_i p_i mean_{xi in D_i} l(theta; xi).
pub fn weighted_full_loss(
    obj: &dyn Objective,
    theta: &[f64],
    clients: &[ClientConfig],
) -> f64 {
    clients
        .iter()
        .map(|c| c.weight * objective::mean_loss(obj, theta, &c.partition))
        .sum()
}

/// Weighted full gradient, matching `weighted_full_loss`.
pub fn weighted_full_gradient(
    obj: &dyn Objective,
    theta: &[f64],
    clients: &[ClientConfig],
    out: &mut [f64],
) {
    out.fill(0.0);
    let mut part = vec![0.0; theta.len()];
    for c in clients {
        objective::mean_gradient(obj, theta, &c.partition, &mut part);
        for (acc, v) in out.iter_mut().zip(&part) {
            *acc += c.weight * v;
        }
    }
}

fn validate_setup(
    cfg: &TrainingConfig,
    clients: &[ClientConfig],
    obj: &dyn Objective,
) -> Result<Vec<String>> {
    if clients.is_empty() {
        return Err(BqError::InvalidConfig("need at least one client".into()));
    }
    let weight_sum: f64 = clients.iter().map(|c| c.weight).sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(BqError::InvalidConfig(format!(
            "client weights must sum to 1, got {weight_sum}"
        )));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(BqError::InvalidConfig(format!(
            "learning rate must be nonnegative, got {}",
            cfg.learning_rate
        )));
    }
    let mut warnings = Vec::new();
    for c in clients {
        if !c.plan.feasible {
            return Err(BqError::InfeasibleBudget {
                budget: c.plan.bit_budget,
                min_bits: c.plan.min_bits,
            });
        }
        if c.batch_size == 0 || c.batch_size > c.partition.len() {
            return Err(BqError::InvalidConfig(format!(
                "client {}: batch size {} not in [1, {}]",
                c.id,
                c.batch_size,
                c.partition.len()
            )));
        }
        if !c.plan.has_privacy_guarantee() {
            warnings.push(format!(
                "client {}: plan has m = 0, no privacy guarantee this run",
                c.id
            ));
        }
        if c.batch_size as u64 <= 2 * u64::from(c.plan.s) {
            warnings.push(format!(
                "client {}: batch size {} <= 2s = {}; the adjacent-bin argument behind \
                 the per-round epsilon may not apply",
                c.id,
                c.batch_size,
                2 * c.plan.s
            ));
        }
    }
    if let Some(nu) = obj.smoothness() {
        if cfg.learning_rate > 1.0 / nu {
            warnings.push(format!(
                "learning rate {} exceeds 1/smoothness = {}; the convergence bound \
                 hypothesis does not hold",
                cfg.learning_rate,
                1.0 / nu
            ));
        }
    }
    Ok(warnings)
}

fn run_clients(
    cfg: &TrainingConfig,
    clients: &[ClientConfig],
    obj: &dyn Objective,
    theta: &[f64],
    round: u64,
) -> Result<Vec<QuantizedMessage>> {
    let workers = cfg.threads.max(1).min(clients.len());
    if workers <= 1 {
        return clients
            .iter()
            .map(|c| local_step(c, theta, obj, cfg.clip_bound, cfg.master_seed, round))
            .collect();
    }
    let mut slots: Vec<Option<Result<QuantizedMessage>>> =
        (0..clients.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers {
            let clients_ref = clients;
            let handle = scope.spawn(move || {
                let mut out = Vec::new();
                let mut i = w;
                while i < clients_ref.len() {
                    let msg = local_step(
                        &clients_ref[i],
                        theta,
                        obj,
                        cfg.clip_bound,
                        cfg.master_seed,
                        round,
                    );
                    out.push((i, msg));
                    i += workers;
                }
                out
            });
            handles.push(handle);
        }
        for handle in handles {
            for (i, msg) in handle.join().expect("client worker panicked") {
                slots[i] = Some(msg);
            }
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every client slot filled"))
        .collect()
}

/// Run T rounds of quantized distributed SGD.
pub fn train(
    cfg: &TrainingConfig,
    clients: &[ClientConfig],
    obj: &dyn Objective,
) -> Result<TrainOutput> {
    let warnings = validate_setup(cfg, clients, obj)?;
    let d = obj.dimension();
    let mut theta = match &cfg.theta0 {
        Some(t0) => {
            if t0.len() != d {
                return Err(BqError::InvalidConfig(format!(
                    "theta0 has dimension {}, objective needs {d}",
                    t0.len()
                )));
            }
            t0.clone()
        }
        None => vec![0.0; d],
    };

    let weights: Vec<f64> = clients.iter().map(|c| c.weight).collect();
    let per_round_bits: Vec<u64> = clients
        .iter()
        .map(|c| wire::frame_cost_bits(d as u64, c.plan.s, c.plan.m))
        .collect();
    let mut ledgers: Vec<PrivacyLedger> = clients.iter().map(|_| PrivacyLedger::new()).collect();
    let mut traces: Vec<Vec<u8>> = clients.iter().map(|_| Vec::new()).collect();

    let mut rows: Vec<MetricsRow> = Vec::with_capacity(cfg.rounds as usize);
    let mut grad_buf = vec![0.0; d];
    let mut grad_norm_sq = f64::NAN;
    let mut diverged_at = None;
    let mut guard = f64::INFINITY;
    let mut rounds_done: u64 = 0;

    for round in 0..cfg.rounds {
        let loss = weighted_full_loss(obj, &theta, clients);
        if round == 0 {
            guard = 1e6 * loss.abs().max(f64::MIN_POSITIVE);
        } else if loss > guard {
            diverged_at = Some(round);
        }
        let eval_round = cfg.eval_every <= 1 || round % cfg.eval_every == 0 || grad_norm_sq.is_nan();
        if eval_round {
            weighted_full_gradient(obj, &theta, clients, &mut grad_buf);
            grad_norm_sq = grad_buf.iter().map(|g| g * g).sum();
        }

        if diverged_at.is_some() {
            break;
        }

        let messages = run_clients(cfg, clients, obj, &theta, round)?;
        let mean_grad = aggregate(&messages, &weights)?;
        let agg_second_moment: f64 = mean_grad.iter().map(|g| g * g).sum();

        let mut per_client = Vec::with_capacity(clients.len());
        for (i, c) in clients.iter().enumerate() {
            ledgers[i].record(
                round,
                c.plan.achieved_epsilon,
                c.privacy.delta_target,
            );
            let totals = ledgers[i].totals().expect("ledger has entries");
            per_client.push(ClientRoundMetrics {
                cum_payload_bits: (round + 1) * per_round_bits[i],
                eps_total_exact: totals.epsilon_exact,
                eps_total_simplified: totals.epsilon_simplified,
                delta_total: totals.delta_simplified,
            });
            if cfg.collect_traces {
                traces[i].extend(wire::encode_frame(&messages[i], round, c.id)?);
            }
        }
        rows.push(MetricsRow {
            round,
            loss,
            grad_norm_sq,
            agg_second_moment,
            per_client,
        });
        rounds_done = round + 1;

        for (t, g) in theta.iter_mut().zip(&mean_grad) {
            *t -= cfg.learning_rate * g;
        }
    }

    let total_payload_bits = rounds_done * per_round_bits.iter().sum::<u64>();
    let total_header_bits = rounds_done * clients.len() as u64 * wire::header_cost_bits();
    let final_loss = weighted_full_loss(obj, &theta, clients);
    let final_accuracy = obj.accuracy(&theta);
    Ok(TrainOutput {
        metrics: rows,
        theta,
        ledgers,
        total_payload_bits,
        total_header_bits,
        diverged_at,
        final_loss,
        final_accuracy,
        warnings,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner;
    use crate::privacy::ClientDataProfile;
    use objective::{generate_synthetic, QuadraticObjective, SyntheticTask};

    fn manual_plan(s: u32, m: u32, bits: u32) -> Plan {
        Plan {
            s,
            m,
            ratio: f64::NAN,
            bit_budget: bits,
            width_bits: wire::code_width_bits(s, m),
            achieved_epsilon: if m == 0 { f64::INFINITY } else { 0.1 },
            gaussian_epsilon: f64::INFINITY,
            variance: codec::noise_variance(&codec::BqConfig::new(1.0, s, m).unwrap()),
            feasible: true,
            min_bits: 0.0,
            clamped_s: false,
            capped_m: false,
        }
    }

    fn quadratic_clients(
        n: usize,
        clients: usize,
        batch: usize,
        plan: Plan,
        seed: u64,
    ) -> Vec<ClientConfig> {
        let partitions = partition_data(n, clients, seed).unwrap();
        partitions
            .into_iter()
            .enumerate()
            .map(|(i, partition)| ClientConfig {
                id: i as u32,
                weight: 1.0 / clients as f64,
                batch_size: batch,
                privacy: PrivacySpec::new(1.0, 1e-4).unwrap(),
                plan,
                partition,
            })
            .collect()
    }

    #[test]
    fn partition_even_and_remainder() {
        let parts = partition_data(12, 4, 1).unwrap();
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 3]);
        let parts = partition_data(13, 4, 1).unwrap();
        assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3, 3]);
        assert_eq!(partition_sizes(13, 4), vec![4, 3, 3, 3]);

        // Disjoint and exhaustive.
        let mut all: Vec<usize> = parts.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..13).collect::<Vec<_>>());
    }

    #[test]
    fn partition_is_deterministic() {
        assert_eq!(
            partition_data(100, 7, 9).unwrap(),
            partition_data(100, 7, 9).unwrap()
        );
        assert_ne!(
            partition_data(100, 7, 9).unwrap(),
            partition_data(100, 7, 10).unwrap()
        );
    }

    #[test]
    fn partition_rejects_too_many_clients() {
        assert!(partition_data(3, 4, 0).is_err());
    }

    #[test]
    fn near_lossless_local_step_recovers_clipped_gradient() {
        // m = 0 and a huge s: decode error is bounded by C/s per coordinate.
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.5 }, 4, 64, 3).unwrap();
        let plan = manual_plan(i32::MAX as u32, 0, 33);
        let clients = quadratic_clients(64, 1, 64, plan, 3);
        let theta = vec![0.2, -0.1, 0.0, 0.4];
        let msg = local_step(&clients[0], &theta, obj.as_ref(), 4.0, 3, 0).unwrap();
        let decoded = codec::decode(&msg).unwrap();

        let mut grads = Vec::new();
        let mut g = vec![0.0; 4];
        for &i in &clients[0].partition {
            obj.gradient(&theta, i, &mut g);
            grads.push(g.clone());
        }
        let clipped = codec::clip_batch_average(&grads, 4.0).unwrap();
        let bin = 2.0 * 4.0 / i32::MAX as f64;
        for (dec, want) in decoded.iter().zip(&clipped) {
            assert!((dec - want).abs() <= bin, "{dec} vs {want}");
        }
    }

    #[test]
    fn local_step_is_unbiased_over_batches_and_noise() {
        // Mean decoded gradient over repeated rounds at fixed theta matches
        // the partition's clipped full gradient within a 3-sigma band.
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.3 }, 3, 40, 5).unwrap();
        let plan = manual_plan(4, 8, 5);
        let clients = quadratic_clients(40, 1, 8, plan, 5);
        let client = &clients[0];
        let theta = vec![0.1, -0.2, 0.3];
        let clip = 1.0;

        // Expectation over batches of the clipped batch average equals the
        // mean clipped per-sample gradient.
        let mut g = vec![0.0; 3];
        let mut want = vec![0.0; 3];
        for &i in &client.partition {
            obj.gradient(&theta, i, &mut g);
            let c = codec::clip_per_sample(&g, clip).unwrap();
            for (w, v) in want.iter_mut().zip(&c) {
                *w += v;
            }
        }
        for w in &mut want {
            *w /= client.partition.len() as f64;
        }

        let trials = 20_000u64;
        let mut mean = vec![0.0; 3];
        for round in 0..trials {
            let msg = local_step(client, &theta, obj.as_ref(), clip, 5, round).unwrap();
            for (acc, v) in mean.iter_mut().zip(codec::decode(&msg).unwrap()) {
                *acc += v;
            }
        }
        let mut err_sq = 0.0;
        for (acc, w) in mean.iter().zip(&want) {
            let diff = acc / trials as f64 - w;
            err_sq += diff * diff;
        }
        // Conservative per-coordinate variance: codec noise + batch spread.
        let var = codec::noise_variance(&plan.to_config(clip).unwrap()) + 1.0;
        let band = 3.0 * (var * 3.0 / trials as f64).sqrt();
        assert!(err_sq.sqrt() < band, "err {} band {band}", err_sq.sqrt());

        // Message respects the plan's alphabet.
        let msg = local_step(client, &theta, obj.as_ref(), clip, 5, 0).unwrap();
        let (lo, hi) = msg.config.code_range();
        assert!(msg.codes.iter().all(|c| (lo..=hi).contains(c)));
    }

    #[test]
    fn aggregate_single_client_is_plain_decode() {
        let cfg = codec::BqConfig::new(1.0, 2, 4).unwrap();
        let msg = QuantizedMessage {
            codes: vec![3, 0, -2],
            config: cfg,
        };
        let agg = aggregate(std::slice::from_ref(&msg), &[1.0]).unwrap();
        assert_eq!(agg, codec::decode(&msg).unwrap());
    }

    #[test]
    fn aggregate_identical_messages_is_identity() {
        let cfg = codec::BqConfig::new(1.0, 2, 4).unwrap();
        let msg = QuantizedMessage {
            codes: vec![3, 0, -2],
            config: cfg,
        };
        let msgs = vec![msg.clone(), msg.clone(), msg.clone(), msg.clone()];
        let agg = aggregate(&msgs, &[0.25; 4]).unwrap();
        for (a, b) in agg.iter().zip(codec::decode(&msg).unwrap()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_missing_client_is_incomplete_round() {
        let cfg = codec::BqConfig::new(1.0, 2, 4).unwrap();
        let msg = QuantizedMessage {
            codes: vec![0],
            config: cfg,
        };
        let err = aggregate(std::slice::from_ref(&msg), &[0.5, 0.5]);
        assert!(matches!(err, Err(BqError::IncompleteRound { .. })));
    }

    #[test]
    fn zero_learning_rate_freezes_the_model() {
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 1.0 }, 3, 24, 7).unwrap();
        let clients = quadratic_clients(24, 3, 4, manual_plan(2, 4, 4), 7);
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            rounds: 10,
            clip_bound: 2.0,
            master_seed: 7,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &clients, obj.as_ref()).unwrap();
        assert_eq!(out.theta, vec![0.0; 3]);
        let first = out.metrics[0].loss;
        assert!(out.metrics.iter().all(|r| r.loss == first));
    }

    #[test]
    fn unquantized_full_batch_contracts_exactly() {
        // Quadratic, no noise, near-lossless quantizer, full batch:
        // theta - theta* shrinks by (1 - eta) per round up to bin width.
        let centers: Vec<f64> = vec![0.3, -0.6].repeat(8); // identical centers
        let obj = QuadraticObjective::new(centers, 2).unwrap();
        let clients = quadratic_clients(8, 2, 4, manual_plan(i32::MAX as u32, 0, 33), 1);
        let eta = 0.25;
        let cfg = TrainingConfig {
            learning_rate: eta,
            rounds: 30,
            clip_bound: 2.0,
            master_seed: 1,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &clients, &obj).unwrap();
        let want = [0.3 * (1.0 - (1.0 - eta).powi(30)), -0.6 * (1.0 - (1.0 - eta).powi(30))];
        for (t, w) in out.theta.iter().zip(want) {
            assert!((t - w).abs() < 1e-6, "{t} vs {w}");
        }
    }

    #[test]
    fn train_is_schedule_invariant() {
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.5 }, 5, 40, 11).unwrap();
        let clients = quadratic_clients(40, 4, 8, manual_plan(3, 6, 5), 11);
        let base = TrainingConfig {
            learning_rate: 0.1,
            rounds: 12,
            clip_bound: 2.0,
            master_seed: 11,
            ..TrainingConfig::default()
        };
        let seq = train(&base, &clients, obj.as_ref()).unwrap();
        let par = train(
            &TrainingConfig {
                threads: 8,
                ..base.clone()
            },
            &clients,
            obj.as_ref(),
        )
        .unwrap();
        assert_eq!(seq.theta, par.theta);
        assert_eq!(seq.metrics, par.metrics);
    }

    #[test]
    fn divergence_guard_trips() {
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.5 }, 2, 16, 13).unwrap();
        let clients = quadratic_clients(16, 2, 4, manual_plan(2, 0, 3), 13);
        // Wildly unstable step for a 1-smooth objective.
        let cfg = TrainingConfig {
            learning_rate: 25.0,
            rounds: 40,
            clip_bound: 50.0,
            master_seed: 13,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &clients, obj.as_ref()).unwrap();
        assert!(out.diverged_at.is_some());
        assert!(!out.metrics.is_empty());
        assert!(!out.warnings.is_empty()); // eta > 1/nu warning
    }

    #[test]
    fn cumulative_bits_match_width_identity() {
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.5 }, 6, 36, 17).unwrap();
        let profile = ClientDataProfile::new(12, 4, 6).unwrap();
        let spec = PrivacySpec::new(8.0, 1e-3).unwrap();
        let plan = planner::solve(&profile, &spec, 5);
        assert!(plan.feasible);
        let clients = quadratic_clients(36, 3, 4, plan, 17);
        let cfg = TrainingConfig {
            learning_rate: 0.05,
            rounds: 9,
            clip_bound: 2.0,
            master_seed: 17,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &clients, obj.as_ref()).unwrap();
        let w = u64::from(plan.width_bits);
        assert_eq!(out.total_payload_bits, 9 * 3 * 6 * w);
        let last = out.metrics.last().unwrap();
        for c in &last.per_client {
            assert_eq!(c.cum_payload_bits, 9 * 6 * w);
        }
    }

    #[test]
    fn ledger_totals_follow_simplified_identity() {
        let obj = generate_synthetic(SyntheticTask::Quadratic { spread: 0.5 }, 3, 24, 19).unwrap();
        let profile = ClientDataProfile::new(8, 4, 3).unwrap();
        let spec = PrivacySpec::new(5.0, 1e-3).unwrap();
        let plan = planner::solve(&profile, &spec, 6);
        assert!(plan.feasible && plan.has_privacy_guarantee());
        let mut clients = quadratic_clients(24, 3, 4, plan, 19);
        for c in &mut clients {
            c.privacy = spec;
        }
        let rounds = 25u64;
        let cfg = TrainingConfig {
            learning_rate: 0.05,
            rounds,
            clip_bound: 2.0,
            master_seed: 19,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &clients, obj.as_ref()).unwrap();
        let eps = plan.achieved_epsilon;
        let want = (2.0 * rounds as f64 * (1.0f64 / 1e-3).ln()).sqrt() * eps;
        for ledger in &out.ledgers {
            let totals = ledger.totals().unwrap();
            assert_eq!(totals.epsilon_simplified, want);
            assert_eq!(totals.delta_simplified, rounds as f64 * 1e-3);
        }
    }
}
