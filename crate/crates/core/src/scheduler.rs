//! Simulated-annealing user scheduling.
//!
//! A nearest-greedy tour seeds the search; each iteration perturbs the
//! current schedule with one of three neighborhood operators drawn from a
//! temperature-dependent distribution (large perturbations favored while
//! hot), accepts by the Metropolis criterion, and tracks the best schedule
//! seen. Distances are 2-D ground distances: scheduling happens before
//! flight, so altitude is excluded.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::Vec3;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("schedule index {index} out of range for {users} users")]
    IndexOutOfRange { index: usize, users: usize },
    #[error("schedule is not a permutation of 0..{0}")]
    NotAPermutation(usize),
}

/// A visiting order over user indices; always a permutation of `0..K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub order: Vec<usize>,
}

impl Schedule {
    pub fn identity(k: usize) -> Self {
        Self {
            order: (0..k).collect(),
        }
    }

    pub fn validate(&self, users: usize) -> Result<(), ScheduleError> {
        if self.order.len() != users {
            return Err(ScheduleError::NotAPermutation(users));
        }
        let mut seen = vec![false; users];
        for &i in &self.order {
            if i >= users {
                return Err(ScheduleError::IndexOutOfRange { index: i, users });
            }
            if seen[i] {
                return Err(ScheduleError::NotAPermutation(users));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Annealing hyperparameters. `op_bias` / `op_sensitivity` are keyed by
/// [`Operator`] order: swap, insert-move, reverse-subsequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealParams {
    pub t0: f64,
    pub cooling: f64,
    pub max_iter: usize,
    pub op_bias: [f64; 3],
    pub op_sensitivity: [f64; 3],
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            t0: 2000.0,
            cooling: 0.998,
            max_iter: 4000,
            op_bias: [3.0, 2.0, 1.0],
            op_sensitivity: [1.0, 1.1, 1.2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Swap,
    InsertMove,
    ReverseSubsequence,
}

const OPERATORS: [Operator; 3] = [
    Operator::Swap,
    Operator::InsertMove,
    Operator::ReverseSubsequence,
];

/// Open-path tour length: start -> users in schedule order, no return leg.
pub fn tour_length(
    start: &Vec3,
    sched: &Schedule,
    users: &[Vec3],
) -> Result<f64, ScheduleError> {
    let mut total = 0.0;
    let mut current = *start;
    for &idx in &sched.order {
        let next = *users
            .get(idx)
            .ok_or(ScheduleError::IndexOutOfRange {
                index: idx,
                users: users.len(),
            })?;
        total += current.ground_distance(&next);
        current = next;
    }
    Ok(total)
}

/// Nearest-greedy construction: repeatedly append the closest unvisited
/// user. Ties go to the lowest index.
pub fn greedy_init(start: &Vec3, users: &[Vec3]) -> (Schedule, f64) {
    let k = users.len();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut order = Vec::with_capacity(k);
    let mut current = *start;
    let mut total = 0.0;
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &idx)| (pos, current.ground_distance(&users[idx])))
            .fold((0usize, f64::INFINITY), |best, (pos, d)| {
                if d < best.1 {
                    (pos, d)
                } else {
                    best
                }
            });
        let idx = remaining.remove(pos);
        total += current.ground_distance(&users[idx]);
        current = users[idx];
        order.push(idx);
    }
    (Schedule { order }, total)
}

/// Operator selection probabilities `P(o|T) ∝ β_o exp(α_o T)`, evaluated in
/// log space with max subtraction so large `α_o T` never overflows.
pub fn operator_probs(temperature: f64, params: &AnnealParams) -> [f64; 3] {
    let mut logits = [0.0f64; 3];
    for i in 0..3 {
        logits[i] = params.op_bias[i].ln() + params.op_sensitivity[i] * temperature;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0f64; 3];
    let mut total = 0.0;
    for i in 0..3 {
        probs[i] = (logits[i] - max).exp();
        total += probs[i];
    }
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Draw a neighborhood operator from `P(o|T)`.
pub fn select_operator<R: Rng + ?Sized>(
    temperature: f64,
    params: &AnnealParams,
    rng: &mut R,
) -> Operator {
    let probs = operator_probs(temperature, params);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return OPERATORS[i];
        }
    }
    OPERATORS[2]
}

/// Apply one neighborhood operator; returns the input unchanged when the
/// schedule is too short to perturb.
pub fn apply_operator<R: Rng + ?Sized>(
    sched: &Schedule,
    op: Operator,
    rng: &mut R,
) -> Schedule {
    let k = sched.order.len();
    if k < 2 {
        return sched.clone();
    }
    let mut order = sched.order.clone();
    match op {
        Operator::Swap => {
            let i = rng.gen_range(0..k);
            let mut j = rng.gen_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            order.swap(i, j);
        }
        Operator::InsertMove => {
            let from = rng.gen_range(0..k);
            let mut to = rng.gen_range(0..k - 1);
            if to >= from {
                to += 1;
            }
            let v = order.remove(from);
            order.insert(to.min(order.len()), v);
        }
        Operator::ReverseSubsequence => {
            let i = rng.gen_range(0..k - 1);
            let j = rng.gen_range(i + 1..k);
            order[i..=j].reverse();
        }
    }
    Schedule { order }
}

/// Result of one annealing run.
#[derive(Debug, Clone)]
pub struct AnnealOutcome {
    pub schedule: Schedule,
    pub length: f64,
    /// Best-so-far length after each iteration, present when tracing was
    /// requested.
    pub trace: Option<Vec<f64>>,
}

/// Greedy-seeded simulated annealing over visiting orders.
pub fn anneal(
    start: &Vec3,
    users: &[Vec3],
    params: &AnnealParams,
    rng: &mut ChaCha8Rng,
) -> AnnealOutcome {
    anneal_impl(start, users, params, rng, false)
}

/// Like [`anneal`] but records the best-length trace per iteration.
pub fn anneal_traced(
    start: &Vec3,
    users: &[Vec3],
    params: &AnnealParams,
    rng: &mut ChaCha8Rng,
) -> AnnealOutcome {
    anneal_impl(start, users, params, rng, true)
}

fn anneal_impl(
    start: &Vec3,
    users: &[Vec3],
    params: &AnnealParams,
    rng: &mut ChaCha8Rng,
    record_trace: bool,
) -> AnnealOutcome {
    let (greedy, greedy_len) = greedy_init(start, users);
    let mut current = greedy.clone();
    let mut current_len = greedy_len;
    let mut best = greedy;
    let mut best_len = greedy_len;
    let mut temperature = params.t0;
    let mut trace = record_trace.then(|| Vec::with_capacity(params.max_iter));

    for _ in 0..params.max_iter {
        let op = select_operator(temperature, params, rng);
        let candidate = apply_operator(&current, op, rng);
        let candidate_len =
            tour_length(start, &candidate, users).expect("operator preserves permutation");
        let r: f64 = rng.gen();
        if candidate_len < current_len
            || r < ((current_len - candidate_len) / temperature).exp()
        {
            current = candidate;
            current_len = candidate_len;
        }
        if current_len < best_len {
            best = current.clone();
            best_len = current_len;
        }
        if let Some(t) = trace.as_mut() {
            t.push(best_len);
        }
        temperature *= params.cooling;
    }
    AnnealOutcome {
        schedule: best,
        length: best_len,
        trace,
    }
}

/// Classical baseline: random initial order, swap-only neighborhood, same
/// Metropolis acceptance and cooling budget.
pub fn anneal_classical(
    start: &Vec3,
    users: &[Vec3],
    params: &AnnealParams,
    rng: &mut ChaCha8Rng,
) -> AnnealOutcome {
    let k = users.len();
    let mut order: Vec<usize> = (0..k).collect();
    // Fisher-Yates shuffle.
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut current = Schedule { order };
    let mut current_len = tour_length(start, &current, users).expect("valid permutation");
    let mut best = current.clone();
    let mut best_len = current_len;
    let mut temperature = params.t0;

    for _ in 0..params.max_iter {
        let candidate = apply_operator(&current, Operator::Swap, rng);
        let candidate_len =
            tour_length(start, &candidate, users).expect("operator preserves permutation");
        let r: f64 = rng.gen();
        if candidate_len < current_len
            || r < ((current_len - candidate_len) / temperature).exp()
        {
            current = candidate;
            current_len = candidate_len;
        }
        if current_len < best_len {
            best = current.clone();
            best_len = current_len;
        }
        temperature *= params.cooling;
    }
    AnnealOutcome {
        schedule: best,
        length: best_len,
        trace: None,
    }
}

/// Exhaustive minimum tour length; usable up to ~8 users.
pub fn brute_force_optimum(start: &Vec3, users: &[Vec3]) -> f64 {
    fn recurse(
        start: &Vec3,
        users: &[Vec3],
        current: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut f64,
    ) {
        if current.len() == users.len() {
            let sched = Schedule {
                order: current.clone(),
            };
            let len = tour_length(start, &sched, users).unwrap();
            if len < *best {
                *best = len;
            }
            return;
        }
        for i in 0..users.len() {
            if !used[i] {
                used[i] = true;
                current.push(i);
                recurse(start, users, current, used, best);
                current.pop();
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    recurse(
        start,
        users,
        &mut Vec::new(),
        &mut vec![false; users.len()],
        &mut best,
    );
    best
}
