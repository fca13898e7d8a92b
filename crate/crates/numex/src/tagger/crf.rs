//! Linear-chain CRF primitives over explicit score matrices.
//!
//! A tag sequence y for a length-L input scores
//! `start[y0] + sum_t emissions[t][yt] + sum_t transition[yt][yt+1] + stop[yL-1]`.
//! The log partition function sums exp(score) over all |tags|^L sequences
//! via the forward recursion in log space; forward-backward yields the
//! unary and pairwise marginals the gradient needs.

/// Transition block of one head: dense matrices with forbidden moves
/// pinned at a large negative constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions<'a> {
    /// Row-major `n × n`: score of moving from tag i to tag j.
    pub matrix: &'a [f64],
    pub start: &'a [f64],
    pub stop: &'a [f64],
    pub n: usize,
}

impl<'a> Transitions<'a> {
    fn get(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.n + to]
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log of the partition function. The sequence must be non-empty.
pub fn log_partition(emissions: &[Vec<f64>], trans: &Transitions) -> f64 {
    assert!(
        !emissions.is_empty(),
        "log_partition requires a non-empty sequence"
    );
    let n = trans.n;
    let mut alpha: Vec<f64> = (0..n).map(|y| trans.start[y] + emissions[0][y]).collect();
    let mut scratch = vec![0.0; n];
    for emission in &emissions[1..] {
        let mut next = vec![0.0; n];
        for (y, slot) in next.iter_mut().enumerate() {
            for (x, s) in scratch.iter_mut().enumerate() {
                *s = alpha[x] + trans.get(x, y);
            }
            *slot = log_sum_exp(&scratch) + emission[y];
        }
        alpha = next;
    }
    for (y, a) in alpha.iter_mut().enumerate() {
        *a += trans.stop[y];
    }
    log_sum_exp(&alpha)
}

/// Score of one explicit tag sequence.
pub fn path_score(emissions: &[Vec<f64>], trans: &Transitions, path: &[usize]) -> f64 {
    assert_eq!(emissions.len(), path.len());
    if path.is_empty() {
        return 0.0;
    }
    let mut score = trans.start[path[0]] + emissions[0][path[0]];
    for t in 1..path.len() {
        score += trans.get(path[t - 1], path[t]) + emissions[t][path[t]];
    }
    score + trans.stop[path[path.len() - 1]]
}

/// Highest-scoring tag sequence (empty input gives an empty path).
pub fn viterbi(emissions: &[Vec<f64>], trans: &Transitions) -> Vec<usize> {
    if emissions.is_empty() {
        return Vec::new();
    }
    let n = trans.n;
    let len = emissions.len();
    let mut score: Vec<f64> = (0..n).map(|y| trans.start[y] + emissions[0][y]).collect();
    let mut backpointers: Vec<Vec<usize>> = Vec::with_capacity(len - 1);
    for emission in &emissions[1..] {
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut back = vec![0usize; n];
        for y in 0..n {
            let mut best = f64::NEG_INFINITY;
            let mut best_x = 0;
            for (x, &sx) in score.iter().enumerate() {
                let s = sx + trans.get(x, y);
                if s > best {
                    best = s;
                    best_x = x;
                }
            }
            next[y] = best + emission[y];
            back[y] = best_x;
        }
        score = next;
        backpointers.push(back);
    }
    let mut best_y = 0;
    let mut best = f64::NEG_INFINITY;
    for (y, &sy) in score.iter().enumerate() {
        let s = sy + trans.stop[y];
        if s > best {
            best = s;
            best_y = y;
        }
    }
    let mut path = vec![best_y; len];
    for t in (1..len).rev() {
        path[t - 1] = backpointers[t - 1][path[t]];
    }
    path
}

/// Forward-backward marginals.
pub struct Marginals {
    pub log_z: f64,
    /// `unary[t][y]` = P(y_t = y).
    pub unary: Vec<Vec<f64>>,
    /// `pairwise[t][x * n + y]` = P(y_t = x, y_{t+1} = y), for t in 0..L-1.
    pub pairwise: Vec<Vec<f64>>,
}

pub fn forward_backward(emissions: &[Vec<f64>], trans: &Transitions) -> Marginals {
    assert!(!emissions.is_empty());
    let n = trans.n;
    let len = emissions.len();

    let mut alpha = vec![vec![0.0; n]; len];
    for y in 0..n {
        alpha[0][y] = trans.start[y] + emissions[0][y];
    }
    let mut scratch = vec![0.0; n];
    for t in 1..len {
        for y in 0..n {
            for (x, s) in scratch.iter_mut().enumerate() {
                *s = alpha[t - 1][x] + trans.get(x, y);
            }
            alpha[t][y] = log_sum_exp(&scratch) + emissions[t][y];
        }
    }

    let mut beta = vec![vec![0.0; n]; len];
    beta[len - 1].copy_from_slice(trans.stop);
    for t in (0..len - 1).rev() {
        for x in 0..n {
            for (y, s) in scratch.iter_mut().enumerate() {
                *s = trans.get(x, y) + emissions[t + 1][y] + beta[t + 1][y];
            }
            beta[t][x] = log_sum_exp(&scratch);
        }
    }

    let final_scores: Vec<f64> = (0..n).map(|y| alpha[len - 1][y] + trans.stop[y]).collect();
    let log_z = log_sum_exp(&final_scores);

    let mut unary = vec![vec![0.0; n]; len];
    for t in 0..len {
        for y in 0..n {
            unary[t][y] = (alpha[t][y] + beta[t][y] - log_z).exp();
        }
    }
    let mut pairwise = Vec::with_capacity(len.saturating_sub(1));
    for t in 0..len - 1 {
        let mut pair = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                pair[x * n + y] = (alpha[t][x]
                    + trans.get(x, y)
                    + emissions[t + 1][y]
                    + beta[t + 1][y]
                    - log_z)
                    .exp();
            }
        }
        pairwise.push(pair);
    }
    Marginals {
        log_z,
        unary,
        pairwise,
    }
}
