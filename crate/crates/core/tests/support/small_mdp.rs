//! Policy evaluation on a five-state chain with two actions.
//!
//! The learner uses the same pieces as the single-critic agent: `Q` regresses
//! onto `r + gamma * V_targ(s')`, `V` regresses onto `Q` under the fixed
//! policy, and `V_targ` tracks `V` by Polyak averaging. Transitions are
//! stochastic but every backup takes the exact expectation, so the only error
//! left is the fit itself. The oracle solves `(I - gamma P Pi) Q = R`.

use opac_core::algos::losses::{q_target_single, regression_loss};
use opac_core::diffcore::{
    optimizer_step, polyak_update, Activation, Matrix, Mlp, MlpSpec, OptimizerConfig,
};
use opac_core::seeding::{SeedFan, Stream};

pub const STATES: usize = 5;
pub const ACTIONS: usize = 2;
pub const GAMMA: f64 = 0.9;
pub const RHO: f64 = 0.99;

/// Action values of the two discrete choices, placed on the continuous axis.
const ACTION_VALUES: [f64; ACTIONS] = [-1.0, 1.0];

pub struct Mdp {
    /// `p[s][a][s']`
    pub p: Vec<[[f64; STATES]; ACTIONS]>,
    pub r: [[f64; ACTIONS]; STATES],
    pub pi: [[f64; ACTIONS]; STATES],
}

impl Mdp {
    /// A discretized line: action -1 drifts left, +1 drifts right, with a
    /// chance of staying put. Reward grows toward the right end and pushing
    /// against a wall costs a little.
    pub fn chain() -> Self {
        let mut p = vec![[[0.0; STATES]; ACTIONS]; STATES];
        let mut r = [[0.0; ACTIONS]; STATES];
        for s in 0..STATES {
            for (a, dir) in [(0usize, -1i64), (1, 1)] {
                let next = (s as i64 + dir).clamp(0, STATES as i64 - 1) as usize;
                p[s][a][next] += 0.8;
                p[s][a][s] += 0.2;
                r[s][a] = s as f64 / (STATES - 1) as f64 - if next == s { 0.3 } else { 0.0 };
            }
        }
        let pi = std::array::from_fn(|s| {
            let right = 0.3 + 0.1 * s as f64;
            [1.0 - right, right]
        });
        Self { p, r, pi }
    }

    fn index(s: usize, a: usize) -> usize {
        s * ACTIONS + a
    }

    /// Exact `Q^pi` by Gaussian elimination with partial pivoting.
    pub fn exact_q(&self) -> Vec<f64> {
        let n = STATES * ACTIONS;
        let mut m = vec![vec![0.0; n + 1]; n];
        for s in 0..STATES {
            for a in 0..ACTIONS {
                let row = Self::index(s, a);
                m[row][row] += 1.0;
                for s2 in 0..STATES {
                    for a2 in 0..ACTIONS {
                        m[row][Self::index(s2, a2)] -= GAMMA * self.p[s][a][s2] * self.pi[s2][a2];
                    }
                }
                m[row][n] = self.r[s][a];
            }
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, pivot);
            for row in 0..n {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..=n {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        (0..n).map(|i| m[i][n] / m[i][i]).collect()
    }
}

fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; STATES];
    v[s] = 1.0;
    v
}

/// Trains `Q`, `V` and `V_targ` for `updates` full-batch steps and returns
/// the learned `Q` in `(s, a)` order.
pub fn learn_q(mdp: &Mdp, updates: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedFan::new(seed).stream(Stream::Init);
    let spec = |input| MlpSpec::new(input, vec![16], 1, Activation::Tanh);
    let mut q = Mlp::new(spec(STATES + 1), &mut rng).unwrap();
    let mut v = Mlp::new(spec(STATES), &mut rng).unwrap();
    let mut v_targ = v.clone();
    let opt = OptimizerConfig::adam(1e-3);

    let rows: Vec<Vec<f64>> = (0..STATES).map(one_hot).collect();
    let states = Matrix::from_rows(STATES, rows.iter().map(|r| r.as_slice())).unwrap();
    let pairs: Vec<Vec<f64>> = (0..STATES)
        .flat_map(|s| {
            ACTION_VALUES.iter().map(move |&a| {
                let mut x = one_hot(s);
                x.push(a);
                x
            })
        })
        .collect();
    let sa = Matrix::from_rows(STATES + 1, pairs.iter().map(|r| r.as_slice())).unwrap();

    for _ in 0..updates {
        let vt = v_targ.forward_batch(&states).unwrap().column(0);
        let y_q: Vec<f64> = (0..STATES)
            .flat_map(|s| {
                let vt = &vt;
                (0..ACTIONS).map(move |a| {
                    let ev: f64 = (0..STATES).map(|s2| mdp.p[s][a][s2] * vt[s2]).sum();
                    q_target_single(mdp.r[s][a], 0.0, ev, GAMMA)
                })
            })
            .collect();
        regression_loss(&mut q, &sa, &y_q, "q").unwrap();
        optimizer_step(&mut q.store, &opt).unwrap();

        let qv = q.forward_batch(&sa).unwrap().column(0);
        let y_v: Vec<f64> = (0..STATES)
            .map(|s| (0..ACTIONS).map(|a| mdp.pi[s][a] * qv[s * ACTIONS + a]).sum())
            .collect();
        regression_loss(&mut v, &states, &y_v, "v").unwrap();
        optimizer_step(&mut v.store, &opt).unwrap();
        polyak_update(&mut v_targ.store, &v.store, RHO).unwrap();
    }
    q.forward_batch(&sa).unwrap().column(0)
}
