//! Exact ground truth on chain MDPs, computed by enumerating every trajectory.
//!
//! Step-level quantities pool all time steps with visitation weights `w_t`
//! (`γ^t` for [`Visitation::Discounted`], 1 for [`Visitation::Uniform`]):
//! `D(s, a, z) ∝ Σ_τ P(τ) Σ_t w_t [s_t = s, a_t = a, z_t = z]`, where `z_t` is
//! the discounted return-to-go. Every conditional table (`χ`, `h`) is a
//! conditional of this joint. `Q` and `V` come from backward induction instead,
//! pooled with the same weights, so the advantage identity is checked against
//! an independent route.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use crate::env::{chain_enumerate, ChainMdpSpec};
use crate::error::{Error, Result};
use crate::hdice::{DiceFunction, HindsightSampler, ReturnModel};
use crate::nn::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visitation {
    Discounted,
    Uniform,
}

impl Visitation {
    fn weight(self, gamma: f64, t: usize) -> f64 {
        match self {
            Visitation::Discounted => gamma.powi(t as i32),
            Visitation::Uniform => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularQuantities {
    pub n_states: usize,
    pub n_actions: usize,
    /// Sorted support of step returns.
    pub z_values: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    /// `D(s, a, z)`, indexed `[s][a][zi]`; sums to 1.
    pub joint: Vec<Vec<Vec<f64>>>,
    pub d_state: Vec<f64>,
    pub d_state_action: Vec<Vec<f64>>,
    /// `χ(z | s)`, `[s][zi]`; zero rows for unvisited states.
    pub chi: Vec<Vec<f64>>,
    /// `h(a | s, z)`, `[s][a][zi]`; zero where `χ(z | s) = 0`.
    pub h: Vec<Vec<Vec<f64>>>,
    /// Pooled action values from backward induction.
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

fn key(z: f64) -> u64 {
    // +0.0 and -0.0 share a bucket
    (z + 0.0).to_bits()
}

impl TabularQuantities {
    pub fn z_index(&self, z: f64) -> Option<usize> {
        self.z_values.iter().position(|&v| key(v) == key(z))
    }
}

/// Random policy table with strictly positive entries.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Vec<Vec<f64>> {
    (0..n_states)
        .map(|_| {
            let raw: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
            // make the row sum to one exactly enough for validation
            let rest: f64 = row[..n_actions - 1].iter().sum();
            row[n_actions - 1] = 1.0 - rest;
            row
        })
        .collect()
}

pub fn exact_quantities(spec: &ChainMdpSpec, policy: &[Vec<f64>], visitation: Visitation) -> Result<TabularQuantities> {
    let paths = chain_enumerate(spec, policy)?;
    let (ns, na) = (spec.n_states, spec.n_actions);

    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut z_values = Vec::new();
    let mut entries = Vec::new();
    for path in &paths {
        let z = path.returns_to_go(spec.gamma);
        for t in 0..spec.horizon {
            let zi = *index.entry(key(z[t])).or_insert_with(|| {
                z_values.push(z[t]);
                z_values.len() - 1
            });
            entries.push((path.states[t], path.actions[t], zi, path.probability * visitation.weight(spec.gamma, t)));
        }
    }
    // sort the support and remap
    let mut order: Vec<usize> = (0..z_values.len()).collect();
    order.sort_by(|&a, &b| z_values[a].total_cmp(&z_values[b]));
    let mut remap = vec![0; z_values.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let z_sorted: Vec<f64> = order.iter().map(|&i| z_values[i]).collect();
    let nz = z_sorted.len();

    let mut joint = vec![vec![vec![0.0; nz]; na]; ns];
    for &(s, a, zi, w) in &entries {
        joint[s][a][remap[zi]] += w;
    }
    let total: f64 = joint.iter().flatten().flatten().sum();
    joint.iter_mut().flatten().flatten().for_each(|v| *v /= total);

    let d_state_action: Vec<Vec<f64>> = joint.iter().map(|row| row.iter().map(|zs| zs.iter().sum()).collect()).collect();
    let d_state: Vec<f64> = d_state_action.iter().map(|r| r.iter().sum()).collect();
    let mut chi = vec![vec![0.0; nz]; ns];
    let mut h = vec![vec![vec![0.0; nz]; na]; ns];
    for s in 0..ns {
        if d_state[s] == 0.0 {
            continue;
        }
        for zi in 0..nz {
            let mass: f64 = (0..na).map(|a| joint[s][a][zi]).sum();
            chi[s][zi] = mass / d_state[s];
            if mass > 0.0 {
                for a in 0..na {
                    h[s][a][zi] = joint[s][a][zi] / mass;
                }
            }
        }
    }

    let (q, v) = pooled_action_values(spec, policy, visitation);
    Ok(TabularQuantities {
        n_states: ns,
        n_actions: na,
        z_values: z_sorted,
        pi: policy.to_vec(),
        joint,
        d_state,
        d_state_action,
        chi,
        h,
        q,
        v,
    })
}

/// Time-indexed backward induction, pooled over `t` with weights
/// `P(s_t = s)·w_t`.
fn pooled_action_values(spec: &ChainMdpSpec, policy: &[Vec<f64>], visitation: Visitation) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (ns, na, hz) = (spec.n_states, spec.n_actions, spec.horizon);
    let mut q_t = vec![vec![vec![0.0; na]; ns]; hz];
    let mut v_next = vec![0.0; ns];
    for t in (0..hz).rev() {
        let mut v_t = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let cont: f64 = (0..ns).map(|s2| spec.transitions[s][a][s2] * v_next[s2]).sum();
                q_t[t][s][a] = spec.rewards[s][a] + spec.gamma * cont;
                v_t[s] += policy[s][a] * q_t[t][s][a];
            }
        }
        v_next = v_t;
    }
    let mut p = spec.initial.clone();
    let mut q_num = vec![vec![0.0; na]; ns];
    let mut weight = vec![0.0; ns];
    for t in 0..hz {
        let w = visitation.weight(spec.gamma, t);
        for s in 0..ns {
            weight[s] += p[s] * w;
            for a in 0..na {
                q_num[s][a] += p[s] * w * q_t[t][s][a];
            }
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                for s2 in 0..ns {
                    next[s2] += p[s] * policy[s][a] * spec.transitions[s][a][s2];
                }
            }
        }
        p = next;
    }
    let q: Vec<Vec<f64>> = (0..ns)
        .map(|s| (0..na).map(|a| if weight[s] > 0.0 { q_num[s][a] / weight[s] } else { 0.0 }).collect())
        .collect();
    let v = (0..ns).map(|s| (0..na).map(|a| policy[s][a] * q[s][a]).sum()).collect();
    (q, v)
}

/// Largest `χ(z | s)` mass on returns that some taken action cannot produce.
/// The advantage identity needs this to be zero: where `h(a | s, z) = 0`
/// the conditional expectation never sees `z`, so it misses that part of `V`.
pub fn coverage_gap(tq: &TabularQuantities) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..tq.n_states {
        for a in 0..tq.n_actions {
            if tq.d_state_action[s][a] == 0.0 {
                continue;
            }
            let missing: f64 = (0..tq.z_values.len()).filter(|&zi| tq.h[s][a][zi] == 0.0).map(|zi| tq.chi[s][zi]).sum();
            worst = worst.max(missing);
        }
    }
    worst
}

/// `max_{s,a} | E[(1 − π/h)·z | s, a] − (Q(s,a) − V(s)) |` over visited pairs.
/// Instances with a nonzero [`coverage_gap`] are rejected.
pub fn verify_eq1(tq: &TabularQuantities) -> Result<f64> {
    let gap = coverage_gap(tq);
    if gap > 0.0 {
        return Err(Error::Contract(format!(
            "h(a | s, z) = 0 on the support of χ(· | s) (uncovered mass {gap:.3e})"
        )));
    }
    let mut worst: f64 = 0.0;
    for s in 0..tq.n_states {
        for a in 0..tq.n_actions {
            let dsa = tq.d_state_action[s][a];
            if dsa == 0.0 {
                continue;
            }
            let mut expect = 0.0;
            for (zi, &z) in tq.z_values.iter().enumerate() {
                let p = tq.joint[s][a][zi];
                if p == 0.0 {
                    continue;
                }
                let h = tq.h[s][a][zi];
                expect += p / dsa * (1.0 - tq.pi[s][a] / h) * z;
            }
            worst = worst.max((expect - (tq.q[s][a] - tq.v[s])).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TabularPsi {
    /// `1 / |Z|` on the return support.
    Uniform,
    /// `χ(z | s)`.
    Conditional,
}

impl TabularPsi {
    pub fn density(self, tq: &TabularQuantities, s: usize, zi: usize) -> f64 {
        match self {
            TabularPsi::Uniform => 1.0 / tq.z_values.len() as f64,
            TabularPsi::Conditional => tq.chi[s][zi],
        }
    }
}

/// Table indexed `[s][a][zi]`; `None` off the support of `D`.
pub type PhiTable = Vec<Vec<Vec<Option<f64>>>>;

/// `φ* = π ψ / (χ h)` on the support.
pub fn closed_form_phi(tq: &TabularQuantities, psi: TabularPsi) -> PhiTable {
    let nz = tq.z_values.len();
    (0..tq.n_states)
        .map(|s| {
            (0..tq.n_actions)
                .map(|a| {
                    (0..nz)
                        .map(|zi| {
                            (tq.joint[s][a][zi] > 0.0).then(|| tq.pi[s][a] * psi.density(tq, s, zi) / (tq.chi[s][zi] * tq.h[s][a][zi]))
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceMinimizerResult {
    pub closed_form: PhiTable,
    pub iterative: PhiTable,
    /// Max `|iterative − closed form|` over the support.
    pub residual: f64,
    pub iterations: usize,
}

/// Minimizes `½ Σ D φ² − Σ d(s,a) ψ(z) φ` by diagonally preconditioned
/// gradient descent from zero and compares with the closed form.
pub fn tabular_dice_minimizer(tq: &TabularQuantities, psi: TabularPsi, iterations: usize) -> DiceMinimizerResult {
    let closed_form = closed_form_phi(tq, psi);
    let mut iterative = closed_form.clone();
    let mut residual: f64 = 0.0;
    for s in 0..tq.n_states {
        for a in 0..tq.n_actions {
            for zi in 0..tq.z_values.len() {
                let d = tq.joint[s][a][zi];
                if d == 0.0 {
                    continue;
                }
                let target_mass = tq.d_state_action[s][a] * psi.density(tq, s, zi);
                let mut phi = 0.0;
                for _ in 0..iterations {
                    let grad = d * phi - target_mass;
                    phi -= 0.5 * grad / d;
                }
                iterative[s][a][zi] = Some(phi);
                let cf = closed_form[s][a][zi].expect("on support");
                residual = residual.max((phi - cf).abs());
            }
        }
    }
    DiceMinimizerResult {
        closed_form,
        iterative,
        residual,
        iterations,
    }
}

/// Every step of every enumerated trajectory as a row, with one-hot
/// observations, action indices, return-to-go and weight `P(τ)·w_t`.
#[derive(Debug, Clone)]
pub struct EnumeratedRows {
    pub observations: DenseArray,
    pub actions: DenseArray,
    pub returns: Vec<f64>,
    pub weights: Vec<f64>,
    pub states: Vec<usize>,
}

pub fn enumerated_rows(spec: &ChainMdpSpec, policy: &[Vec<f64>], visitation: Visitation) -> Result<EnumeratedRows> {
    let paths = chain_enumerate(spec, policy)?;
    let n = paths.len() * spec.horizon;
    let mut observations = DenseArray::zeros(n, spec.n_states);
    let mut actions = DenseArray::zeros(n, 1);
    let mut returns = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for path in &paths {
        let z = path.returns_to_go(spec.gamma);
        for t in 0..spec.horizon {
            let r = returns.len();
            observations.set(r, path.states[t], 1.0);
            actions.set(r, 0, path.actions[t] as f64);
            returns.push(z[t]);
            weights.push(path.probability * visitation.weight(spec.gamma, t));
            states.push(path.states[t]);
        }
    }
    Ok(EnumeratedRows {
        observations,
        actions,
        returns,
        weights,
        states,
    })
}

fn one_hot_state(obs: &[f64]) -> Result<usize> {
    obs.iter()
        .position(|&v| v == 1.0)
        .ok_or_else(|| Error::Contract("expected a one-hot chain observation".into()))
}

fn draw(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Exact `χ` as a [`ReturnModel`] over one-hot chain observations.
pub struct TabularChi<'a>(pub &'a TabularQuantities);

impl ReturnModel for TabularChi<'_> {
    fn sample_returns(&self, obs: &DenseArray, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        (0..obs.rows())
            .map(|r| {
                let s = one_hot_state(obs.row(r))?;
                Ok(self.0.z_values[draw(&self.0.chi[s], rng)])
            })
            .collect()
    }

    fn log_density(&self, obs: &DenseArray, z: &[f64]) -> Result<Vec<f64>> {
        (0..obs.rows())
            .map(|r| {
                let s = one_hot_state(obs.row(r))?;
                Ok(self.0.z_index(z[r]).map_or(f64::NEG_INFINITY, |zi| self.0.chi[s][zi].ln()))
            })
            .collect()
    }
}

/// Exact `h` as a [`HindsightSampler`].
pub struct TabularHindsight<'a>(pub &'a TabularQuantities);

impl HindsightSampler for TabularHindsight<'_> {
    fn sample_actions(&self, obs: &DenseArray, z: &[f64], rng: &mut dyn RngCore) -> Result<DenseArray> {
        let mut out = DenseArray::zeros(obs.rows(), 1);
        for r in 0..obs.rows() {
            let s = one_hot_state(obs.row(r))?;
            let zi = self.0.z_index(z[r]).ok_or_else(|| Error::Contract(format!("return {} off the support", z[r])))?;
            let p: Vec<f64> = (0..self.0.n_actions).map(|a| self.0.h[s][a][zi]).collect();
            out.set(r, 0, draw(&p, rng) as f64);
        }
        Ok(out)
    }
}

/// A free parameter per `(s, a, z)` on the return support.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPhi {
    z_values: Vec<f64>,
    n_actions: usize,
    table: Vec<f64>,
}

impl TabularPhi {
    pub fn zeros(tq: &TabularQuantities) -> Self {
        Self {
            z_values: tq.z_values.clone(),
            n_actions: tq.n_actions,
            table: vec![0.0; tq.n_states * tq.n_actions * tq.z_values.len()],
        }
    }

    /// Fills every supported entry from a table (others stay zero).
    pub fn from_table(tq: &TabularQuantities, phi: &PhiTable) -> Self {
        let mut out = Self::zeros(tq);
        for s in 0..tq.n_states {
            for a in 0..tq.n_actions {
                for zi in 0..tq.z_values.len() {
                    if let Some(v) = phi[s][a][zi] {
                        let i = out.slot(s, a, zi);
                        out.table[i] = v;
                    }
                }
            }
        }
        out
    }

    fn slot(&self, s: usize, a: usize, zi: usize) -> usize {
        (s * self.n_actions + a) * self.z_values.len() + zi
    }

    pub fn get(&self, s: usize, a: usize, zi: usize) -> f64 {
        self.table[self.slot(s, a, zi)]
    }

    fn index(&self, obs: &[f64], action: f64, z: f64) -> Result<usize> {
        let s = one_hot_state(obs)?;
        let zi = self
            .z_values
            .iter()
            .position(|&v| key(v) == key(z))
            .ok_or_else(|| Error::Contract(format!("return {z} off the support")))?;
        Ok(self.slot(s, action as usize, zi))
    }
}

impl DiceFunction for TabularPhi {
    type Cache = Vec<usize>;

    fn forward(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        let idx = (0..obs.rows())
            .map(|r| self.index(obs.row(r), actions.get(r, 0), z[r]))
            .collect::<Result<Vec<_>>>()?;
        Ok((idx.iter().map(|&i| self.table[i]).collect(), idx))
    }

    fn backward(&self, cache: &Vec<usize>, upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut g = vec![0.0; self.table.len()];
        for (&i, &u) in cache.iter().zip(upstream) {
            g[i] += u;
        }
        Ok(vec![g])
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.table]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deterministic_chain(gamma: f64) -> ChainMdpSpec {
        // two states; action a moves to state a; reward depends on action
        ChainMdpSpec {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            rewards: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            initial: vec![1.0, 0.0],
            horizon: 2,
            gamma,
        }
    }

    #[test]
    fn deterministic_everything() {
        let spec = deterministic_chain(0.5);
        let tq = exact_quantities(&spec, &[vec![0.0, 1.0], vec![1.0, 0.0]], Visitation::Discounted).unwrap();
        for s in 0..2 {
            for zi in 0..tq.z_values.len() {
                if tq.chi[s][zi] > 0.0 {
                    let taken = if s == 0 { 1 } else { 0 };
                    assert_eq!(tq.h[s][taken][zi], 1.0);
                }
            }
        }
        assert_eq!(verify_eq1(&tq).unwrap(), 0.0);
    }

    #[test]
    fn action_independent_reward() {
        let mut spec = deterministic_chain(0.9);
        spec.rewards = vec![vec![1.0, 1.0], vec![-2.0, -2.0]];
        let pi = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let tq = exact_quantities(&spec, &pi, Visitation::Discounted).unwrap();
        // z_0 still depends on the action through the next state, but z at the
        // last step does not
        for s in 0..2 {
            for zi in 0..tq.z_values.len() {
                let mass: f64 = (0..2).map(|a| tq.joint[s][a][zi]).sum();
                if mass > 0.0 && (tq.z_values[zi] == 1.0 || tq.z_values[zi] == -2.0) {
                    for a in 0..2 {
                        assert!((tq.h[s][a][zi] - pi[s][a]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn hand_enumerated_chi() {
        // paths from s0 under π(·|s0) = (0.25, 0.75), π(·|s1) = (0.5, 0.5), γ = 1:
        //   a0 a0: states 0,0 rewards 0,0 -> z_0 = 0
        //   a0 a1: states 0,0 rewards 0,1 -> z_0 = 1
        //   a1 a0: states 0,1 rewards 1,2 -> z_0 = 3
        //   a1 a1: states 0,1 rewards 1,-1 -> z_0 = 0
        let spec = deterministic_chain(1.0);
        let pi = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
        let tq = exact_quantities(&spec, &pi, Visitation::Uniform).unwrap();
        assert_eq!(tq.z_values, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        // s0 visits: t=0 (prob 1) with z in {0: .0625 + .375, 1: .1875, 3: .375};
        //            t=1 from a0 (prob .25) with z in {0: .0625, 1: .1875}
        let d0 = 1.25;
        let expect0 = [0.0, (0.0625 + 0.375 + 0.0625) / d0, (0.1875 + 0.1875) / d0, 0.0, 0.375 / d0];
        for (zi, e) in expect0.iter().enumerate() {
            assert!((tq.chi[0][zi] - e).abs() < 1e-12, "zi {zi}");
        }
        // s1 visited only at t=1 with z = 2 or -1, each 0.375
        assert!((tq.chi[1][0] - 0.5).abs() < 1e-12 && (tq.chi[1][3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eq1_on_random_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let ns = rng.random_range(2..=4);
            let na = rng.random_range(2..=3);
            let spec = ChainMdpSpec::random_covering(&mut rng, ns, na, 3, 0.9).unwrap();
            let pi = random_policy(&mut rng, ns, na);
            for vis in [Visitation::Discounted, Visitation::Uniform] {
                let tq = exact_quantities(&spec, &pi, vis).unwrap();
                assert!(verify_eq1(&tq).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn bandit_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ChainMdpSpec::random_covering(&mut rng, 3, 3, 4, 0.0).unwrap();
        let tq = exact_quantities(&spec, &random_policy(&mut rng, 3, 3), Visitation::Discounted).unwrap();
        assert!(verify_eq1(&tq).unwrap() < 1e-12);
    }

    #[test]
    fn uncovered_bandit_rejected() {
        // one step, distinct rewards per action: h(a | s, r_b) = 0 for a != b
        let spec = ChainMdpSpec {
            n_states: 1,
            n_actions: 2,
            transitions: vec![vec![vec![1.0]; 2]],
            rewards: vec![vec![1.0, -1.0]],
            initial: vec![1.0],
            horizon: 1,
            gamma: 0.0,
        };
        let tq = exact_quantities(&spec, &[vec![0.5, 0.5]], Visitation::Discounted).unwrap();
        assert!((coverage_gap(&tq) - 0.5).abs() < 1e-12);
        assert!(matches!(verify_eq1(&tq), Err(Error::Contract(_))));
    }

    #[test]
    fn matched_distributions_give_unit_phi() {
        // reward independent of everything -> h = π; conditional ψ -> φ* = 1
        let mut spec = deterministic_chain(0.9);
        spec.rewards = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let tq = exact_quantities(&spec, &[vec![0.4, 0.6], vec![0.5, 0.5]], Visitation::Discounted).unwrap();
        let res = tabular_dice_minimizer(&tq, TabularPsi::Conditional, 80);
        for v in res.closed_form.iter().flatten().flatten().flatten() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(res.residual < 1e-6);
    }

    #[test]
    fn uniform_psi_proportional_to_direct_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = ChainMdpSpec::random(&mut rng, 3, 2, 3, 0.8).unwrap();
        let tq = exact_quantities(&spec, &random_policy(&mut rng, 3, 2), Visitation::Discounted).unwrap();
        let res = tabular_dice_minimizer(&tq, TabularPsi::Uniform, 80);
        let psi = 1.0 / tq.z_values.len() as f64;
        for s in 0..3 {
            for a in 0..2 {
                for zi in 0..tq.z_values.len() {
                    if let Some(phi) = res.closed_form[s][a][zi] {
                        let direct = tq.pi[s][a] / tq.h[s][a][zi];
                        assert!((phi * tq.chi[s][zi] / psi - direct).abs() < 1e-10);
                    }
                }
            }
        }
        assert!(res.residual < 1e-6);
    }
    #[test]
    fn exact_phi_advantage_matches_q_minus_v() {
        use crate::hdice::{hdice_advantage, PsiKind};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let spec = ChainMdpSpec::random_covering(&mut rng, 3, 2, 3, 0.9).unwrap();
            let pi = random_policy(&mut rng, 3, 2);
            let tq = exact_quantities(&spec, &pi, Visitation::Discounted).unwrap();
            let rows = enumerated_rows(&spec, &pi, Visitation::Discounted).unwrap();
            // φ = π / (χ h): the uniform-ψ minimizer with the constant ψ dropped
            let nz = tq.z_values.len();
            let table: PhiTable = (0..3)
                .map(|s| (0..2).map(|a| (0..nz).map(|zi| (tq.joint[s][a][zi] > 0.0).then(|| tq.pi[s][a] / (tq.chi[s][zi] * tq.h[s][a][zi]))).collect()).collect())
                .collect();
            let phi = TabularPhi::from_table(&tq, &table);
            let (adv, _) = hdice_advantage(&phi, &TabularChi(&tq), &rows.observations, &rows.actions, &rows.returns, PsiKind::Uniform).unwrap();
            let mut num = vec![vec![0.0; 2]; 3];
            let mut den = vec![vec![0.0; 2]; 3];
            for r in 0..rows.returns.len() {
                let (s, a) = (rows.states[r], rows.actions.get(r, 0) as usize);
                num[s][a] += rows.weights[r] * adv.values[r];
                den[s][a] += rows.weights[r];
            }
            for s in 0..3 {
                for a in 0..2 {
                    if den[s][a] > 0.0 {
                        assert!((num[s][a] / den[s][a] - (tq.q[s][a] - tq.v[s])).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn learned_tabular_phi_reaches_minimizer() {
        use crate::hdice::{train_dice, PsiSampler};
        use crate::hindsight::AuxTrainConfig;
        // deterministic dynamics and a uniform policy make every path equally
        // likely, so one copy of each path is an exact sample of D
        let spec = ChainMdpSpec {
            n_states: 2,
            n_actions: 2,
            transitions: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            rewards: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            initial: vec![1.0, 0.0],
            horizon: 3,
            gamma: 1.0,
        };
        let pi = vec![vec![0.5, 0.5]; 2];
        let tq = exact_quantities(&spec, &pi, Visitation::Uniform).unwrap();
        let rows = enumerated_rows(&spec, &pi, Visitation::Uniform).unwrap();
        let copies = 20;
        let idx: Vec<usize> = (0..copies).flat_map(|_| 0..rows.returns.len()).collect();
        let obs = rows.observations.select_rows(&idx);
        let actions = rows.actions.select_rows(&idx);
        let target = closed_form_phi(&tq, TabularPsi::Conditional);
        let mut phi = TabularPhi::zeros(&tq);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for lr in [0.05, 0.005] {
            let cfg = AuxTrainConfig {
                epochs: 150,
                lr,
                batch_size: obs.rows(),
                max_grad_norm: None,
            };
            train_dice(&mut phi, &TabularChi(&tq), &TabularHindsight(&tq), &obs, &actions, &PsiSampler::ConditionalChi, &cfg, &mut rng).unwrap();
        }
        let mut worst: f64 = 0.0;
        for s in 0..2 {
            for a in 0..2 {
                for zi in 0..tq.z_values.len() {
                    if let Some(t) = target[s][a][zi] {
                        worst = worst.max((phi.get(s, a, zi) - t).abs());
                    }
                }
            }
        }
        assert!(worst < 0.05, "max error {worst}");
    }
}
