//! Learned quantities at a single state for chosen `(action, return)` pairs.

use serde::{Deserialize, Serialize};

use crate::env::{grid_observe, ActionSpace, Cell, GridAction, GridSpec};
use crate::error::{Error, Result};
use crate::harness::runner::Snapshot;
use crate::hdice::hdice_ratio;
use crate::nn::DenseArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub action: usize,
    pub z: f64,
    pub pi: f64,
    pub h: f64,
    pub direct_ratio: f64,
    pub hdice_ratio: f64,
}

/// `π(a|s)`, `h(a|s,z)`, `π/h` and the reconstructed ratio for every pair of
/// `actions × returns`, in that nesting order.
pub fn probe_state(snapshot: &Snapshot, observation: &[f64], actions: &[usize], returns: &[f64]) -> Result<Vec<ProbeRow>> {
    let missing = |what: &str| Error::Contract(format!("snapshot has no {what}; probing needs an hdice run"));
    let h = snapshot.hindsight.as_ref().ok_or_else(|| missing("hindsight model"))?;
    let chi = snapshot.return_model.as_ref().ok_or_else(|| missing("return model"))?;
    let phi = snapshot.dice.as_ref().ok_or_else(|| missing("dice model"))?;
    let psi = snapshot.psi.ok_or_else(|| missing("psi"))?;
    let n_actions = match snapshot.policy.action_space() {
        ActionSpace::Discrete(n) => *n,
        ActionSpace::Continuous { .. } => return Err(Error::Contract("probing supports discrete actions only".into())),
    };
    if observation.len() != snapshot.policy.obs_dim() {
        return Err(Error::dim("probe observation", snapshot.policy.obs_dim(), observation.len()));
    }
    if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
        return Err(Error::Contract(format!("action {a} outside 0..{n_actions}")));
    }
    if let Some(z) = returns.iter().find(|z| !z.is_finite()) {
        return Err(Error::Contract(format!("return {z} is not finite")));
    }

    let obs = DenseArray::row_vector(observation)?;
    let pi_row = snapshot.policy.probs(&obs)?;
    let mut out = Vec::with_capacity(actions.len() * returns.len());
    for &a in actions {
        for &z in returns {
            let h_row = h.probs(&obs, &[z])?;
            let act = DenseArray::row_vector(&[a as f64])?;
            let ratio = hdice_ratio(phi, chi, &obs, &act, &[z], psi.kind())?[0];
            let (pi, hv) = (pi_row.get(0, a), h_row.get(0, a));
            out.push(ProbeRow {
                action: a,
                z,
                pi,
                h: hv,
                direct_ratio: pi / hv,
                hdice_ratio: ratio,
            });
        }
    }
    Ok(out)
}

/// Observation of a GridWorld agent at `(row, col)` having already collected
/// the diamonds at `collected`.
pub fn grid_probe_observation(spec: &GridSpec, row: usize, col: usize, collected: &[Cell]) -> Result<Vec<f64>> {
    if row >= spec.height || col >= spec.width {
        return Err(Error::Contract(format!("cell ({row}, {col}) outside the {}x{} grid", spec.height, spec.width)));
    }
    let mut state = spec.initial_state();
    state.position = Cell { row, col };
    for &c in collected {
        let i = spec
            .diamond_index(c)
            .ok_or_else(|| Error::Contract(format!("no diamond at ({}, {})", c.row, c.col)))?;
        state.remaining_diamonds &= !(1u64 << i);
    }
    Ok(grid_observe(spec, &state).into_data())
}

/// State/actions/returns for the GridWorld-v1 probe: one step right of the
/// top-left diamond's column, with fire to the left and a diamond to the right.
pub struct GridProbe {
    pub observation: Vec<f64>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
}

pub fn default_grid_probe() -> Result<GridProbe> {
    let spec = GridSpec::v1();
    Ok(GridProbe {
        observation: grid_probe_observation(&spec, 1, 3, &[Cell { row: 0, col: 1 }])?,
        actions: vec![GridAction::Left as usize, GridAction::Right as usize],
        returns: vec![-100.0, 69.0],
    })
}

pub fn format_probe(rows: &[ProbeRow], action_name: impl Fn(usize) -> String) -> String {
    let mut out = String::from("action\tz\tpi\th\tdirect_ratio\thdice_ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            action_name(r.action),
            r.z,
            short(r.pi),
            short(r.h),
            short(r.direct_ratio),
            short(r.hdice_ratio)
        ));
    }
    out
}

/// Four decimals, or scientific notation once that would print as zero.
fn short(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.4}")
    }
}
