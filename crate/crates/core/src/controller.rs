//! Fixed-topology multilayer perceptron driving each agent.
//!
//! The network has 20 inputs, one hidden layer of 10 `tanh` units and 2
//! `tanh` outputs. Weights are evolved as a flat [`Genome`] of 232 reals laid
//! out as: hidden weights (unit-major, input-minor), hidden biases, output
//! weights (unit-major), output biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_INPUTS: usize = 20;
pub const N_HIDDEN: usize = 10;
pub const N_OUTPUTS: usize = 2;
pub const GENOME_LEN: usize = (N_INPUTS + 1) * N_HIDDEN + (N_HIDDEN + 1) * N_OUTPUTS;

const HIDDEN_W_END: usize = N_INPUTS * N_HIDDEN;
const HIDDEN_B_END: usize = HIDDEN_W_END + N_HIDDEN;
const OUTPUT_W_END: usize = HIDDEN_B_END + N_OUTPUTS * N_HIDDEN;

/// Flat weight vector; the unit of evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genome(Vec<f64>);

impl Genome {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != GENOME_LEN {
            return Err(Error::Topology {
                expected: GENOME_LEN,
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("genome entry {i} is not finite")));
        }
        Ok(Genome(weights))
    }

    pub fn zeros() -> Self {
        Genome(vec![0.0; GENOME_LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Mutable access for variation operators. Callers must keep entries finite.
    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl TryFrom<Vec<f64>> for Genome {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Genome::new(v)
    }
}

impl From<Genome> for Vec<f64> {
    fn from(g: Genome) -> Self {
        g.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub hidden_weights: [[f64; N_INPUTS]; N_HIDDEN],
    pub hidden_biases: [f64; N_HIDDEN],
    pub output_weights: [[f64; N_HIDDEN]; N_OUTPUTS],
    pub output_biases: [f64; N_OUTPUTS],
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_weights: [[0.0; N_INPUTS]; N_HIDDEN],
            hidden_biases: [0.0; N_HIDDEN],
            output_weights: [[0.0; N_HIDDEN]; N_OUTPUTS],
            output_biases: [0.0; N_OUTPUTS],
        }
    }
}

/// Raw network output; both entries lie in (-1, 1).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub delta_linear: f64,
    pub delta_angular: f64,
}

pub fn decode(genome: &[f64]) -> Result<MlpParams> {
    if genome.len() != GENOME_LEN {
        return Err(Error::Topology {
            expected: GENOME_LEN,
            actual: genome.len(),
        });
    }
    let mut p = MlpParams::default();
    for (u, row) in p.hidden_weights.iter_mut().enumerate() {
        row.copy_from_slice(&genome[u * N_INPUTS..(u + 1) * N_INPUTS]);
    }
    p.hidden_biases.copy_from_slice(&genome[HIDDEN_W_END..HIDDEN_B_END]);
    for (o, row) in p.output_weights.iter_mut().enumerate() {
        let start = HIDDEN_B_END + o * N_HIDDEN;
        row.copy_from_slice(&genome[start..start + N_HIDDEN]);
    }
    p.output_biases.copy_from_slice(&genome[OUTPUT_W_END..]);
    Ok(p)
}

pub fn encode(params: &MlpParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(GENOME_LEN);
    for row in &params.hidden_weights {
        out.extend_from_slice(row);
    }
    out.extend_from_slice(&params.hidden_biases);
    for row in &params.output_weights {
        out.extend_from_slice(row);
    }
    out.extend_from_slice(&params.output_biases);
    out
}

impl MlpParams {
    pub fn from_genome(genome: &Genome) -> Self {
        decode(genome.as_slice()).expect("genome length is checked at construction")
    }

    fn hidden(&self, input: &[f64; N_INPUTS]) -> [f64; N_HIDDEN] {
        let mut h = [0.0; N_HIDDEN];
        for (u, hu) in h.iter_mut().enumerate() {
            let z: f64 = self.hidden_weights[u]
                .iter()
                .zip(input)
                .map(|(w, x)| w * x)
                .sum::<f64>()
                + self.hidden_biases[u];
            *hu = z.tanh();
        }
        h
    }

    pub fn forward(&self, input: &[f64; N_INPUTS]) -> Action {
        let h = self.hidden(input);
        let mut out = [0.0; N_OUTPUTS];
        for (o, y) in out.iter_mut().enumerate() {
            let z: f64 = self.output_weights[o].iter().zip(&h).map(|(w, x)| w * x).sum::<f64>() + self.output_biases[o];
            *y = z.tanh();
        }
        Action {
            delta_linear: out[0],
            delta_angular: out[1],
        }
    }

    /// Jacobian of both outputs with respect to every genome entry, in genome
    /// layout order. Row `o` holds d(output o)/d(genome).
    pub fn param_jacobian(&self, input: &[f64; N_INPUTS]) -> [Vec<f64>; N_OUTPUTS] {
        let h = self.hidden(input);
        let action = self.forward(input);
        let outs = [action.delta_linear, action.delta_angular];
        let mut jac = [vec![0.0; GENOME_LEN], vec![0.0; GENOME_LEN]];
        for (o, row) in jac.iter_mut().enumerate() {
            let dz_out = 1.0 - outs[o] * outs[o];
            for u in 0..N_HIDDEN {
                let dh = dz_out * self.output_weights[o][u] * (1.0 - h[u] * h[u]);
                for i in 0..N_INPUTS {
                    row[u * N_INPUTS + i] = dh * input[i];
                }
                row[HIDDEN_W_END + u] = dh;
                row[HIDDEN_B_END + o * N_HIDDEN + u] = dz_out * h[u];
            }
            row[OUTPUT_W_END + o] = dz_out;
        }
        jac
    }
}

/// Checked variant of [`MlpParams::forward`] for slices of unknown length.
pub fn forward(params: &MlpParams, input: &[f64]) -> Result<Action> {
    let input: &[f64; N_INPUTS] = input.try_into().map_err(|_| Error::Topology {
        expected: N_INPUTS,
        actual: input.len(),
    })?;
    Ok(params.forward(input))
}
