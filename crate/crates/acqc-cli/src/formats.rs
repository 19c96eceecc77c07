//! JSON file formats: matrices, state vectors and schedules.
//!
//! Matrices are `{"dim": 2|4, "entries": [[[re, im], ...], ...]}`,
//! row-major. Schedules carry the interaction, the initial ancilla state
//! and the op list; op objects are tagged with an `"op"` field.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use acqc_core::compile::Schedule;
use acqc_core::qmat::{Mat2, Mat4, State2, Unitary2, Unitary4};
use acqc_core::sim::Primitive;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixJson {
    pub fn from_unitary2(u: &Unitary2) -> Self {
        let m = u.entries();
        Self {
            dim: 2,
            entries: m
                .iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn from_unitary4(u: &Unitary4) -> Self {
        let m = u.entries();
        Self {
            dim: 4,
            entries: m
                .iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn to_unitary2(&self) -> Result<Unitary2, String> {
        if self.dim != 2 {
            return Err(format!("expected dim 2, found {}", self.dim));
        }
        let mut m: Mat2 = [[C64::ZERO; 2]; 2];
        fill(&self.entries, 2, |r, c, z| m[r][c] = z)?;
        Unitary2::new(m).map_err(|e| e.to_string())
    }

    pub fn to_unitary4(&self) -> Result<Unitary4, String> {
        if self.dim != 4 {
            return Err(format!("expected dim 4, found {}", self.dim));
        }
        let mut m: Mat4 = [[C64::ZERO; 4]; 4];
        fill(&self.entries, 4, |r, c, z| m[r][c] = z)?;
        Unitary4::new(m).map_err(|e| e.to_string())
    }
}

fn fill(
    entries: &[Vec<[f64; 2]>],
    dim: usize,
    mut set: impl FnMut(usize, usize, C64),
) -> Result<(), String> {
    if entries.len() != dim {
        return Err(format!("expected {dim} rows, found {}", entries.len()));
    }
    for (r, row) in entries.iter().enumerate() {
        if row.len() != dim {
            return Err(format!(
                "row {r}: expected {dim} entries, found {}",
                row.len()
            ));
        }
        for (c, pair) in row.iter().enumerate() {
            set(
                r,
                c,
                C64 {
                    re: pair[0],
                    im: pair[1],
                },
            );
        }
    }
    Ok(())
}

pub fn state2_to_json(s: &State2) -> Vec<[f64; 2]> {
    s.amplitudes().iter().map(|z| [z.re, z.im]).collect()
}

pub fn state2_from_json(v: &[[f64; 2]]) -> Result<State2, String> {
    if v.len() != 2 {
        return Err(format!("expected 2 amplitudes, found {}", v.len()));
    }
    State2::new([
        C64 {
            re: v[0][0],
            im: v[0][1],
        },
        C64 {
            re: v[1][0],
            im: v[1][1],
        },
    ])
    .map_err(|e| e.to_string())
}

pub fn amplitudes_to_json(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum OpJson {
    Interact { q: usize },
    Ancilla { u: MatrixJson },
    Reset,
    Readout { q: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub interaction: MatrixJson,
    pub psi0: Vec<[f64; 2]>,
    pub ops: Vec<OpJson>,
}

impl ScheduleJson {
    pub fn from_schedule(s: &Schedule) -> Self {
        Self {
            interaction: MatrixJson::from_unitary4(&s.interaction),
            psi0: state2_to_json(&s.psi0),
            ops: s
                .ops
                .iter()
                .map(|op| match op {
                    Primitive::Interact { register_index } => {
                        OpJson::Interact { q: *register_index }
                    }
                    Primitive::AncillaGate { u } => OpJson::Ancilla {
                        u: MatrixJson::from_unitary2(u),
                    },
                    Primitive::ResetAncilla => OpJson::Reset,
                    Primitive::Readout { register_index } => OpJson::Readout { q: *register_index },
                })
                .collect(),
        }
    }

    pub fn to_schedule(&self) -> Result<Schedule, String> {
        let interaction = self.interaction.to_unitary4()?;
        let psi0 = state2_from_json(&self.psi0)?;
        let mut ops = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            ops.push(match op {
                OpJson::Interact { q } => Primitive::Interact { register_index: *q },
                OpJson::Ancilla { u } => Primitive::AncillaGate {
                    u: u.to_unitary2()?,
                },
                OpJson::Reset => Primitive::ResetAncilla,
                OpJson::Readout { q } => Primitive::Readout { register_index: *q },
            });
        }
        Ok(Schedule {
            interaction,
            psi0,
            ops,
        })
    }

    /// Smallest register that the ops address (at least one qubit).
    pub fn register_width(&self) -> usize {
        let mut width = 1;
        for op in &self.ops {
            if let OpJson::Interact { q } | OpJson::Readout { q } = op {
                width = width.max(q + 1);
            }
        }
        width
    }
}
