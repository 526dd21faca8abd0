//! Checks of the Krylov factorization identities recorded in a state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::state::{Input, KrylovState};
use crate::linalg::norm;
use crate::tensor::{Mode, Tensor3};

/// Largest relative residual and number of identities per family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `fibre-1/2/3`: one identity per generated candidate,
    /// `tvv(A; x, y) = Q_y h + ‖r‖ q_new`, with `h` from `H` when both inputs
    /// are basis vectors. `loop-1/2/3`: the contracted-product identity after
    /// each complete maximal loop. Residuals are relative to `‖A‖`.
    pub families: BTreeMap<String, (f64, usize)>,
    /// `max |QᵀQ − I|` per mode.
    pub orthonormality: [f64; 3],
}

impl FactorizationReport {
    pub fn max_residual(&self) -> f64 {
        self.families.values().map(|(r, _)| *r).fold(0.0, f64::max)
    }

    pub fn family(&self, name: &str) -> Option<f64> {
        self.families.get(name).map(|(r, _)| *r)
    }

    fn record(&mut self, name: String, residual: f64) {
        let e = self.families.entry(name).or_insert((0.0, 0));
        e.0 = e.0.max(residual);
        e.1 += 1;
    }
}

fn input_vector(state: &KrylovState, mode: Mode, input: &Input) -> Vec<f64> {
    let b = state.basis(mode);
    match input {
        Input::Basis(i) => b.vector(*i).to_vec(),
        Input::Combination(c) => b.combine(c),
        Input::Free(v) => v.clone(),
    }
}

/// Evaluates every identity the state supports.
pub fn factorization_residuals<T: Tensor3 + ?Sized>(a: &T, state: &KrylovState) -> FactorizationReport {
    let mut report = FactorizationReport::default();
    for m in Mode::ALL {
        report.orthonormality[m.index()] = crate::linalg::orthonormality_deviation(&state.basis(m).matrix());
    }
    let scale = a.norm_sq().sqrt().max(f64::MIN_POSITIVE);

    for g in &state.generations {
        let y = g.target;
        let (x1, x2) = y.others();
        let lhs = a.tvv_raw(y, &input_vector(state, x1, &g.inputs[0]), &input_vector(state, x2, &g.inputs[1]));
        let basis = state.basis(y);
        let rhs = match &g.inputs {
            [Input::Basis(i1), Input::Basis(i2)] => {
                let mut idx = [0; 3];
                idx[x1.index()] = *i1;
                idx[x2.index()] = *i2;
                basis.combine(&state.h.fibre(y, idx, basis.len()))
            }
            _ => {
                let mut coeffs = g.coeffs.clone();
                if let Some(new) = g.appended {
                    coeffs.resize(new + 1, 0.0);
                    coeffs[new] = g.norm;
                }
                basis.combine(&coeffs)
            }
        };
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect();
        // a breakdown leaves a residual of size `norm` outside the basis
        let slack = if g.appended.is_none() { g.norm } else { 0.0 };
        report.record(format!("fibre-{y}"), (norm(&diff) - slack).max(0.0) / scale);
    }

    for rec in state.loops.iter().filter(|r| r.complete) {
        let y = rec.mode;
        let (x1, x2) = y.others();
        let mut sq = 0.0;
        for i1 in 0..rec.sizes[x1.index()] {
            for i2 in 0..rec.sizes[x2.index()] {
                let b1 = state.basis(x1).vector(i1);
                let b2 = state.basis(x2).vector(i2);
                let lhs = a.tvv_raw(y, b1, b2);
                let mut idx = [0; 3];
                idx[x1.index()] = i1;
                idx[x2.index()] = i2;
                let h = state.h.fibre(y, idx, rec.sizes[y.index()]);
                let rhs = state.basis(y).combine(&h);
                sq += lhs.iter().zip(&rhs).map(|(l, r)| (l - r).powi(2)).sum::<f64>();
            }
        }
        report.record(format!("loop-{y}"), sq.sqrt() / scale);
    }
    report
}
