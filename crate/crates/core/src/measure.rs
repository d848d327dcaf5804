use rand::Rng;

use crate::error::{QalError, Result};
use crate::linalg::{max_abs_diff, CMatrix, ZERO};
use crate::op::HermitianOp;
use crate::state::{DensityState, PureState};

const COMPLETENESS_TOL: f64 = 1e-9;

/// Checks `sum P_i = I` and `P_i P_j = delta_ij P_i`.
pub fn check_projectors(projectors: &[HermitianOp]) -> Result<()> {
    let Some(first) = projectors.first() else {
        return Err(QalError::IncompleteProjectors("empty set".into()));
    };
    let dim = first.dim();
    let mut sum = CMatrix::zeros(dim, dim);
    for (i, p) in projectors.iter().enumerate() {
        if p.dim() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: p.dim() });
        }
        sum += p.matrix();
        for (j, q) in projectors.iter().enumerate().skip(i) {
            let prod = p.matrix() * q.matrix();
            let target = if i == j { p.matrix().clone() } else { CMatrix::zeros(dim, dim) };
            let dev = max_abs_diff(&prod, &target);
            if dev > COMPLETENESS_TOL {
                return Err(QalError::IncompleteProjectors(format!("P{i} P{j} deviates by {dev:.3e}")));
            }
        }
    }
    let dev = max_abs_diff(&sum, &CMatrix::identity(dim, dim));
    if dev > COMPLETENESS_TOL {
        return Err(QalError::IncompleteProjectors(format!("sum deviates from identity by {dev:.3e}")));
    }
    Ok(())
}

/// Samples an outcome with Born probability and returns the renormalized
/// post-measurement state together with the outcome probability.
pub fn measure_projective(
    state: &PureState,
    projectors: &[HermitianOp],
    rng: &mut impl Rng,
) -> Result<(usize, PureState, f64)> {
    check_projectors(projectors)?;
    if projectors[0].dim() != state.dim() {
        return Err(QalError::DimensionMismatch { expected: state.dim(), found: projectors[0].dim() });
    }
    let total = state.norm_sq();
    let mut branches = Vec::with_capacity(projectors.len());
    for p in projectors {
        let v = p.apply(state.amplitudes())?;
        let w = v.iter().map(|a| a.norm_sqr()).sum::<f64>() / total;
        branches.push((v, w));
    }
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = branches.len() - 1;
    for (i, (_, w)) in branches.iter().enumerate() {
        acc += w;
        if r < acc {
            pick = i;
            break;
        }
    }
    // skip zero-probability tails picked through rounding
    while branches[pick].1 == 0.0 && pick > 0 {
        pick -= 1;
    }
    let (v, w) = branches.swap_remove(pick);
    let mut post = PureState::from_amplitudes(state.n_qubits(), v)?;
    post.normalize()?;
    Ok((pick, post, w))
}

/// Reduced state on `keep`, in the given order (first kept qubit becomes
/// the most significant bit of the result).
pub fn partial_trace(state: &DensityState, keep: &[usize]) -> Result<DensityState> {
    let n = state.n_qubits();
    if keep.is_empty() {
        return Err(QalError::InvalidArgument("keep list is empty".into()));
    }
    for (i, &q) in keep.iter().enumerate() {
        if q >= n {
            return Err(QalError::QubitOutOfRange { index: q, n_qubits: n });
        }
        if keep[..i].contains(&q) {
            return Err(QalError::DuplicateQubit(q));
        }
    }
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let bit = |q: usize| 1usize << (n - 1 - q);
    let spread = |local: usize, qs: &[usize]| -> usize {
        let k = qs.len();
        qs.iter().enumerate().filter(|(b, _)| local & (1 << (k - 1 - b)) != 0).map(|(_, &q)| bit(q)).sum()
    };
    let kd = 1usize << keep.len();
    let td = 1usize << traced.len();
    let keep_off: Vec<usize> = (0..kd).map(|l| spread(l, keep)).collect();
    let tr_off: Vec<usize> = (0..td).map(|l| spread(l, &traced)).collect();
    let m = state.matrix();
    let out = CMatrix::from_fn(kd, kd, |i, j| {
        let mut acc = ZERO;
        for &t in &tr_off {
            acc += m[(keep_off[i] + t, keep_off[j] + t)];
        }
        acc
    });
    DensityState::new(keep.len(), out)
}

/// `(I ⊗ <b|) rho (I ⊗ |b>)` for the last qubit fixed to `b`; the trace of
/// the result is the probability of reading `b`.
pub fn project_last_qubit(state: &DensityState, b: usize) -> Result<DensityState> {
    let n = state.n_qubits();
    if n < 1 || b > 1 {
        return Err(QalError::InvalidArgument("projection needs at least one qubit and b in {0,1}".into()));
    }
    let m = state.matrix();
    let d = 1usize << (n - 1);
    let out = CMatrix::from_fn(d, d, |i, j| m[(2 * i + b, 2 * j + b)]);
    DensityState::new(n - 1, out)
}
