//! Central finite-difference gradient verification.
//!
//! The checker re-evaluates a scalar-valued function of flattened leaf
//! inputs at perturbed points, entirely independent of the backward pass it
//! validates.
//!
//! Checks accept a list of candidate steps and score each coordinate by its
//! best step. SELU's derivative jumps at zero, so a perturbation window that
//! straddles a pre-activation kink corrupts that window's difference
//! quotient; a genuinely wrong analytic gradient disagrees with every
//! window, while a kink only corrupts the windows containing it.

use super::tensor::{Shape, Tensor};
use super::{Tape, Var};

/// Default step for central differences in double precision.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude floor for single-operator checks: op outputs are O(1) on small
/// tensors, so gradients below this are indistinguishable from FD noise.
pub const OP_FLOOR: f64 = 1e-8;

/// Magnitude floor for whole-network checks. Central differences through a
/// deep graph carry accumulated-rounding noise of roughly 1e-9 absolute, so
/// gradients far below this floor cannot be compared relatively.
pub const NET_FLOOR: f64 = 1e-6;

/// Relative disagreement between an analytic and a finite-difference value:
/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn analytic_gradients(
    leaves: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    assert_eq!(tape.shape(out), Shape::scalar(), "output must be scalar");
    tape.backward(out).expect("backward failed");
    vars.iter()
        .map(|&v| {
            tape.grad(v)
                .map(|g| g.data().to_vec())
                .unwrap_or_else(|| vec![0.0; tape.value(v).data().len()])
        })
        .collect()
}

fn eval(tensors: &[Tensor<f64>], build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.value(out).item()
}

fn coordinate_err(
    perturbed: &mut [Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    analytic: f64,
    li: usize,
    ei: usize,
    steps: &[f64],
    floor: f64,
) -> f64 {
    let orig = perturbed[li].data()[ei];
    let mut best = f64::INFINITY;
    for &h in steps {
        perturbed[li].data_mut()[ei] = orig + h;
        let f_plus = eval(perturbed, build);
        perturbed[li].data_mut()[ei] = orig - h;
        let f_minus = eval(perturbed, build);
        perturbed[li].data_mut()[ei] = orig;
        let fd = (f_plus - f_minus) / (2.0 * h);
        best = best.min(rel_err(analytic, fd, floor));
    }
    best
}

/// Worst relative error over every element of every leaf.
///
/// `build` assembles the graph from leaf vars (in the order of `leaves`) and
/// returns the scalar output node. The analytic gradient comes from one
/// `backward` call; each coordinate is then verified against
/// `(f(x+h) - f(x-h)) / 2h` at its best step.
pub fn check_gradients(
    leaves: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    steps: &[f64],
    floor: f64,
) -> f64 {
    let analytic = analytic_gradients(leaves, build);
    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor<f64>> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        for ei in 0..leaf.data().len() {
            let err = coordinate_err(
                &mut perturbed,
                build,
                analytic[li][ei],
                li,
                ei,
                steps,
                floor,
            );
            worst = worst.max(err);
        }
    }
    worst
}

/// Like [`check_gradients`] but only probing the listed (leaf, element)
/// coordinates; used where a full sweep would be too slow.
pub fn check_gradients_at(
    leaves: &[Tensor<f64>],
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
    coords: &[(usize, usize)],
    steps: &[f64],
    floor: f64,
) -> f64 {
    let analytic = analytic_gradients(leaves, build);
    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor<f64>> = leaves.to_vec();
    for &(li, ei) in coords {
        let err = coordinate_err(
            &mut perturbed,
            build,
            analytic[li][ei],
            li,
            ei,
            steps,
            floor,
        );
        worst = worst.max(err);
    }
    worst
}
