//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code paths being checked beyond reading public data.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use pfnn_core::netmodel::{BusKind, Network};
use pfnn_core::{parse_case, MlpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: [(&str, usize); 5] = [
    ("case9", 9),
    ("case24", 24),
    ("case39", 39),
    ("case57", 57),
    ("case118", 118),
];

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(format!("{name}.m"))
}

pub fn load_case(name: &str) -> Network {
    let text = std::fs::read_to_string(case_path(name)).expect("bundled case present");
    parse_case(&text).expect("bundled case parses")
}

/// Complex nodal admittance built entry by entry from the branch data.
pub fn ybus_complex(net: &Network) -> Vec<Vec<Complex64>> {
    let n = net.n_buses();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in net.branches().iter().filter(|b| b.status) {
        let f = net.bus_index(br.from_bus).unwrap();
        let t = net.bus_index(br.to_bus).unwrap();
        let ys = 1.0 / Complex64::new(br.r, br.x);
        let bc = Complex64::new(0.0, br.b_charge / 2.0);
        let a = Complex64::from_polar(br.tap, br.shift.to_radians());
        y[f][f] += (ys + bc) / (br.tap * br.tap);
        y[t][t] += ys + bc;
        y[f][t] -= ys / a.conj();
        y[t][f] -= ys / a;
    }
    for (i, b) in net.buses().iter().enumerate() {
        y[i][i] += Complex64::new(b.shunt_g, b.shunt_b) / net.base_mva();
    }
    y
}

/// Complex power injected at each bus, `S = V · conj(Y V)`, in per unit.
pub fn injected_power(net: &Network, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let y = ybus_complex(net);
    let v: Vec<Complex64> = vm
        .iter()
        .zip(va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    (0..v.len())
        .map(|i| {
            let current: Complex64 = (0..v.len()).map(|k| y[i][k] * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

/// Largest power-balance violation of a solved state: active power at every
/// non-slack bus, reactive power at every PQ bus, and regulated magnitudes.
pub fn balance_residual(net: &Network, vm: &[f64], va: &[f64]) -> f64 {
    let s = injected_power(net, vm, va);
    let base = net.base_mva();
    let mut p_sched: Vec<f64> = net.buses().iter().map(|b| -b.p_demand / base).collect();
    for g in net.gens().iter().filter(|g| g.status) {
        p_sched[net.bus_index(g.bus).unwrap()] += g.p_gen / base;
    }
    let setpoints = net.voltage_setpoints();
    let mut worst: f64 = 0.0;
    for (i, b) in net.buses().iter().enumerate() {
        if b.kind != BusKind::Slack {
            worst = worst.max((p_sched[i] - s[i].re).abs());
        }
        if b.kind == BusKind::PQ {
            worst = worst.max((-b.q_demand / base - s[i].im).abs());
        } else if let Some(v) = setpoints[i] {
            worst = worst.max((vm[i] - v).abs());
        }
    }
    worst
}

/// Naive per-sample forward pass.
pub fn naive_forward(model: &MlpModel, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = model.weights().len() - 1;
    for (l, (w, b)) in model.weights().iter().zip(model.biases()).enumerate() {
        let mut z = vec![0.0; w.nrows()];
        for r in 0..w.nrows() {
            let mut acc = b[r];
            for c in 0..w.ncols() {
                acc += w[[r, c]] * a[c];
            }
            z[r] = if l < last && acc <= 0.0 {
                model.leak() * acc
            } else {
                acc
            };
        }
        a = z;
    }
    a
}

pub fn naive_loss(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (xr, yr) in x.rows().into_iter().zip(y.rows()) {
        let pred = naive_forward(model, xr.as_slice().unwrap());
        total += pred
            .iter()
            .zip(yr)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
    }
    total / y.len() as f64
}

/// Central-difference gradient of [`naive_loss`] for every parameter, in the
/// order (weights of each layer row-major, then biases of each layer).
pub fn finite_difference_gradient(
    model: &MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    h: f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    let weights: Vec<Array2<f64>> = model.weights().to_vec();
    let biases: Vec<Array1<f64>> = model.biases().to_vec();
    let eval = |w: Vec<Array2<f64>>, b: Vec<Array1<f64>>| {
        naive_loss(&MlpModel::from_parts(w, b, model.leak()).unwrap(), x, y)
    };
    for l in 0..weights.len() {
        for idx in 0..weights[l].len() {
            let (r, c) = (idx / weights[l].ncols(), idx % weights[l].ncols());
            let mut plus = weights.clone();
            plus[l][[r, c]] += h;
            let mut minus = weights.clone();
            minus[l][[r, c]] -= h;
            out.push((eval(plus, biases.clone()) - eval(minus, biases.clone())) / (2.0 * h));
        }
    }
    for l in 0..biases.len() {
        for i in 0..biases[l].len() {
            let mut plus = biases.clone();
            plus[l][i] += h;
            let mut minus = biases.clone();
            minus[l][i] -= h;
            out.push((eval(weights.clone(), plus) - eval(weights.clone(), minus)) / (2.0 * h));
        }
    }
    out
}

/// Relative error with a small absolute floor so near-zero entries do not
/// dominate: `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// A random small model and batch, dims ≤ 8.
pub fn random_config(seed: u64) -> (MlpModel, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
    let mut model =
        pfnn_core::mlp::init_model(&dims, rng.random_range(0.01..0.3), rng.random()).unwrap();
    // nonzero biases so no pre-activation sits exactly on the kink
    let biases: Vec<Array1<f64>> = model
        .biases()
        .iter()
        .map(|b| b.mapv(|_| rng.random_range(-0.5..0.5)))
        .collect();
    model = MlpModel::from_parts(model.weights().to_vec(), biases, model.leak()).unwrap();
    let batch = rng.random_range(1..=8);
    let x = Array2::from_shape_simple_fn((batch, dims[0]), || rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_simple_fn((batch, dims[depth]), || rng.random_range(-1.0..1.0));
    (model, x, y)
}
