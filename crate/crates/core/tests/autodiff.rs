use lieproj::autodiff::{Tape, Tensor, Var};
use lieproj::nn::{Activation, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    // Values are kept at least 0.1 away from zero so kinks stay out of the stencil.
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = rng.gen_range(lo..hi);
            if x.abs() < 0.1 {
                x.signum() * 0.1 + x
            } else {
                x
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Compares reverse-mode gradients of `sum(weights ⊙ f(inputs))` against
/// central differences for every input entry.
fn check<F>(name: &str, inputs: Vec<Tensor<f64>>, f: F)
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let eval = |inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let [r, c] = tape.shape(out);
        let w = weights.cloned().unwrap_or_else(|| Tensor::filled(r, c, 1.0));
        let wv = tape.leaf(w);
        let prod = tape.mul(out, wv).unwrap();
        let loss = tape.sum(prod);
        (tape, vars, out, loss)
    };
    let (probe, _, out, _) = eval(&inputs, None);
    let out_shape = probe.shape(out);
    let weights = random(&mut rng, out_shape[0], out_shape[1], -1.0, 1.0);
    let (mut tape, vars, _, loss) = eval(&inputs, Some(&weights));
    tape.backward(loss).unwrap();
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v);
        for j in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let (tp, _, _, lp) = eval(&plus, Some(&weights));
            let (tm, _, _, lm) = eval(&minus, Some(&weights));
            let numeric = (tp.value(lp).data()[0] - tm.value(lm).data()[0]) / (2.0 * STEP);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            assert!(rel < TOL, "{name}: input {i} entry {j}: analytic {a} numeric {numeric} rel {rel}");
        }
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(5)
}

#[test]
fn gradient_of_matvec_and_add_row() {
    let mut r = rng();
    let inputs = vec![random(&mut r, 3, 4, -1.0, 1.0), random(&mut r, 4, 2, -1.0, 1.0), random(&mut r, 1, 2, -1.0, 1.0)];
    check("affine", inputs, |t, v| {
        let z = t.matvec(v[0], v[1]).unwrap();
        t.add_row(z, v[2]).unwrap()
    });
}

#[test]
fn gradient_of_binary_elementwise() {
    let mut r = rng();
    let inputs = vec![random(&mut r, 2, 3, -2.0, 2.0), random(&mut r, 2, 3, -2.0, 2.0)];
    check("add", inputs.clone(), |t, v| t.add(v[0], v[1]).unwrap());
    check("sub", inputs.clone(), |t, v| t.sub(v[0], v[1]).unwrap());
    check("mul", inputs.clone(), |t, v| t.mul(v[0], v[1]).unwrap());
    check("atan2", inputs, |t, v| t.atan2(v[0], v[1]).unwrap());
}

#[test]
fn gradient_of_unary_elementwise() {
    let mut r = rng();
    let x = vec![random(&mut r, 3, 3, -2.0, 2.0)];
    check("scale", x.clone(), |t, v| t.scale(v[0], -1.7));
    check("add_scalar", x.clone(), |t, v| t.add_scalar(v[0], 0.3));
    check("relu", x.clone(), |t, v| t.relu(v[0]));
    check("sigmoid", x.clone(), |t, v| t.sigmoid(v[0]));
    check("tanh", x.clone(), |t, v| t.tanh(v[0]));
    check("exp", x.clone(), |t, v| t.exp(v[0]));
    check("cos", x.clone(), |t, v| t.cos(v[0]));
    check("sin", x.clone(), |t, v| t.sin(v[0]));
    check("clamp", x, |t, v| t.clamp(v[0], -1.05, 0.95));
    let pos = vec![random(&mut r, 2, 3, 0.2, 3.0)];
    check("log", pos, |t, v| t.log(v[0]));
}

#[test]
fn gradient_of_structural_ops() {
    let mut r = rng();
    let inputs = vec![random(&mut r, 2, 3, -1.0, 1.0), random(&mut r, 2, 2, -1.0, 1.0)];
    check("concat", inputs.clone(), |t, v| t.concat(v[0], v[1]).unwrap());
    check("slice_cols", inputs.clone(), |t, v| t.slice_cols(v[0], 1, 2).unwrap());
    check("sum", inputs, |t, v| {
        let s = t.sum(v[0]);
        t.mul(s, s).unwrap()
    });
}

#[test]
fn gradient_of_irrep_rotate() {
    let mut r = rng();
    let inputs = vec![random(&mut r, 4, 1, -3.0, 3.0), random(&mut r, 1, 6, -1.0, 1.0)];
    check("irrep_rotate", inputs, |t, v| t.irrep_rotate(v[0], v[1], 3).unwrap());
}

#[test]
fn gradient_of_bce_with_logits() {
    let mut r = rng();
    let logits = random(&mut r, 3, 4, -4.0, 4.0);
    let target = Tensor::new(3, 4, (0..12).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
    check("bce", vec![logits], move |t, v| {
        let x = t.leaf(target.clone());
        t.bce_with_logits(v[0], x).unwrap()
    });
}

#[test]
fn gradient_of_sigmoid_mlp() {
    let mut r = rng();
    let inputs = vec![random(&mut r, 5, 3, -1.0, 1.0), random(&mut r, 3, 4, -1.0, 1.0), random(&mut r, 1, 4, -1.0, 1.0)];
    check("sigmoid(Wx+b)", inputs, |t, v| {
        let z = t.matvec(v[0], v[1]).unwrap();
        let z = t.add_row(z, v[2]).unwrap();
        t.sigmoid(z)
    });
}

#[test]
fn mlp_parameter_gradients() {
    let mut r = rng();
    let mlp = Mlp::<f64>::new(&[3, 5, 2], Activation::Tanh, Activation::Sigmoid, &mut r).unwrap();
    let x = random(&mut r, 4, 3, -1.0, 1.0);
    let params: Vec<Tensor<f64>> = mlp.params().into_iter().cloned().collect();
    let mut inputs = vec![x];
    inputs.extend(params);
    check("mlp", inputs, |t, v| mlp.forward(t, &v[1..], v[0]).unwrap());
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::row(vec![1.0_f64, 2.0]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn loss_trajectory_is_deterministic() {
    let run = || {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut mlp = Mlp::<f64>::new(&[2, 6, 1], Activation::Relu, Activation::Identity, &mut r).unwrap();
        let shapes: Vec<[usize; 2]> = mlp.params().iter().map(|p| p.shape()).collect();
        let mut adam = lieproj::nn::Adam::new(Default::default(), &shapes);
        let x = random(&mut r, 8, 2, -1.0, 1.0);
        let mut losses = Vec::new();
        for _ in 0..50 {
            let mut tape = Tape::new();
            let bound = mlp.bind(&mut tape);
            let xv = tape.leaf(x.clone());
            let y = mlp.forward(&mut tape, &bound, xv).unwrap();
            let sq = tape.mul(y, y).unwrap();
            let l = tape.sum(sq);
            losses.push(tape.value(l).data()[0].to_bits());
            tape.backward(l).unwrap();
            let grads: Vec<_> = bound.iter().map(|b| tape.grad(*b)).collect();
            adam.step(&mut mlp.params_mut(), &grads).unwrap();
        }
        losses
    };
    assert_eq!(run(), run());
}
