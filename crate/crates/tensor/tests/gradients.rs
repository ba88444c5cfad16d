use pcfg_tensor::gradcheck::{check, DEFAULT_STEP};
use pcfg_tensor::{checkpoint, ParamStore, Reduction, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn probs(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.05..0.95)).collect()).unwrap()
}

/// Projects any output to a scalar with fixed random weights so every
/// output element contributes a distinct gradient.
fn project<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Var<'t> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(&mut rng, &y.shape());
    y.mul(tape.constant(w)).unwrap().sum()
}

fn assert_check<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> pcfg_tensor::Result<Var<'t>>,
{
    let r = check(inputs, DEFAULT_STEP, f).unwrap();
    assert!(r.max_rel_err < TOL, "{name}: rel err {} at input {} elem {}", r.max_rel_err, r.worst_input, r.worst_index);
}

#[test]
fn every_op_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = rand_tensor(&mut rng, &[3, 4]);
    let b = rand_tensor(&mut rng, &[4, 2]);
    let c = rand_tensor(&mut rng, &[3, 4]);
    let bias = rand_tensor(&mut rng, &[4]);
    let s = rand_tensor(&mut rng, &[1]);
    let col = rand_tensor(&mut rng, &[3, 1]);
    let pos = Tensor::new(&[3, 4], a.data().iter().map(|v| v.abs() + 0.5).collect()).unwrap();
    let groups = rand_tensor(&mut rng, &[2, 5, 3]);

    assert_check("matmul", &[a.clone(), b.clone()], |t, v| Ok(project(t, v[0].matmul(v[1])?, 1)));
    assert_check("add", &[a.clone(), c.clone()], |t, v| Ok(project(t, v[0].add(v[1])?, 2)));
    assert_check("sub", &[a.clone(), c.clone()], |t, v| Ok(project(t, v[0].sub(v[1])?, 3)));
    assert_check("mul", &[a.clone(), c.clone()], |t, v| Ok(project(t, v[0].mul(v[1])?, 4)));
    assert_check("div", &[a.clone(), pos.clone()], |t, v| Ok(project(t, v[0].div(v[1])?, 5)));
    assert_check("scalar mul", &[a.clone(), s.clone()], |t, v| Ok(project(t, v[0].mul(v[1])?, 6)));
    assert_check("scalar add", &[s.clone(), a.clone()], |t, v| Ok(project(t, v[0].add(v[1])?, 7)));
    assert_check("minimum", &[a.clone(), c.clone()], |t, v| Ok(project(t, v[0].minimum(v[1])?, 8)));
    assert_check("add_bias", &[a.clone(), bias.clone()], |t, v| Ok(project(t, v[0].add_bias(v[1])?, 9)));
    let w3 = rand_tensor(&mut rng, &[4, 3]);
    let b3 = rand_tensor(&mut rng, &[3]);
    assert_check("linear", &[a.clone(), w3, b3], |t, v| Ok(project(t, v[0].linear(v[1], v[2], false)?, 24)));
    assert_check("linear relu", &[a.clone(), b.clone(), rand_tensor(&mut rng, &[2])], |t, v| {
        Ok(project(t, v[0].linear(v[1], v[2], true)?, 25))
    });
    assert_check("relu", &[a.clone()], |t, v| Ok(project(t, v[0].relu(), 10)));
    assert_check("sigmoid", &[a.clone()], |t, v| Ok(project(t, v[0].sigmoid(), 11)));
    assert_check("scale", &[a.clone()], |t, v| Ok(project(t, v[0].scale(-2.5).add_scalar(0.3), 12)));
    assert_check("recip", &[pos.clone()], |t, v| Ok(project(t, v[0].recip(), 13)));
    assert_check("reshape", &[a.clone()], |t, v| Ok(project(t, v[0].reshape(&[2, 6])?, 14)));
    assert_check("max_pool_groups", &[groups.clone()], |t, v| Ok(project(t, v[0].max_pool_groups()?, 15)));
    let target = Tensor::new(&[3, 4], (0..12).map(|i| (i % 2) as f64).collect()).unwrap();
    let p = probs(&mut rng, &[3, 4]);
    let tg = target.clone();
    assert_check("bce mean", &[p.clone()], move |_, v| v[0].bce(&tg, Reduction::Mean));
    let tg = target.clone();
    assert_check("bce none", &[p.clone()], move |t, v| Ok(project(t, v[0].bce(&tg, Reduction::None)?, 16)));
    assert_check("gather_rows", &[a.clone()], |t, v| Ok(project(t, v[0].gather_rows(&[2, 0, 2, 1])?, 17)));
    assert_check("concat_cols", &[a.clone(), col.clone()], |t, v| {
        Ok(project(t, Var::concat_cols(&[v[0], v[1], v[0]])?, 18))
    });
    assert_check("narrow_cols", &[a.clone()], |t, v| Ok(project(t, v[0].narrow_cols(1, 2)?, 19)));
    assert_check("row_sum", &[a.clone()], |t, v| Ok(project(t, v[0].row_sum()?, 20)));
    assert_check("row_norm", &[a.clone()], |t, v| Ok(project(t, v[0].row_norm()?, 21)));
    assert_check("scale_rows", &[a.clone(), col.clone()], |t, v| Ok(project(t, v[0].scale_rows(v[1])?, 22)));
    assert_check("weighted_gather", &[a.clone()], |t, v| {
        Ok(project(t, v[0].weighted_gather(&[0, 1, 2, 2], &[0.25, 0.75, 0.4, 0.6], 2)?, 23))
    });
    assert_check("mean", &[a.clone()], |_, v| Ok(v[0].mean()));
}

#[test]
fn composed_toy_network_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, &[12, 3]);
    let w1 = rand_tensor(&mut rng, &[3, 6]);
    let b1 = rand_tensor(&mut rng, &[6]);
    let w2 = rand_tensor(&mut rng, &[6, 1]);
    let y = Tensor::new(&[3, 1], vec![1.0, 0.0, 1.0]).unwrap();
    assert_check("toy net", &[x, w1, b1, w2], move |_, v| {
        let h = v[0].matmul(v[1])?.add_bias(v[2])?.relu();
        let pooled = h.reshape(&[3, 4, 6])?.max_pool_groups()?;
        let p = pooled.matmul(v[3])?.sigmoid();
        p.bce(&y, Reduction::Mean)
    });
}

fn toy_grads(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rand_tensor(&mut rng, &[64, 8]);
    let w = rand_tensor(&mut rng, &[8, 16]);
    let tape = Tape::new();
    let xv = tape.constant(x);
    let wv = tape.param(w);
    let h = xv.matmul(wv).unwrap().relu().reshape(&[8, 8, 16]).unwrap();
    let out = h.max_pool_groups().unwrap().sigmoid().mean();
    let g = tape.backward(out).unwrap();
    g.get(wv).unwrap().data().to_vec()
}

#[test]
fn tape_gradients_are_bit_identical_across_runs() {
    let a = toy_grads(3);
    let b = toy_grads(3);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn max_pool_gradient_is_one_hot_and_conserves_mass(
        vals in prop::collection::vec(-3i32..3, 2 * 4 * 3),
        up in prop::collection::vec(-2.0f64..2.0, 2 * 3),
    ) {
        let x = Tensor::new(&[2, 4, 3], vals.iter().map(|&v| v as f64).collect()).unwrap();
        let tape = Tape::new();
        let xv = tape.param(x.clone());
        let pooled = xv.max_pool_groups().unwrap();
        let out = pooled.mul(tape.constant(Tensor::new(&[2, 3], up.clone()).unwrap())).unwrap().sum();
        let g = tape.backward(out).unwrap();
        let gx = g.get(xv).unwrap();
        for ci in 0..2 {
            for ch in 0..3 {
                let column: Vec<usize> = (0..4).map(|k| ci * 12 + k * 3 + ch).collect();
                let nonzero: Vec<usize> = column.iter().copied().filter(|&i| gx.data()[i] != 0.0).collect();
                let total: f64 = column.iter().map(|&i| gx.data()[i]).sum();
                prop_assert!((total - up[ci * 3 + ch]).abs() < 1e-12);
                if up[ci * 3 + ch] != 0.0 {
                    prop_assert_eq!(nonzero.len(), 1);
                    // routed to the first maximal neighbor
                    let max = column.iter().map(|&i| x.data()[i]).fold(f64::MIN, f64::max);
                    let first = column.iter().copied().find(|&i| x.data()[i] == max).unwrap();
                    prop_assert_eq!(nonzero[0], first);
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trips(
        shapes in prop::collection::vec(prop::collection::vec(1usize..4, 0..3), 1..5),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            params.insert(format!("layer{i}.w"), rand_tensor(&mut rng, s));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        checkpoint::save(&path, &params).unwrap();
        prop_assert_eq!(checkpoint::load(&path).unwrap(), params);
    }
}
