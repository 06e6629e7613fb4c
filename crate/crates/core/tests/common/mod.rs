// Helpers shared by the integration targets.
#![allow(dead_code)]

use stgs_nas::autodiff::{Group, ParamStore, Tape, Var};
use stgs_nas::gradcheck::{check_tape_fn, compare, numeric_param_gradient, GradCheckConfig, GradCheckReport};
use stgs_nas::ops::{apply_op, FusionOp, OpWeights};
use stgs_nas::sampler::{soft_sample, NoiseSource, RelaxationConfig, RelaxationMode, SeededRng};
use stgs_nas::space::{ArchSample, SpaceConfig, SuperNet};
use stgs_nas::tensor::Tensor;
use stgs_nas::Result;

pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut n = NoiseSource::new(SeededRng::new(seed, 77));
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| 2.0 * n.next_uniform() - 1.0).collect()).unwrap()
}

/// Random values bounded away from zero, for ops with a kink at 0.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
    random(shape, seed).map(|v| if v >= 0.0 { v + 0.2 } else { v - 0.2 })
}

pub fn positive(shape: &[usize], seed: u64) -> Tensor {
    random(shape, seed).map(|v| 1.5 + v)
}

/// `sum(x ⊙ R)` with a fixed random `R`, so every output entry matters.
pub fn probe(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let r = tape.constant(random(tape.value(x).shape(), seed ^ 0xabc));
    let p = tape.mul(x, r)?;
    Ok(tape.sum_all(p))
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

fn case(name: &str, inputs: Vec<Tensor>, build: Build) -> (String, Vec<Tensor>, Build) {
    (name.to_string(), inputs, build)
}

/// Finite-difference reports for every differentiable tape op and every
/// fusion op.
pub fn op_checks() -> Result<Vec<(String, GradCheckReport)>> {
    let m = |shape: &[usize], s: u64| random(shape, s);
    let cases = vec![
        case("add", vec![m(&[3, 4], 1), m(&[3, 4], 2)], Box::new(|t, v| {
            let o = t.add(v[0], v[1])?;
            probe(t, o, 1)
        })),
        case("sub", vec![m(&[3, 4], 3), m(&[3, 4], 4)], Box::new(|t, v| {
            let o = t.sub(v[0], v[1])?;
            probe(t, o, 2)
        })),
        case("mul", vec![m(&[3, 4], 5), m(&[3, 4], 6)], Box::new(|t, v| {
            let o = t.mul(v[0], v[1])?;
            probe(t, o, 3)
        })),
        case("scale", vec![m(&[5], 7)], Box::new(|t, v| {
            let o = t.scale(v[0], -2.5);
            probe(t, o, 4)
        })),
        case("mul_scalar", vec![m(&[2, 3], 8), m(&[1], 9)], Box::new(|t, v| {
            let o = t.mul_scalar(v[0], v[1])?;
            probe(t, o, 5)
        })),
        case("add_row_bias", vec![m(&[2, 3, 4], 10), m(&[4], 11)], Box::new(|t, v| {
            let o = t.add_row_bias(v[0], v[1])?;
            probe(t, o, 6)
        })),
        case("matmul", vec![m(&[3, 4], 12), m(&[4, 2], 13)], Box::new(|t, v| {
            let o = t.matmul(v[0], v[1])?;
            probe(t, o, 7)
        })),
        case("batch_matmul", vec![m(&[2, 3, 4], 14), m(&[2, 4, 5], 15)], Box::new(|t, v| {
            let o = t.batch_matmul(v[0], v[1], false)?;
            probe(t, o, 8)
        })),
        case("batch_matmul_transposed", vec![m(&[2, 3, 4], 16), m(&[2, 5, 4], 17)], Box::new(|t, v| {
            let o = t.batch_matmul(v[0], v[1], true)?;
            probe(t, o, 9)
        })),
        case("softmax_last", vec![m(&[3, 4], 18)], Box::new(|t, v| {
            let o = t.softmax(v[0], 1)?;
            probe(t, o, 10)
        })),
        case("softmax_first", vec![m(&[3, 4], 19)], Box::new(|t, v| {
            let o = t.softmax(v[0], 0)?;
            probe(t, o, 11)
        })),
        case("softmax_middle", vec![m(&[2, 3, 4], 20)], Box::new(|t, v| {
            let o = t.softmax(v[0], 1)?;
            probe(t, o, 12)
        })),
        case("log_softmax", vec![m(&[3, 4], 21)], Box::new(|t, v| {
            let o = t.log_softmax(v[0], 1)?;
            probe(t, o, 13)
        })),
        case("sigmoid", vec![m(&[6], 22)], Box::new(|t, v| {
            let o = t.sigmoid(v[0]);
            probe(t, o, 14)
        })),
        case("relu", vec![away_from_zero(&[8], 23)], Box::new(|t, v| {
            let o = t.relu(v[0]);
            probe(t, o, 15)
        })),
        case("log", vec![positive(&[6], 24)], Box::new(|t, v| {
            let o = t.log(v[0])?;
            probe(t, o, 16)
        })),
        case("exp", vec![m(&[6], 25)], Box::new(|t, v| {
            let o = t.exp(v[0]);
            probe(t, o, 17)
        })),
        case("neg", vec![m(&[6], 26)], Box::new(|t, v| {
            let o = t.neg(v[0]);
            probe(t, o, 18)
        })),
        case("concat", vec![m(&[2, 3], 27), m(&[2, 2], 28), m(&[2, 1], 29)], Box::new(|t, v| {
            let o = t.concat(&[v[0], v[1], v[2]], 1)?;
            probe(t, o, 19)
        })),
        case("sum_axis", vec![m(&[2, 3, 4], 30)], Box::new(|t, v| {
            let o = t.sum_axis(v[0], 1)?;
            probe(t, o, 20)
        })),
        case("mean_axis", vec![m(&[2, 3, 4], 31)], Box::new(|t, v| {
            let o = t.mean_axis(v[0], 2)?;
            probe(t, o, 21)
        })),
        case("sum_all", vec![m(&[2, 3], 32)], Box::new(|t, v| {
            let s = t.exp(v[0]);
            Ok(t.sum_all(s))
        })),
        case("mean_all", vec![m(&[2, 3], 33)], Box::new(|t, v| {
            let s = t.exp(v[0]);
            Ok(t.mean_all(s))
        })),
        case("reshape", vec![m(&[2, 6], 34)], Box::new(|t, v| {
            let o = t.reshape(v[0], &[3, 4])?;
            probe(t, o, 22)
        })),
        case("narrow", vec![m(&[3, 5], 35)], Box::new(|t, v| {
            let o = t.narrow(v[0], 1, 1, 3)?;
            probe(t, o, 23)
        })),
        case("index", vec![m(&[7], 36)], Box::new(|t, v| {
            let a = t.index(v[0], 4)?;
            let b = t.index(v[0], 1)?;
            let ab = t.mul(a, b)?;
            Ok(t.sum_all(ab))
        })),
        case("softmax_cross_entropy", vec![m(&[4, 2], 37)], Box::new(|t, v| {
            t.softmax_cross_entropy(v[0], &[0, 1, 1, 0])
        })),
    ];

    let cfg = GradCheckConfig::default();
    let mut out = Vec::new();
    for (name, inputs, build) in cases {
        out.push((name, check_tape_fn(&inputs, cfg, build)?));
    }

    let width = 4;
    let mut store = ParamStore::new();
    let mut init = NoiseSource::new(SeededRng::new(5, 0));
    let weights = OpWeights::allocate(&mut store, "op", width, &FusionOp::POOL, &mut init);
    for op in FusionOp::POOL {
        if op == FusionOp::Zero {
            continue;
        }
        let inputs = vec![random(&[2, 3, width], 40), random(&[2, 3, width], 41)];
        let report = check_tape_fn(&inputs, cfg, |t, v| {
            let o = apply_op(t, &store, op, v[0], v[1], &weights)?;
            probe(t, o, 24)
        })?;
        out.push((format!("fusion:{op}"), report));
    }
    Ok(out)
}

/// Checks of every parameter gradient of a small supernet, scalars sampled
/// with stride `stride`.
fn check_net<F>(net: &mut SuperNet, groups: &[Group], stride: usize, loss_of: F) -> Result<GradCheckReport>
where
    F: Fn(&SuperNet) -> Result<(Tape, Var)>,
{
    let (tape, loss) = loss_of(net)?;
    net.store.zero_grad();
    tape.backward_into(loss, &mut net.store, |_| true)?;
    let template = net.clone();
    let mut entries = Vec::new();
    let mut analytic = Vec::new();
    for &group in groups {
        for id in net.store.ids_in(group) {
            let p = net.store.get(id);
            for i in (0..p.value.len()).step_by(stride) {
                entries.push((id, i));
                analytic.push(p.grad.data()[i]);
            }
        }
    }
    let numeric = numeric_param_gradient(&mut net.store, &entries, 1e-5, |store| {
        let probe_net = SuperNet { store: store.clone(), ..template.clone() };
        let (tape, loss) = loss_of(&probe_net)?;
        tape.value(loss).item()
    })?;
    net.store.zero_grad();
    Ok(compare(analytic, numeric, 1e-6))
}

pub fn small_net(seed: u64) -> Result<(SuperNet, Tensor, Tensor)> {
    let cfg = SpaceConfig { width: 3, seq_len: 2, ..SpaceConfig::default() };
    let mut net = SuperNet::new(cfg.clone(), RelaxationConfig::default(), seed)?;
    let mut shift = NoiseSource::new(SeededRng::new(seed, 99));
    let ids: Vec<_> = net.store.iter().filter(|(_, p)| p.group.is_arch()).map(|(id, _)| id).collect();
    for id in ids {
        for v in net.store.get_mut(id).value.data_mut() {
            *v = 2.0 * shift.next_uniform() - 1.0;
        }
    }
    let batch = 3;
    let image = random(&[batch, cfg.image_nodes, cfg.seq_len, cfg.width], seed + 1);
    let speech = random(&[batch, cfg.speech_nodes, cfg.seq_len, cfg.width], seed + 2);
    Ok((net, image, speech))
}

const LABELS: [usize; 3] = [0, 1, 1];

/// Whole-supernet checks: weights under straight-through with frozen noise,
/// everything under plain softmax, and everything under the frozen soft
/// Gumbel relaxation averaged over several samples.
pub fn supernet_checks() -> Result<Vec<(String, GradCheckReport)>> {
    let all = [Group::Weights, Group::Alpha, Group::Beta, Group::Gamma];
    let mut out = Vec::new();

    let (mut net, image, speech) = small_net(21)?;
    let stgs = RelaxationConfig::new(1.0, 3, RelaxationMode::Stgs)?;
    let report = check_net(&mut net, &[Group::Weights], 2, |n| {
        let mut tape = Tape::new();
        let mut noise = NoiseSource::new(SeededRng::new(4, 4));
        let logits = n.forward(&mut tape, &image, &speech, &stgs, &mut noise)?;
        let loss = tape.softmax_cross_entropy(logits, &LABELS)?;
        Ok((tape, loss))
    })?;
    out.push(("supernet:stgs-weights".to_string(), report));

    let plain = RelaxationConfig::new(2.0, 1, RelaxationMode::PlainSoftmax)?;
    let report = check_net(&mut net, &all, 2, |n| {
        let mut tape = Tape::new();
        let mut noise = NoiseSource::new(SeededRng::new(0, 0));
        let logits = n.forward(&mut tape, &image, &speech, &plain, &mut noise)?;
        let loss = tape.softmax_cross_entropy(logits, &LABELS)?;
        Ok((tape, loss))
    })?;
    out.push(("supernet:plain-softmax".to_string(), report));

    let report = check_net(&mut net, &all, 2, |n| {
        let mut tape = Tape::new();
        let mut noise = NoiseSource::new(SeededRng::new(8, 8));
        let sample = soft_arch(n, &mut tape, 1.5, 3, &mut noise)?;
        let logits = n.forward_with(&mut tape, &sample, &image, &speech, None)?;
        let loss = tape.softmax_cross_entropy(logits, &LABELS)?;
        Ok((tape, loss))
    })?;
    out.push(("supernet:frozen-soft-gumbel".to_string(), report));
    Ok(out)
}

fn averaged(tape: &mut Tape, logits: Var, temperature: f64, m: usize, noise: &mut NoiseSource) -> Result<Var> {
    let mut total = soft_sample(tape, logits, temperature, noise)?;
    for _ in 1..m {
        let s = soft_sample(tape, logits, temperature, noise)?;
        total = tape.add(total, s)?;
    }
    Ok(tape.scale(total, 1.0 / m as f64))
}

/// Architecture weights from `m` averaged soft Gumbel-Softmax samples.
pub fn soft_arch(net: &SuperNet, tape: &mut Tape, temperature: f64, m: usize, noise: &mut NoiseSource) -> Result<ArchSample> {
    let mut alpha = vec![None; net.config.edges().len()];
    for (i, e) in net.arch.alpha.iter().enumerate() {
        let l = tape.param(&net.store, e.param);
        alpha[i] = Some(averaged(tape, l, temperature, m, noise)?);
    }
    let mut beta = vec![None; 2 * net.config.cells];
    for (i, s) in net.arch.beta.iter().enumerate() {
        let l = tape.param(&net.store, s.param);
        beta[i] = Some(averaged(tape, l, temperature, m, noise)?);
    }
    let mut gamma = Vec::new();
    for s in &net.arch.gamma {
        let l = tape.param(&net.store, s.param);
        gamma.push(averaged(tape, l, temperature, m, noise)?);
    }
    Ok(ArchSample { alpha, beta, gamma, fixed: false })
}
