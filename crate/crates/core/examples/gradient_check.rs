// Finite-difference check of every parameter gradient of a small supernet
// under frozen Gumbel noise.

use stgs_nas::autodiff::{Group, Tape};
use stgs_nas::gradcheck::{compare, numeric_param_gradient};
use stgs_nas::sampler::{NoiseSource, RelaxationConfig, RelaxationMode, SeededRng};
use stgs_nas::space::{SpaceConfig, SuperNet};
use stgs_nas::tensor::Tensor;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SpaceConfig { width: 3, ..SpaceConfig::default() };
    let mut net = SuperNet::new(cfg.clone(), RelaxationConfig::default(), 11)?;
    // perturb the logits away from the uniform start
    let mut shift = NoiseSource::new(SeededRng::new(11, 99));
    let ids: Vec<_> = net.store.iter().filter(|(_, p)| p.group.is_arch()).map(|(id, _)| id).collect();
    for id in ids {
        for v in net.store.get_mut(id).value.data_mut() {
            *v = shift.next_uniform() - 0.5;
        }
    }

    let batch = 2;
    let mut feats = NoiseSource::new(SeededRng::new(11, 5));
    let mut make = |nodes: usize| {
        let n = batch * nodes * cfg.width;
        Tensor::new(vec![batch, nodes, cfg.width], (0..n).map(|_| 2.0 * feats.next_uniform() - 1.0).collect())
    };
    let (image, speech) = (make(cfg.image_nodes)?, make(cfg.speech_nodes)?);
    let labels = [0, 1];
    // plain softmax keeps the loss smooth in the logits
    let relax = RelaxationConfig::new(2.0, 1, RelaxationMode::PlainSoftmax)?;
    let loss_of = |net: &SuperNet| -> stgs_nas::Result<(Tape, stgs_nas::autodiff::Var)> {
        let mut tape = Tape::new();
        let mut noise = NoiseSource::new(SeededRng::new(0, 0));
        let logits = net.forward(&mut tape, &image, &speech, &relax, &mut noise)?;
        let loss = tape.softmax_cross_entropy(logits, &labels)?;
        Ok((tape, loss))
    };

    let (tape, loss) = loss_of(&net)?;
    net.store.zero_grad();
    tape.backward_into(loss, &mut net.store, |_| true)?;

    let template = net.clone();
    for group in [Group::Weights, Group::Alpha, Group::Beta, Group::Gamma] {
        let mut entries = Vec::new();
        let mut analytic = Vec::new();
        for id in net.store.ids_in(group) {
            let p = net.store.get(id);
            for i in (0..p.value.len()).step_by(3) {
                entries.push((id, i));
                analytic.push(p.grad.data()[i]);
            }
        }
        let numeric = numeric_param_gradient(&mut net.store, &entries, 1e-5, |store| {
            let probe = SuperNet { store: store.clone(), ..template.clone() };
            let (tape, loss) = loss_of(&probe)?;
            tape.value(loss).item()
        })?;
        let report = compare(analytic, numeric, 1e-6);
        println!("{:>7}: {:>3} entries, max relative error {:.2e}", group.name(), entries.len(), report.max_rel_error);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("gradient check");
}
