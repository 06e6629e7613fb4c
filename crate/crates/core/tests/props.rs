use proptest::prelude::*;

use stgs_nas::arch::{derive, DerivedArch};
use stgs_nas::autodiff::Tape;
use stgs_nas::data::{BimodalDataset, Provenance, Split};
use stgs_nas::metrics::auc;
use stgs_nas::sampler::{
    gumbel_softmax_sample, stgs_forward_backward, NoiseSource, RelaxationConfig, RelaxationMode, SeededRng,
};
use stgs_nas::space::{SpaceConfig, SuperNet};
use stgs_nas::tensor::{softmax, Tensor};

fn on_simplex(t: &Tensor) -> bool {
    (t.sum() - 1.0).abs() < 1e-9 && t.data().iter().all(|&v| (0.0..=1.0).contains(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_lands_on_the_simplex(v in prop::collection::vec(-50.0f64..50.0, 1..9)) {
        prop_assert!(on_simplex(&softmax(&Tensor::vector(v), 0).unwrap()));
    }

    #[test]
    fn relaxed_samples_land_on_the_simplex(
        v in prop::collection::vec(-10.0f64..10.0, 2..9),
        temperature in 0.01f64..100.0,
        seed in any::<u64>(),
        mode in prop_oneof![Just(RelaxationMode::Stgs), Just(RelaxationMode::PlainSoftmax), Just(RelaxationMode::EvalDeterministic)],
    ) {
        let cfg = RelaxationConfig::new(temperature, 1, mode).unwrap();
        let mut noise = NoiseSource::new(SeededRng::new(seed, 0));
        let s = gumbel_softmax_sample(&Tensor::vector(v), &cfg, &mut noise).unwrap();
        prop_assert!(on_simplex(&s));
    }

    #[test]
    fn straight_through_forward_is_one_hot(
        v in prop::collection::vec(-10.0f64..10.0, 2..9),
        temperature in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let mut tape = Tape::new();
        let phi = tape.constant(Tensor::vector(v));
        let hard = stgs_forward_backward(&mut tape, phi, temperature, &mut NoiseSource::new(SeededRng::new(seed, 1))).unwrap();
        let d = tape.value(hard).data();
        prop_assert_eq!(d.iter().filter(|&&x| x == 1.0).count(), 1);
        prop_assert!(d.iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn counter_rng_is_a_pure_function(seed in any::<u64>(), stream in any::<u64>(), index in 0u64..1 << 40) {
        let a = SeededRng::new(seed, stream);
        let b = SeededRng::new(seed, stream);
        let u = a.uniform(index);
        prop_assert_eq!(u.to_bits(), b.uniform(index).to_bits());
        prop_assert!(u > 0.0 && u < 1.0);
        prop_assert_eq!(a.gumbel(index, 3), b.gumbel(index, 3));
    }

    #[test]
    fn negated_scores_flip_auc(
        pairs in prop::collection::vec((-5.0f64..5.0, 0usize..2), 2..60),
    ) {
        let (scores, mut labels): (Vec<f64>, Vec<usize>) = pairs.into_iter().unzip();
        labels[0] = 0;
        labels[1] = 1;
        let a = auc(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = auc(&neg, &labels).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn feature_files_round_trip(
        n in 1usize..12,
        ni in 1usize..3,
        ns in 1usize..3,
        c in 1usize..5,
        seed in any::<u64>(),
    ) {
        let rng = SeededRng::new(seed, 3);
        let image: Vec<f64> = (0..n * ni * c).map(|i| rng.gumbel(i as u64, 1)[0]).collect();
        let speech: Vec<f64> = (0..n * ns * c).map(|i| -rng.uniform(1 << 30 | i as u64)).collect();
        let labels: Vec<u8> = (0..n).map(|i| (rng.bits(1 << 31 | i as u64) & 1) as u8).collect();
        let ds = BimodalDataset::new(
            Tensor::new(vec![n, ni, c], image).unwrap(),
            Tensor::new(vec![n, ns, c], speech).unwrap(),
            labels,
            Split::Val,
            Provenance::File { path: "prop".into(), crc32: 0 },
        ).unwrap();
        let bytes = ds.to_bytes();
        let back = BimodalDataset::from_bytes(&bytes, Split::Val, "prop").unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.image, ds.image);
        prop_assert_eq!(back.speech, ds.speech);
        prop_assert_eq!(back.labels, ds.labels);
    }

    #[test]
    fn derived_arch_json_round_trips(seed in any::<u64>(), cells in 1usize..4, steps in 1usize..4) {
        let space = SpaceConfig { width: 2, cells, steps, ..SpaceConfig::default() };
        let mut net = SuperNet::new(space, RelaxationConfig::default(), seed).unwrap();
        let mut noise = NoiseSource::new(SeededRng::new(seed, 4));
        let ids: Vec<_> = net.store.iter().filter(|(_, p)| p.group.is_arch()).map(|(id, _)| id).collect();
        for id in ids {
            for v in net.store.get_mut(id).value.data_mut() {
                *v = noise.next_uniform();
            }
        }
        let arch = derive(&net).unwrap();
        let text = arch.to_json().unwrap();
        let back = DerivedArch::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), text);
        prop_assert_eq!(back, arch);
    }
}
