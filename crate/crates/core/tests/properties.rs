use proptest::prelude::*;

use asymkl::algorithms::{Step, Window};
use asymkl::analysis::{discounted_visitation, latent_mi_bound_check, mi_bound_check, DiscreteJoint};
use asymkl::distributions::{Action, Categorical, DiagGaussian};
use asymkl::envs::TabularMdp;
use asymkl::numerics::Rng;
use asymkl::observation::{MaskIndex, MaskSpec, ObservationSpec};
use asymkl::runtime::ReplayBuffer;

fn logits(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0..8.0f64, 2..=max_len)
}

fn logit_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=8usize).prop_flat_map(|n| (prop::collection::vec(-8.0..8.0f64, n), prop::collection::vec(-8.0..8.0f64, n)))
}

fn simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

fn window(len: usize, tag: f64) -> Window {
    let steps = (0..len)
        .map(|_| Step {
            features: vec![tag],
            default_features: vec![],
            action: Action::Discrete(0),
            reward: 0.0,
            behavior_log_prob: 0.0,
            terminal: false,
        })
        .collect();
    Window::new(steps, vec![tag], vec![]).unwrap()
}

proptest! {
    #[test]
    fn categorical_kl_is_nonnegative_and_zero_on_self((a, b) in logit_pair()) {
        let p = Categorical::from_logits(a).unwrap();
        let q = Categorical::from_logits(b).unwrap();
        prop_assert!(p.kl(&q).unwrap() >= -1e-12);
        prop_assert!(p.kl(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gaussian_kl_is_nonnegative(
        dims in prop::collection::vec((-3.0..3.0f64, 0.05..2.0f64, -3.0..3.0f64, 0.05..2.0f64), 1..5)
    ) {
        let p = DiagGaussian::new(dims.iter().map(|d| d.0).collect(), dims.iter().map(|d| d.1).collect()).unwrap();
        let q = DiagGaussian::new(dims.iter().map(|d| d.2).collect(), dims.iter().map(|d| d.3).collect()).unwrap();
        prop_assert!(p.kl(&q).unwrap() >= -1e-12);
        prop_assert!(p.kl(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn entropy_is_between_zero_and_log_n(l in logits(12)) {
        let n = l.len() as f64;
        let p = Categorical::from_logits(l).unwrap();
        let h = p.entropy();
        prop_assert!(h >= -1e-12 && h <= n.ln() + 1e-12);
        let total: f64 = p.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_gap_equals_marginal_kl(seed in any::<u64>(), ns in 1..8usize, na in 2..8usize) {
        let mut rng = Rng::new(seed);
        let joint = DiscreteJoint::random(&mut rng, ns, na);
        let prior = simplex(&mut rng, na);
        let check = mi_bound_check(&joint, &prior).unwrap();
        prop_assert!(check.gap() >= -1e-9);
        prop_assert!((check.gap() - check.marginal_kl).abs() < 1e-9);
        let at_marginal = mi_bound_check(&joint, &joint.action_marginal()).unwrap();
        prop_assert!(at_marginal.gap().abs() < 1e-9);
    }

    #[test]
    fn latent_chain_orders_information(seed in any::<u64>(), ns in 1..6usize, nz in 1..5usize, na in 2..6usize) {
        let mut rng = Rng::new(seed);
        let joint = DiscreteJoint::random_latent(&mut rng, ns, nz, na);
        prop_assert!(latent_mi_bound_check(&joint).unwrap().holds(1e-9));
    }

    #[test]
    fn replay_stays_within_capacity_and_keeps_newest(
        capacity in 1..40usize,
        lens in prop::collection::vec(1..10usize, 1..60)
    ) {
        let replay = ReplayBuffer::new(capacity).unwrap();
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (i, &len) in lens.iter().enumerate() {
            if len > capacity {
                prop_assert!(replay.push(window(len, i as f64)).is_err());
                continue;
            }
            replay.push(window(len, i as f64)).unwrap();
            kept.push((i, len));
            while kept.iter().map(|k| k.1).sum::<usize>() > capacity {
                kept.remove(0);
            }
            prop_assert!(replay.transitions() <= capacity);
            prop_assert_eq!(replay.transitions(), kept.iter().map(|k| k.1).sum::<usize>());
            prop_assert_eq!(replay.windows(), kept.len());
        }
        if !kept.is_empty() {
            let oldest = kept[0].0 as f64;
            for w in replay.sample(50, &mut Rng::new(1)).unwrap() {
                prop_assert!(w.next_features[0] >= oldest);
            }
        }
    }

    #[test]
    fn mask_split_then_merge_is_identity(
        sizes in prop::collection::vec(1..5usize, 1..5),
        visible in prop::collection::vec(any::<bool>(), 5),
        history in 1..4usize,
        seed in any::<u64>()
    ) {
        let names: Vec<String> = (0..sizes.len()).map(|i| format!("g{i}")).collect();
        let pairs: Vec<(&str, usize)> = names.iter().map(|n| n.as_str()).zip(sizes.iter().copied()).collect();
        let spec = ObservationSpec::from_pairs(&pairs, history).unwrap();
        let shown: Vec<&str> = names.iter().zip(&visible).filter(|(_, v)| **v).map(|(n, _)| n.as_str()).collect();
        let index = MaskIndex::new(&spec, &MaskSpec::task_subset(&shown)).unwrap();
        let mut rng = Rng::new(seed);
        let x: Vec<f64> = (0..spec.total_len()).map(|_| rng.normal()).collect();
        let (xd, xg) = index.split(&x).unwrap();
        let shown_len: usize = sizes.iter().zip(&visible).filter(|(_, v)| **v).map(|(s, _)| s).sum();
        prop_assert_eq!(xd.len(), shown_len * history);
        prop_assert_eq!(xd.len() + xg.len(), x.len());
        prop_assert_eq!(index.merge(&xd, &xg).unwrap(), x);
    }

    #[test]
    fn visitation_mass_is_the_truncated_geometric_sum(seed in any::<u64>(), ns in 1..8usize, na in 1..4usize, gamma in 0.1..0.95f64) {
        let mut rng = Rng::new(seed);
        let mdp = TabularMdp::random(ns, na, gamma, &mut rng);
        let pi: Vec<Vec<f64>> = (0..ns).map(|_| simplex(&mut rng, na)).collect();
        let d = discounted_visitation(&mdp, &pi, gamma, None).unwrap();
        prop_assert!(d.weights.iter().all(|w| *w >= 0.0));
        let total: f64 = d.weights.iter().sum();
        let expected = (1.0 - gamma.powi(d.horizon as i32)) / (1.0 - gamma);
        prop_assert!((total - expected).abs() < 1e-9, "{} vs {}", total, expected);
    }
}
