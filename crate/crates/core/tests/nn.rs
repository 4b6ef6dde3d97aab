use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use secbeam_core::nn::{Batch, Checkpoint, Mlp, Optimizer, OptimizerKind};

/// Forward pass written directly against the flat layout: per layer, an
/// `in x out` row-major weight block followed by `out` biases.
fn oracle_forward(sizes: &[usize], p: &[f64], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..sizes.len() - 1 {
        let (ni, no) = (sizes[l], sizes[l + 1]);
        let w = &p[off..off + ni * no];
        let b = &p[off + ni * no..off + ni * no + no];
        let mut z = vec![0.0; no];
        for o in 0..no {
            z[o] = b[o] + (0..ni).map(|i| a[i] * w[i * no + o]).sum::<f64>();
            if l + 2 < sizes.len() {
                z[o] = z[o].max(0.0);
            }
        }
        off += ni * no + no;
        a = z;
    }
    a
}

struct OwnedBatch {
    inputs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

impl OwnedBatch {
    fn random(rng: &mut ChaCha8Rng, h: usize, n_in: usize, n_out: usize) -> Self {
        Self {
            inputs: (0..h).map(|_| (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            actions: (0..h).map(|_| rng.random_range(0..n_out)).collect(),
            targets: (0..h).map(|_| rng.random_range(-2.0..2.0)).collect(),
            weights: (0..h).map(|_| rng.random_range(0.1..1.0)).collect(),
        }
    }

    fn view(&self) -> Batch<'_> {
        Batch {
            inputs: self.inputs.iter().map(Vec::as_slice).collect(),
            actions: self.actions.clone(),
            targets: self.targets.clone(),
            is_weights: self.weights.clone(),
        }
    }
}

#[test]
fn forward_matches_flat_layout_oracle() {
    let sizes = [5, 7, 3, 4];
    let net = Mlp::init(&sizes, 3).unwrap();
    let mut p = net.params().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for v in &mut p {
        *v += rng.random_range(-0.1..0.1); // nonzero biases
    }
    let net = Mlp::from_params(&sizes, p.clone()).unwrap();
    for _ in 0..20 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = net.forward(&x).unwrap();
        let want = oracle_forward(&sizes, &p, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
    let xs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64; 5]).collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let batch = net.forward_batch(&refs).unwrap();
    for (x, out) in xs.iter().zip(&batch) {
        assert_eq!(out, &net.forward(x).unwrap());
    }
}

#[test]
fn gradient_matches_central_differences() {
    let sizes = [6, 5, 4];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..5 {
        let mut p = Mlp::init(&sizes, trial).unwrap().params().to_vec();
        for v in &mut p {
            *v += rng.random_range(-0.2..0.2);
        }
        let net = Mlp::from_params(&sizes, p.clone()).unwrap();
        let owned = OwnedBatch::random(&mut rng, 8, 6, 4);
        let batch = owned.view();
        let (grad, loss) = net.gradient(&batch).unwrap();
        assert!((loss - net.loss(&batch).unwrap()).abs() < 1e-14);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..p.len() {
            let mut up = p.clone();
            up[i] += h;
            let mut dn = p.clone();
            dn[i] -= h;
            let lu = Mlp::from_params(&sizes, up).unwrap().loss(&batch).unwrap();
            let ld = Mlp::from_params(&sizes, dn).unwrap().loss(&batch).unwrap();
            let fd = (lu - ld) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / (grad[i].abs().max(fd.abs()) + 1e-7);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "trial {trial}: max relative error {worst}");
    }
}

#[test]
fn loss_examples() {
    let net = Mlp::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
    let x = [0.0];
    let batch = |targets: Vec<f64>, w: Vec<f64>| Batch {
        inputs: vec![&x[..]; targets.len()],
        actions: vec![0; targets.len()],
        targets,
        is_weights: w,
    };
    assert_eq!(net.loss(&batch(vec![1.0, -1.0], vec![1.0, 1.0])).unwrap(), 1.0);
    assert_eq!(net.loss(&batch(vec![3.0], vec![2.0])).unwrap(), 18.0);
    assert_eq!(net.loss(&batch(vec![0.0, 0.0], vec![1.0, 5.0])).unwrap(), 0.0);
}

#[test]
fn init_properties() {
    let sizes = [10, 20, 3];
    let a = Mlp::init(&sizes, 42).unwrap();
    assert_eq!(a, Mlp::init(&sizes, 42).unwrap());
    assert_ne!(a, Mlp::init(&sizes, 43).unwrap());
    let p = a.params();
    let mut off = 0;
    for l in 0..2 {
        let (ni, no) = (sizes[l], sizes[l + 1]);
        let bound = (6.0 / (ni + no) as f64).sqrt();
        assert!(p[off..off + ni * no].iter().all(|w| w.abs() <= bound));
        assert!(p[off + ni * no..off + ni * no + no].iter().all(|&b| b == 0.0));
        off += ni * no + no;
    }
    assert_eq!(off, p.len());
    assert!(Mlp::init(&[3], 0).is_err());
    assert!(Mlp::init(&[3, 0, 2], 0).is_err());
}

#[test]
fn optimizers_follow_their_update_rules() {
    let sizes = [3, 4, 2];
    let net = Mlp::init(&sizes, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let owned = OwnedBatch::random(&mut rng, 5, 3, 2);
    let (grad, _) = net.gradient(&owned.view()).unwrap();

    let mut sgd = net.clone();
    sgd.apply_gradient(&grad, &mut Optimizer::new(OptimizerKind::Sgd, 0.1, grad.len())).unwrap();
    let mut plain = net.clone();
    plain.backward_and_update(&owned.view(), 0.1).unwrap();
    assert_eq!(sgd, plain);

    // the first Adam step moves every parameter with nonzero gradient by about lr
    let mut adam = net.clone();
    adam.apply_gradient(&grad, &mut Optimizer::new(OptimizerKind::Adam, 0.01, grad.len())).unwrap();
    for ((a, b), g) in adam.params().iter().zip(net.params()).zip(&grad) {
        if g.abs() > 1e-6 {
            assert!(((b - a) - 0.01 * g.signum()).abs() < 1e-4);
        } else if *g == 0.0 {
            assert_eq!(a, b);
        }
    }

    let mut mom = net.clone();
    let mut opt = Optimizer::new(OptimizerKind::Momentum, 0.1, grad.len());
    mom.apply_gradient(&grad, &mut opt).unwrap();
    mom.apply_gradient(&grad, &mut opt).unwrap();
    for ((a, b), g) in mom.params().iter().zip(net.params()).zip(&grad) {
        assert!((b - a - 0.1 * (g + 1.9 * g)).abs() < 1e-12);
    }
    assert!(net.clone().apply_gradient(&grad[1..], &mut Optimizer::new(OptimizerKind::Sgd, 0.1, 0)).is_err());
}

proptest! {
    #[test]
    fn doubling_weights_doubles_gradient(seed in any::<u64>()) {
        let net = Mlp::init(&[4, 6, 3], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let owned = OwnedBatch::random(&mut rng, 6, 4, 3);
        let mut doubled = OwnedBatch { weights: owned.weights.iter().map(|w| 2.0 * w).collect(), ..owned };
        let (g2, _) = net.gradient(&doubled.view()).unwrap();
        doubled.weights.iter_mut().for_each(|w| *w /= 2.0);
        let (g1, _) = net.gradient(&doubled.view()).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn small_step_decreases_loss(seed in any::<u64>()) {
        let mut net = Mlp::init(&[4, 8, 3], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let owned = OwnedBatch::random(&mut rng, 10, 4, 3);
        let before = net.loss(&owned.view()).unwrap();
        let reported = net.backward_and_update(&owned.view(), 1e-3).unwrap();
        prop_assert_eq!(before, reported);
        prop_assert!(net.loss(&owned.view()).unwrap() <= before);
    }

    #[test]
    fn zero_error_batch_is_a_fixed_point(seed in any::<u64>()) {
        let mut net = Mlp::init(&[3, 5, 2], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut owned = OwnedBatch::random(&mut rng, 4, 3, 2);
        owned.targets = owned.inputs.iter().zip(&owned.actions).map(|(x, &a)| net.forward(x).unwrap()[a]).collect();
        let before = net.clone();
        let loss = net.backward_and_update(&owned.view(), 0.5).unwrap();
        prop_assert_eq!(loss, 0.0);
        prop_assert_eq!(net, before);
    }

    #[test]
    fn checkpoint_round_trips_bitwise(seed in any::<u64>(), extra in prop::collection::vec(-1e300f64..1e300, 0..5)) {
        let net = Mlp::init(&[3, 4, 2], seed).unwrap();
        let ck = Checkpoint { net, extras: vec![("norm_mean".into(), extra.clone()), ("flag".into(), vec![1.0])] };
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(&buf[..]).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.extra("norm_mean").unwrap(), &extra[..]);
        prop_assert!(back.extra("missing").is_none());
    }
}

#[test]
fn malformed_checkpoints_are_rejected() {
    let net = Mlp::init(&[2, 2], 0).unwrap();
    let mut buf = Vec::new();
    Checkpoint { net, extras: vec![] }.write(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
    assert!(Checkpoint::read(truncated.as_bytes()).is_err());
    assert!(Checkpoint::read(text.replacen("secbeam-mlp", "other", 1).as_bytes()).is_err());
    assert!(Checkpoint::read(text.replacen("layers 2 2", "layers 2 3", 1).as_bytes()).is_err());
    let nan = text.lines().enumerate().map(|(i, l)| if i == 3 { "NaN\n".to_string() } else { format!("{l}\n") }).collect::<String>();
    assert!(Checkpoint::read(nan.as_bytes()).is_err());
    assert!(Checkpoint::read(format!("{text}junk line\n").as_bytes()).is_err());
}

#[test]
fn batch_validation() {
    let net = Mlp::init(&[2, 3], 0).unwrap();
    let x = [0.5, 0.5];
    let short = [0.5];
    let ok = Batch { inputs: vec![&x[..]], actions: vec![0], targets: vec![1.0], is_weights: vec![1.0] };
    assert!(net.gradient(&ok).is_ok());
    assert!(net.gradient(&Batch { actions: vec![3], ..ok.clone() }).is_err());
    assert!(net.gradient(&Batch { inputs: vec![&short[..]], ..ok.clone() }).is_err());
    assert!(net.gradient(&Batch { is_weights: vec![-1.0], ..ok.clone() }).is_err());
    assert!(net.gradient(&Batch { targets: vec![], ..ok.clone() }).is_err());
    assert!(net.clone().backward_and_update(&ok, 0.0).is_err());
    let huge = Batch { targets: vec![f64::INFINITY], ..ok };
    assert!(net.clone().backward_and_update(&huge, 0.1).is_err());
}
