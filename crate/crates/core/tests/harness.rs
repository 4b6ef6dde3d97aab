use secbeam_core::agent::{evaluate, FixedPolicy};
use secbeam_core::codebook::{BsCodebook, Codebooks, IrsCodebook};
use secbeam_core::config::ExperimentConfig;
use secbeam_core::env::{Environment, Mdp};
use secbeam_core::harness::{
    baseline_no_irs, baseline_random_phase, config_from_csv, mean_std, mrt_precoder, run_approach, run_sweep,
    run_train, sweep_csv, train_agent, Approach, Seeds, SweepSpec, SweepVar, EVAL_HEADER, SWEEP_HEADER,
    TRAIN_HEADER,
};
use secbeam_core::numerics::norm_sq;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::parse(
        "irs_elements = 4\n\
         irs_codebook_size = 2\n\
         bs_directions = 2\n\
         power_levels = 1\n\
         hidden_layers = 8\n\
         batch_size = 4\n\
         warmup_steps = 50\n\
         episodes = 3\n\
         horizon = 5\n\
         eval_episodes = 2\n",
    )
    .unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn train_csv_shape_and_reproducibility() {
    let cfg = tiny();
    let (csv, _) = run_train(&cfg).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, TRAIN_HEADER);
    assert_eq!(data_lines(&csv).len(), 3);
    assert!(csv.contains("# p_max_w = 1e0\n"), "{csv}");
    assert!(csv.contains("# noise_w = 1e-12\n"));
    assert!(csv.contains("# seed = 1\n"));
    assert_eq!(run_train(&cfg).unwrap().0, csv);

    // the embedded configuration alone reproduces the file
    let back = config_from_csv(&csv).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(run_train(&back).unwrap().0, csv);

    let mut other = cfg.clone();
    other.seed = 2;
    assert_ne!(run_train(&other).unwrap().0, csv);
}

#[test]
fn seed_streams() {
    let s = Seeds::derive(3);
    let all = [s.env, s.agent, s.warmup, s.eval];
    for i in 0..4 {
        for j in i + 1..4 {
            assert_ne!(all[i], all[j]);
        }
    }
    assert_eq!(Seeds::derive(3), s);
    assert_ne!(Seeds::derive(4), s);
}

#[test]
fn sweep_counts_and_aggregates() {
    let cfg = tiny();
    let spec = SweepSpec::new(SweepVar::PMaxDbm, vec![20.0, 30.0], vec![1]);
    assert_eq!(spec.approaches, Approach::ALL.to_vec());
    let rows = run_sweep(&cfg, &spec).unwrap();
    assert_eq!(rows.len(), 8);
    let csv = sweep_csv(&cfg, &spec, &rows);
    assert!(csv.lines().any(|l| l == SWEEP_HEADER));
    let lines = data_lines(&csv);
    let per_seed: Vec<&str> = lines.iter().copied().filter(|l| l.split(',').nth(3) == Some("1")).collect();
    assert_eq!(per_seed.len(), 8);
    assert_eq!(lines.len(), 8 + 2 * 8);
    assert!(config_from_csv(&csv).is_ok());

    let spec3 = SweepSpec::new(SweepVar::IrsElements, vec![2.0, 4.0], vec![1, 2, 3]);
    let spec3 = SweepSpec { approaches: vec![Approach::RandomPhase, Approach::NoIrs], ..spec3 };
    let rows = run_sweep(&cfg, &spec3).unwrap();
    let csv = sweep_csv(&cfg, &spec3, &rows);
    let parsed: Vec<Vec<&str>> = data_lines(&csv).iter().map(|l| l.split(',').collect()).collect();
    for agg in parsed.iter().filter(|f| f[3] == "mean" || f[3] == "std") {
        let sec: Vec<f64> = parsed
            .iter()
            .filter(|f| f[0] == agg[0] && f[2] == agg[2] && f[3].parse::<u64>().is_ok())
            .map(|f| f[4].parse().unwrap())
            .collect();
        assert_eq!(sec.len(), 3);
        let n = sec.len() as f64;
        let mean = sec.iter().sum::<f64>() / n;
        let sd = (sec.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let want = if agg[3] == "mean" { mean } else { sd };
        let got: f64 = agg[4].parse().unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn sweep_spec_validation() {
    let cfg = tiny();
    assert!(run_sweep(&cfg, &SweepSpec::new(SweepVar::Rho, vec![0.9], vec![1])).is_err());
    assert!(run_sweep(&cfg, &SweepSpec::new(SweepVar::Rho, vec![0.9, 0.5], vec![])).is_err());
    assert!(run_sweep(&cfg, &SweepSpec::new(SweepVar::Rho, vec![0.9, 1.5], vec![1])).is_err());
    assert!(run_sweep(&cfg, &SweepSpec::new(SweepVar::IrsElements, vec![2.5, 3.0], vec![1])).is_err());
    assert!("bandwidth".parse::<SweepVar>().is_err());
    assert!("pds".parse::<Approach>().is_err());
    assert_eq!("no_irs".parse::<Approach>().unwrap(), Approach::NoIrs);
}

#[test]
fn stationary_sweep_point() {
    let mut cfg = tiny();
    for k in ["error_bu", "error_ru", "error_be", "error_re"] {
        cfg.set(k, "0").unwrap();
    }
    cfg.rho = 1.0;
    let (stats, _) = train_agent(&cfg, 1).unwrap();
    assert_eq!(stats.len(), 3);
    let c = SweepVar::Rho.apply(&cfg, 1.0).unwrap();
    let mut env = Environment::new(c.env_params().unwrap(), c.codebooks().unwrap(), 3).unwrap();
    env.reset().unwrap();
    assert!((0..5).all(|_| env.step(1).unwrap().r_unknown == 0.0));
}

#[test]
fn mean_std_examples() {
    assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
}

/// One user, eavesdropper pushed so far away that its channel is numerically
/// zero, static channels without estimation error.
fn single_user_cfg() -> ExperimentConfig {
    let mut cfg = tiny();
    for (k, v) in [
        ("user_positions", "30:40"),
        ("eve_positions", "1e12:1e12"),
        ("rho", "1"),
        ("error_bu", "0"),
        ("error_ru", "0"),
        ("error_be", "0"),
        ("error_re", "0"),
        ("eval_episodes", "4"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg
}

#[test]
fn no_irs_single_user_matches_closed_form() {
    let cfg = single_user_cfg();
    let stats = baseline_no_irs(&cfg, 5).unwrap();
    let mut params = cfg.env_params().unwrap();
    params.disable_irs = true;
    let mut env = Environment::new(params, cfg.codebooks().unwrap(), Seeds::derive(5).eval).unwrap();
    let (mut total, mut n) = (0.0, 0.0);
    for _ in 0..4 {
        env.reset().unwrap();
        while !env.done() {
            let h = &env.channels().h_bu[0];
            total += (1.0 + cfg.p_max_w() * norm_sq(h) / cfg.noise_w()).log2();
            n += 1.0;
            // advances the channel stream exactly as the baseline does
            env.step(0).unwrap();
        }
    }
    let want = total / n;
    assert!((stats.avg_secrecy_rate - want).abs() < 1e-9 * want, "{} vs {want}", stats.avg_secrecy_rate);
}

#[test]
fn no_irs_ignores_the_irs_codebook() {
    let cfg = tiny();
    let mut other = cfg.clone();
    other.set("codebook_seed", "99").unwrap();
    other.set("irs_codebook_size", "5").unwrap();
    assert_eq!(baseline_no_irs(&cfg, 2).unwrap(), baseline_no_irs(&other, 2).unwrap());
}

#[test]
fn no_irs_matches_manual_mrt_rollout() {
    let cfg = tiny();
    let got = baseline_no_irs(&cfg, 8).unwrap();

    let mut params = cfg.env_params().unwrap();
    params.disable_irs = true;
    let l = params.l;
    let mut env = Environment::new(params, cfg.codebooks().unwrap(), Seeds::derive(8).eval).unwrap();
    let mrt_books = |env: &Environment| Codebooks {
        bs: BsCodebook { entries: vec![mrt_precoder(&env.channels().h_bu, cfg.p_max_w())], power_levels: vec![] },
        irs: IrsCodebook { bits: 1, entries: vec![vec![0.0; l]] },
    };
    let (mut sec, mut n) = (0.0, 0.0);
    for _ in 0..cfg.eval_episodes {
        env.reset().unwrap();
        assert!(env.channels().h_br.data().iter().all(|z| z.norm() == 0.0));
        while !env.done() {
            let books = mrt_books(&env);
            let v = &books.bs.entries[0];
            assert!((secbeam_core::rates::transmit_power(v) - cfg.p_max_w()).abs() < 1e-12);
            env.set_books(books).unwrap();
            let fb = Mdp::step(&mut env, 0).unwrap();
            sec += fb.mean_secrecy;
            n += 1.0;
        }
    }
    assert!((got.avg_secrecy_rate - sec / n).abs() < 1e-12);
}

#[test]
fn approaches_share_evaluation_channels() {
    let cfg = tiny();
    let a = baseline_random_phase(&cfg, 3).unwrap();
    assert_eq!(a, baseline_random_phase(&cfg, 3).unwrap());
    assert_eq!(a, run_approach(&cfg, Approach::RandomPhase, 3).unwrap());
    assert_ne!(a, baseline_random_phase(&cfg, 4).unwrap());

    // a fixed action evaluated twice on the evaluation stream of one seed
    let mk = || Environment::new(cfg.env_params().unwrap(), cfg.codebooks().unwrap(), Seeds::derive(3).eval).unwrap();
    let x = evaluate(&mut FixedPolicy(1), &mut mk(), 2).unwrap();
    let y = evaluate(&mut FixedPolicy(1), &mut mk(), 2).unwrap();
    assert_eq!(x, y);
    assert!(EVAL_HEADER.starts_with("approach,seed,avg_secrecy_rate,qos_sat_prob"));
}
