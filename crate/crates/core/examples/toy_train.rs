//! Trains on the 10x10 toy map and reports greedy evaluation progress.
//! Usage: toy_train [steps] [seed] [centered|non_centered]

use std::time::Instant;

use harvest::nnet::{NetParams, TrainConfig};
use harvest::trainer::{evaluate_episode, run_training, stream, Environment, EpisodeKind, GreedyPolicy, RandomPolicy};
use harvest::world::{load_map, Cell, PhysicsConfig, RandomizationRanges, TOY_MAP};
use harvest::{ChannelParams, MapMode, RewardParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).map_or(150_000, |s| s.parse().unwrap());
    let seed: u64 = args.get(2).map_or(0, |s| s.parse().unwrap());
    let mode = match args.get(3).map(String::as_str) {
        Some("non_centered") => MapMode::NonCentered,
        _ => MapMode::Centered,
    };
    let ranges = RandomizationRanges {
        device_count: [2, 2],
        flight_budget: [25, 25],
        fixed_device_cells: Some(vec![Cell::new(6, 1), Cell::new(2, 5)]),
        ..Default::default()
    };
    let mut env = Environment::new(
        load_map(TOY_MAP).unwrap(),
        ranges,
        PhysicsConfig::default(),
        ChannelParams::default(),
        RewardParams::default(),
        mode,
        true,
    )
    .unwrap();
    let config = TrainConfig { total_steps: steps, ..Default::default() };
    let t0 = Instant::now();
    let mut evals = Vec::new();
    let (ckpt, log) = run_training(&mut env, &config, &NetParams::default(), seed, |r| {
        if r.kind == EpisodeKind::Eval {
            evals.push(r.metrics);
            if evals.len() % 20 == 0 {
                let tail = &evals[evals.len() - 20..];
                let mean = |f: &dyn Fn(&harvest::EpisodeMetrics) -> f64| tail.iter().map(f).sum::<f64>() / 20.0;
                println!(
                    "step {:>7} t {:>6.0}s reward {:>7.2} landed {:.2} coll {:.2}",
                    r.step,
                    t0.elapsed().as_secs_f64(),
                    mean(&|m| m.cumulative_reward),
                    mean(&|m| m.has_landed as u8 as f64),
                    mean(&|m| m.collection_ratio),
                );
            }
        }
    })
    .unwrap();
    println!("trained {} steps in {:.0}s", log.steps, t0.elapsed().as_secs_f64());
    let mut rng = stream(seed, 99);
    let (mut r, mut l, mut c) = (0.0, 0.0, 0.0);
    for _ in 0..50 {
        let s = env.sample(&mut rng).unwrap();
        let m = evaluate_episode(&mut GreedyPolicy { net: &ckpt.online }, &mut env, &s, &mut rng).unwrap();
        r += m.cumulative_reward / 50.0;
        l += m.has_landed as u8 as f64 / 50.0;
        c += m.collection_ratio / 50.0;
    }
    let rewards: Vec<f64> = (0..1000)
        .map(|_| {
            let s = env.sample(&mut rng).unwrap();
            evaluate_episode(&mut RandomPolicy, &mut env, &s, &mut rng).unwrap().cumulative_reward
        })
        .collect();
    let mean = rewards.iter().sum::<f64>() / 1000.0;
    let std = (rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
    println!("greedy50 reward {r:.2} landed {l:.2} coll {c:.2} | random {mean:.2} +- {std:.2}");
}
