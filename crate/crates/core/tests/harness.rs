use harvest::mdp::Action;
use harvest::trainer::{stream, FixedPolicy, RandomPolicy};
use harvest::world::Cell;
use harvest::{export_trajectory, monte_carlo, AggregateMetrics, EpisodeMetrics, RunConfig, TrajectoryRecord};

fn toy_env() -> harvest::Environment {
    RunConfig::from_toml(
        "[map]\nname = \"toy\"\n[scenario]\nflight_budget = [25, 25]\n\
         fixed_device_cells = [{ x = 6, y = 1 }, { x = 2, y = 5 }]\n",
    )
    .unwrap()
    .environment()
    .unwrap()
}

#[test]
fn monte_carlo_is_reproducible_and_order_free() {
    let mut env = toy_env();
    let (a, eps_a) = monte_carlo(&mut RandomPolicy, &mut env, 30, 4).unwrap();
    let (b, eps_b) = monte_carlo(&mut RandomPolicy, &mut env, 30, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(eps_a, eps_b);
    // Episode i only depends on stream i, so a shorter run is a prefix.
    let (_, prefix) = monte_carlo(&mut RandomPolicy, &mut env, 10, 4).unwrap();
    assert_eq!(prefix[..], eps_a[..10]);
    let (c, _) = monte_carlo(&mut RandomPolicy, &mut env, 30, 5).unwrap();
    assert_ne!(a.cumulative_reward, c.cumulative_reward);
}

#[test]
fn monte_carlo_rejects_zero_episodes() {
    assert!(monte_carlo(&mut RandomPolicy, &mut toy_env(), 0, 0).is_err());
}

#[test]
fn aggregate_matches_hand_means() {
    let m = |r: f64, landed: bool, c: f64| EpisodeMetrics {
        cumulative_reward: r,
        has_landed: landed,
        collection_ratio: c,
        collection_ratio_and_landed: if landed { c } else { 0.0 },
        steps_used: 3,
    };
    let agg = AggregateMetrics::from_episodes(&[m(1.0, true, 0.5), m(3.0, false, 1.0), m(5.0, true, 0.0)], 7);
    assert_eq!(agg.episodes, 3);
    assert_eq!(agg.seed, 7);
    assert!((agg.has_landed - 2.0 / 3.0).abs() < 1e-15);
    assert!((agg.collection_ratio - 0.5).abs() < 1e-15);
    assert!((agg.collection_ratio_and_landed - 0.5 / 3.0).abs() < 1e-15);
    assert_eq!(agg.cumulative_reward, 3.0);
    assert_eq!(agg.cumulative_reward_std, 2.0);
    let single = AggregateMetrics::from_episodes(&[m(4.0, true, 1.0)], 0);
    assert_eq!(single.cumulative_reward_std, 0.0);
}

fn record(policy: Action, seed: u64) -> TrajectoryRecord {
    let mut env = toy_env();
    let scenario = env.sample(&mut stream(seed, u64::MAX)).unwrap();
    export_trajectory(&mut FixedPolicy(policy), &mut env, &scenario, seed).unwrap()
}

#[test]
fn hover_trajectory_conserves_data() {
    let r = record(Action::Hover, 3);
    assert_eq!(r.steps.len(), 25);
    assert!(!r.metrics.has_landed);
    assert!(r.steps.iter().all(|s| s.uav == r.start && s.next == r.start && !s.sc_triggered));
    for (i, s) in r.steps.iter().enumerate() {
        assert_eq!(s.step as usize, i);
        assert_eq!(s.remaining_time, 25 - i as u32);
    }
    let throughput: f64 = r.steps.iter().map(|s| s.throughput).sum();
    let collected: f64 = r.devices.iter().map(|d| d.collected).sum();
    assert!((throughput - collected).abs() < 1e-9);
    let rewards: f64 = r.steps.iter().map(|s| s.reward).sum();
    assert!((rewards - r.metrics.cumulative_reward).abs() < 1e-9);
    // Hovering costs the movement penalty every step plus the crash at the end.
    assert!((rewards - (throughput - 0.2 * 25.0 - 3.0)).abs() < 1e-9);
    assert_eq!(r.devices.iter().map(|d| d.cell).collect::<Vec<_>>(), vec![Cell::new(6, 1), Cell::new(2, 5)]);
}

#[test]
fn immediate_landing_is_one_silent_step() {
    let r = record(Action::Land, 3);
    assert_eq!(r.steps.len(), 1);
    assert!(r.metrics.has_landed);
    assert_eq!(r.steps[0].reward, 0.0);
    assert_eq!(r.steps[0].scheduled_device, None);
    assert_eq!(r.metrics.collection_ratio, 0.0);
}

#[test]
fn trajectory_json_round_trips() {
    let r = record(Action::North, 9);
    let mut buf = Vec::new();
    r.write_to(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back: TrajectoryRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with("{\"action\"")).count(), r.steps.len());
    let keys: Vec<&str> =
        text.lines().filter_map(|l| l.strip_prefix("  \"")).map(|l| l.split('"').next().unwrap()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(r.map_hash.len(), 16);
}
