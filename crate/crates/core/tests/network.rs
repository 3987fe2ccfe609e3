use mobserv::graph::petersen;
use mobserv::sim::{simulate, Horizon, NetworkState, SimConfig, SwapNormalization, Simulator};
use mobserv::GraphTopology;
use proptest::prelude::*;

fn graph(choice: u8, k: usize) -> GraphTopology {
    match choice % 3 {
        0 => GraphTopology::cycle(k).unwrap(),
        1 => GraphTopology::torus(3, k).unwrap(),
        _ => petersen(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Customers are neither created nor lost, the placement stays a
    /// permutation and the clock only moves forward.
    #[test]
    fn conservation_and_consistency(
        choice in 0u8..3,
        half in 1usize..4,
        lambda in 0.0f64..1.5,
        beta in 0.0f64..3.0,
        replicas in 1usize..4,
        level in 0u32..4,
        per_edge in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let g = graph(choice, 2 * half + 1);
        let mut cfg = SimConfig::new(g, lambda, beta).with_replicas(replicas).with_seed(seed);
        if per_edge {
            cfg.swap_normalization = SwapNormalization::PerEdge;
        }
        let state = NetworkState::uniform_level(&cfg.topology, replicas, level);
        let mut sim = Simulator::new(&cfg, state).unwrap();
        let mut last = 0.0;
        for _ in 0..2000 {
            let Some(ev) = sim.step() else { break };
            prop_assert!(ev.time >= last);
            last = ev.time;
        }
        let total = sim.state().total_customers() as u64;
        prop_assert_eq!(sim.initial_customers() + sim.arrived() - sim.exited(), total);
        prop_assert!(sim.state().permutation_is_consistent());
    }

    /// Swaps never change queue lengths: with no arrivals and idle servers
    /// the per-server lengths stay put.
    #[test]
    fn swaps_carry_queues(k in 2usize..5, seed in any::<u64>()) {
        let g = GraphTopology::cycle(2 * k + 1).unwrap();
        let cfg = SimConfig::new(g, 0.0, 1.0).with_seed(seed).with_horizon(Horizon::Events(500));
        let state = NetworkState::empty(&cfg.topology, 1);
        let traj = simulate(&cfg, state).unwrap();
        prop_assert_eq!(traj.event_counts.total(), traj.event_counts.swap);
        prop_assert!(traj.queue_lengths.iter().all(|q| q.iter().all(|&l| l == 0)));
    }
}

#[test]
fn same_seed_same_trajectory() {
    let cfg = SimConfig::new(GraphTopology::cycle(7).unwrap(), 0.5, 1.0)
        .with_seed(42)
        .with_horizon(Horizon::Time(200.0));
    let run = || {
        let t = simulate(&cfg, NetworkState::empty(&cfg.topology, 1)).unwrap();
        (t.queue_lengths, t.event_counts, t.final_time)
    };
    assert_eq!(run(), run());
    let other = simulate(&cfg.clone().with_seed(43), NetworkState::empty(&cfg.topology, 1)).unwrap();
    assert_ne!(other.event_counts, run().1);
}
