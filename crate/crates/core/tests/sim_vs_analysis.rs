use proptest::prelude::*;

use tsnkit::analysis::AnalysisOptions;
use tsnkit::config::PreemptionConfig;
use tsnkit::network::{route_all, Flow};
use tsnkit::sim::{cross_validate, PhasePolicy, SimConfig};
use tsnkit::synthesis::valid_configs;
use tsnkit::time::{Duration, Rate};
use tsnkit::topology;

fn flow(i: usize, (src, dst, period, size, prio): (usize, usize, i64, u32, u8)) -> Flow {
    let dst = if dst == src { (dst + 1) % 4 } else { dst };
    Flow::new(&format!("f{i}"), &format!("e{src}"), &format!("e{dst}"), period, period, size).with_priority(prio)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn observed_delays_stay_within_bounds(
        specs in prop::collection::vec((0usize..4, 0usize..4, 300i64..3000, 42u32..=1500, 0u8..4), 2..9),
        pick in 0usize..64,
        seed in 0u64..1000,
        critical in any::<bool>(),
    ) {
        let net = topology::star(4, Rate::mbps(100)).unwrap();
        let flows: Vec<Flow> = specs.into_iter().enumerate().map(|(i, s)| flow(i, s)).collect();
        let routes = route_all(&net, &flows).unwrap();
        let p = tsnkit::config::PriorityRanks::of(&flows).unwrap().len();
        let all: Vec<PreemptionConfig> = (0..p).flat_map(|m| valid_configs(p, m).unwrap()).collect();
        let config = &all[pick % all.len()];
        let max_period = flows.iter().map(|f| f.period).max().unwrap();
        let phases = if critical { PhasePolicy::Zero } else { PhasePolicy::Random };
        let sim = SimConfig { phases, ..SimConfig::new(max_period * 100u64, seed) };
        let cv = cross_validate(&net, &flows, &routes, config, &sim, &AnalysisOptions::exhaustive()).unwrap();
        prop_assert!(cv.is_safe(), "{config}: {:?}", cv.violations);
    }
}

#[test]
fn jittered_fifo_flows_stay_within_bounds() {
    // Three same-priority flows meet at s1->e1_0; two of them arrive with the
    // jitter picked up on the first hops.
    let net = topology::line(2, 2, Rate::mbps(100)).unwrap();
    let flows = vec![
        Flow::new("a", "e0_0", "e1_0", 1000, 1000, 1500).with_priority(0),
        Flow::new("b", "e0_1", "e1_0", 1000, 1000, 1500).with_priority(0),
        Flow::new("c", "e1_1", "e1_0", 1000, 1000, 1500).with_priority(0),
    ];
    let routes = route_all(&net, &flows).unwrap();
    let config = PreemptionConfig::non_preemptive(1);
    let opts = AnalysisOptions::exhaustive();
    for seed in 0..40 {
        let sim = SimConfig::new(Duration::from_micros(100_000), seed);
        assert!(cross_validate(&net, &flows, &routes, &config, &sim, &opts).unwrap().is_safe(), "seed {seed}");
    }
    let critical = SimConfig { phases: PhasePolicy::Zero, ..SimConfig::new(Duration::from_micros(100_000), 0) };
    let cv = cross_validate(&net, &flows, &routes, &config, &critical, &opts).unwrap();
    assert!(cv.is_safe());
    // Released together, a and b collide on s0->s1 and the loser waits one frame.
    let frame = Duration::from_ratio(8 * 1542, 100);
    let worst = cv.flows.iter().flat_map(|f| f.hops.iter().map(|h| h.0)).max().unwrap();
    assert_eq!(worst, frame + frame);
}
