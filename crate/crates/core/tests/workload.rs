use tsnkit::network::validate_flows;
use tsnkit::time::{Duration, Rate};
use tsnkit::topology;
use tsnkit::workload::{generate_flows, WorkloadParams};

#[test]
fn mean_period_over_many_flow_sets() {
    let net = topology::star(6, Rate::mbps(100)).unwrap();
    let mut sum = 0f64;
    let mut n = 0usize;
    for seed in 0..1000 {
        let flows = generate_flows(&net, &WorkloadParams { flows: 100, seed, ..WorkloadParams::default() }).unwrap();
        for f in &flows {
            sum += f.period.as_f64();
            n += 1;
        }
    }
    let mean = sum / n as f64;
    assert!((mean - 50_250.0).abs() / 50_250.0 < 0.03, "mean {mean}");
}

#[test]
fn periods_pass_a_uniformity_test() {
    let net = topology::star(6, Rate::mbps(100)).unwrap();
    let flows = generate_flows(&net, &WorkloadParams { flows: 10_000, seed: 11, ..WorkloadParams::default() }).unwrap();
    let mut xs: Vec<f64> = flows.iter().map(|f| f.period.as_f64()).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (500.0, 100_000.0);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = (x - lo) / (hi - lo);
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0f64, f64::max);
    assert!(ks < 0.05, "KS statistic {ks}");
}

#[test]
fn a_single_flow_is_in_range() {
    let net = topology::line(2, 1, Rate::mbps(100)).unwrap();
    let flows = generate_flows(&net, &WorkloadParams { flows: 1, seed: 5, ..WorkloadParams::default() }).unwrap();
    assert_eq!(flows.len(), 1);
    validate_flows(&net, &flows).unwrap();
    let f = &flows[0];
    assert!(f.period >= Duration::from_micros(500) && f.period <= Duration::from_micros(100_000));
    assert!(f.deadline >= Duration::from_micros(500) && f.deadline <= Duration::from_micros(100_000));
    assert!((64..=1500).contains(&f.size));
}

#[test]
fn one_end_point_is_not_enough() {
    let net = topology::star(1, Rate::mbps(100)).unwrap();
    assert!(generate_flows(&net, &WorkloadParams::default()).is_err());
}
