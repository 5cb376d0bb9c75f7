//! Shared fixtures for the benchmarks.

use mcwlan_core::params::{ChannelSpec, SystemParams, MBPS};
use mcwlan_core::simulator::{NodeConfig, PolicySpec, SimConfig};

/// Test-bench parameters with the 11 Mbps channel.
pub fn table_one() -> (SystemParams, ChannelSpec) {
    let p = SystemParams::table_one();
    let c = ChannelSpec::new(&p, 11.0 * MBPS).expect("valid channel");
    (p, c)
}

/// `n` nodes at `rate` on two channels of 1 and 10 Mbps under `policy`.
pub fn asymmetric_bichannel(n: usize, rate: f64, policy: PolicySpec, t_f: f64) -> SimConfig {
    let p = SystemParams::table_one();
    let channels = vec![ChannelSpec::new(&p, 1.0 * MBPS).expect("valid"), ChannelSpec::new(&p, 10.0 * MBPS).expect("valid")];
    SimConfig {
        params: p,
        channels,
        nodes: (0..n).map(|i| NodeConfig { lambda: rate, policy: policy.clone(), initial_channel: i % 2 }).collect(),
        t_f,
        seed: 1,
        alpha_threshold: mcwlan_core::simulator::DEFAULT_ALPHA,
        sample_interval: mcwlan_core::simulator::DEFAULT_SAMPLE_INTERVAL,
        record_series: false,
    }
}
