//! Consensus propagation on a chain: every node recovers the global sum
//! after `diameter` sweeps, and a warm-started engine tracks a changing input.

use dgamp::network::{Consensus, TreeNetwork};

fn main() {
    let net = TreeNetwork::chain(5).expect("valid chain");
    let local = [1.0, 2.0, 3.0, 4.0, 5.0];
    let total: f64 = local.iter().sum();
    println!("chain of {} nodes, diameter {}", net.node_count(), net.diameter());

    let mut engine = Consensus::new(&net, 0.0_f64);
    for sweep in 1..=net.diameter() {
        let agg = engine.round(&net, &local, 1);
        let estimates: Vec<f64> = local.iter().zip(&agg).map(|(own, a)| own + a).collect();
        println!("sweep {sweep}: {estimates:?}");
    }
    println!("global sum {total}");

    // New local values: one extra sweep per round keeps the estimates close.
    let drifted: Vec<f64> = local.iter().map(|v| v + 0.1).collect();
    let agg = engine.round(&net, &drifted, 1);
    let estimates: Vec<f64> = drifted.iter().zip(&agg).map(|(own, a)| own + a).collect();
    println!("after drift, one sweep: {estimates:?} (target {})", total + 0.5);

    let tree = TreeNetwork::tree8();
    let ones = vec![[1.0, 2.0]; tree.node_count()];
    let mut vec_engine = Consensus::new(&tree, [0.0; 2]);
    let agg = vec_engine.round(&tree, &ones, tree.diameter());
    println!("tree8 vector payload, node 0 sees {:?}", [1.0 + agg[0][0], 2.0 + agg[0][1]]);
}
