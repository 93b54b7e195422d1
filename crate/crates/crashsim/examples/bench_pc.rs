//! Times one `pc` run per listed `x`: `bench_pc <n> <x>...`.

use crashsim::adversary::{AdversarySpec, StrategyKind};
use crashsim::parameterized::{parameterized_consensus, PcSetup};
use crashsim::{Profile, Sim, SimConfig};
use std::rc::Rc;
use std::time::Instant;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let n = args[0];
    let f = n / 10 - 1;
    for &x in &args[1..] {
        let setup = Rc::new(PcSetup::new(n, x, Profile::desk()).unwrap());
        let adv = AdversarySpec::new(StrategyKind::TargetedHeavySenders).build(n, f, 1, None).unwrap();
        let mut sim = Sim::new(SimConfig::new(n, f, 1), adv);
        sim.spawn_all(|ctx| {
            let setup = setup.clone();
            let b = ctx.pid().0 % 3 == 0;
            parameterized_consensus(ctx, setup, b)
        });
        let t = Instant::now();
        let res = sim.run().unwrap();
        let outs: Vec<bool> = res.outputs.iter().flatten().copied().collect();
        println!(
            "n={n} x={x} rounds={} amort_bits={:.0} rand={:.2} decided={:?} agree={} time={:.2?}",
            res.metrics.rounds,
            res.metrics.amortized_bits(),
            res.metrics.amortized_random_bits(),
            outs.first(),
            outs.windows(2).all(|w| w[0] == w[1]),
            t.elapsed()
        );
    }
}
