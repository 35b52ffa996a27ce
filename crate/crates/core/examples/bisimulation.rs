//! State-actions that copy each other collapse to one group under the
//! KROPE distance.

use krope::kernel::{bisim_partition, d_krope, exact_krope_kernel, DEFAULT_PARTITION_TOL};
use krope::mdp::{generate_garnet, GarnetParams, Policy, TabularMdp};

fn main() -> krope::Result<()> {
    let base = generate_garnet(GarnetParams { n_states: 5, n_actions: 3, gamma: 0.9, ..Default::default() }, 3)?;
    let (ns, na) = (base.n_states(), base.n_actions());
    let mut p = base.transitions().clone();
    let mut r = base.rewards().to_vec();
    // action 2 duplicates action 0 everywhere
    for s in 0..ns {
        let row = p.row(s * na).into_owned();
        p.set_row(s * na + 2, &row);
        r[s * na + 2] = r[s * na];
    }
    let mdp = TabularMdp::new(ns, na, r, p, base.gamma(), base.d0().to_vec(), base.terminal().to_vec())?;
    let pi = Policy::uniform(ns, na);
    let k = exact_krope_kernel(&mdp, &pi, 1e-12)?;
    let part = bisim_partition(&d_krope(&k)?, DEFAULT_PARTITION_TOL)?;
    println!("{} state-actions, {} groups", mdp.n_state_actions(), part.n_groups);
    for s in 0..ns {
        let labels: Vec<usize> = (0..na).map(|a| part.labels[s * na + a]).collect();
        println!("state {s}: group labels {labels:?}");
    }
    Ok(())
}
