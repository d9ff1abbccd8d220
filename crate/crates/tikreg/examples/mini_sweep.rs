//! Reduced excess-risk sweep straight from the library, without the CLI.

use tikreg::experiment::{run_sweep, SweepConfig};

fn main() {
    let cfg = SweepConfig {
        grid_sizes: vec![64],
        sample_sizes: vec![3000, 30000],
        reps: 5,
        ..SweepConfig::default()
    };
    let res = run_sweep(&cfg).unwrap();
    for (n, l) in &res.minimal_risks {
        println!("N={n} L*={l:.6}");
    }
    for s in &res.summaries {
        println!(
            "N={} m={:6} sup {:.4e} ± {:.1e}   unsup {:.4e} ± {:.1e}",
            s.n, s.m, s.mean_sup, s.std_sup, s.mean_unsup, s.std_unsup
        );
    }
}
