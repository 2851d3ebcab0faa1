//! Mean mis-clustering of all five methods on the reference blockmodel design.
//!
//! `cargo run --release -p casc --example reference_sweep -- [assortative|nonassortative|agreement]`

use casc::experiment::{run_design, AlphaChoice, BaseDesign, SimDesign, Sweep, SweepParameter};
use casc::OperatorKind;

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "assortative".into());
    let (assortative, sweep) = match mode.as_str() {
        "nonassortative" => (false, Sweep { parameter: SweepParameter::PMinusQ, values: vec![0.015] }),
        "agreement" => (
            true,
            Sweep { parameter: SweepParameter::Agreement, values: vec![0.6, 0.7, 0.8, 0.9, 1.0] },
        ),
        _ => (true, Sweep { parameter: SweepParameter::PMinusQ, values: vec![0.015] }),
    };
    let design = SimDesign {
        base: BaseDesign::reference(assortative),
        sweep,
        replicates: 20,
        agreement: 1.0,
        seed: 2024,
        alpha: AlphaChoice::default(),
        normalize_rows: false,
    };
    let start = std::time::Instant::now();
    let table = run_design(&design, &OperatorKind::ALL).expect("valid design");
    for c in &table.summary {
        println!(
            "{:>5} {:>6}  mis {:.4} +- {:.4}  ari {:.3}  failures {}",
            c.sweep_value, c.method, c.mean_misclustering, c.se_misclustering, c.mean_ari, c.failures
        );
    }
    eprintln!("{:.1} s", start.elapsed().as_secs_f64());
}
