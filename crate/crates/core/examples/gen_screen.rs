//! Writes the bundled synthetic screen: `gen_screen [out.csv] [seed]`.

use std::path::PathBuf;

use covcal::experiments::screen::{simulate_screen, ScreenSpec};
use covcal::ingest::save_lfc_csv;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "data/toy_lfc.csv".into()));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed must be an integer"));
    let (screen, m) = simulate_screen(&ScreenSpec::default(), seed);
    save_lfc_csv(&m, &out).expect("writing LFC csv");
    println!(
        "wrote {} ({} perturbations x {} genes, {} edges, seed {seed})",
        out.display(),
        m.n_perturbations(),
        m.n_genes(),
        screen.dag.edges().len()
    );
}
