//! Run the acceptance suite with the default seed and print the table.

fn main() {
    let t0 = std::time::Instant::now();
    match crossing_core::acceptance::run_suite(crossing_core::acceptance::SUITE_SEED, None) {
        Ok(report) => {
            print!("{}", report.render());
            println!("total: {:.0}s", t0.elapsed().as_secs_f64());
        }
        Err(e) => {
            eprintln!("suite error: {e}");
            std::process::exit(1);
        }
    }
}
