use haulcast_core::simdata::{simulate_shifts, SimConfig};

fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn main() {
    for seed in [42u64, 7, 123] {
        let config = SimConfig { n_shifts: 50_000, seed, ..SimConfig::default() };
        let records = simulate_shifts(&config).unwrap();
        let trucks: Vec<f64> = records.iter().map(|r| r.working_trucks as f64).collect();
        let shovels: Vec<f64> = records.iter().map(|r| r.working_shovels as f64).collect();
        let cycles: Vec<f64> = records.iter().map(|r| r.cycle_count as f64).collect();
        let payload: Vec<f64> = records.iter().map(|r| r.payload).collect();
        let ct: Vec<f64> = records.iter().map(|r| r.cycle_time).collect();
        println!("seed {seed}");
        for (name, xs, tm, ts) in [
            ("trucks", &trucks, 13.8, 3.1),
            ("shovels", &shovels, 4.7, 1.4),
            ("cycles", &cycles, 158.0, 71.0),
            ("payload", &payload, 13795.0, 6393.0),
            ("cycle_time", &ct, 64.0, 17.0),
        ] {
            let (m, s) = stats(xs);
            println!(
                "  {name:11} mean {m:9.2} (target {tm:9.2}, {:+.2}%)   std {s:8.2} (target {ts:8.2}, {:+.2}%)",
                (m - tm) / tm * 100.0, (s - ts) / ts * 100.0
            );
        }
    }
}
