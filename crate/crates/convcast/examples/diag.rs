// Temporary diagnostic: dissect pred-vs-anchor behavior per seed.
use convcast::cli::load_dataset;
use convcast::config::RunConfig;
use convcast::dataset::Split;
use convcast::experiments::{run_single, ModelOptions, SpecId};
use convcast::train::TrainConfig;

fn main() {
    let mut config = RunConfig::default();
    config.data_path = "crates/convcast/data/sp500.csv".into();
    let (dataset, _) = load_dataset(&config).unwrap();
    let test: Vec<usize> = dataset.indices(Split::Test).collect();

    for seed in [1u64, 2, 3] {
        let tc = TrainConfig { seed, ..config.train };
        let success = run_single(SpecId::Conv1fc, &dataset, &ModelOptions::default(), &tc).unwrap();
        let mut model = success.model.unwrap();
        let (x, y) = dataset.batch(&test);
        let pred = model.forward(&x).unwrap();
        let mut diffs = Vec::new();
        let mut correct_vs_rel = Vec::new();
        for (row, &i) in test.iter().enumerate() {
            let anchor = dataset.scaled_anchor(i);
            let p = pred.at2(row, 0);
            diffs.push(p - anchor);
            correct_vs_rel.push((p - anchor, y.at2(row, 0) - anchor));
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let mut sorted = diffs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = sorted[sorted.len() / 2];
        let frac_up = diffs.iter().filter(|d| **d > 0.0).count() as f64 / diffs.len() as f64;
        // correlation between prediction margin and realized move
        let my = correct_vs_rel.iter().map(|(_, r)| r).sum::<f64>() / diffs.len() as f64;
        let mut num = 0.0;
        let mut dp = 0.0;
        let mut dr = 0.0;
        for (d, r) in &correct_vs_rel {
            num += (d - mean) * (r - my);
            dp += (d - mean) * (d - mean);
            dr += (r - my) * (r - my);
        }
        println!(
            "seed {seed}: acc {:.4} best_ep {:3} mean(pred-anchor) {:+.5} median {:+.5} frac>0 {:.3} corr(margin, move) {:+.3}",
            success.metrics.accuracy,
            success.best_epoch,
            mean,
            med,
            frac_up,
            num / (dp.sqrt() * dr.sqrt())
        );
        // train-region behavior for contrast
        let train: Vec<usize> = dataset.indices(Split::Train).collect();
        let (xt, _) = dataset.batch(&train);
        let pt = model.forward(&xt).unwrap();
        let mut td = Vec::new();
        for (row, &i) in train.iter().enumerate() {
            td.push(pt.at2(row, 0) - dataset.scaled_anchor(i));
        }
        let tmean = td.iter().sum::<f64>() / td.len() as f64;
        let tfrac = td.iter().filter(|d| **d > 0.0).count() as f64 / td.len() as f64;
        println!("        train: mean {:+.5} frac>0 {:.3}", tmean, tfrac);
    }
}
