use efm::dataset::make_synthetic_2d;
use efm::training::{TrainConfig, TrainMethod, Trainer};

#[test]
fn inspect_tuple_label_consistency() {
    let ds = make_synthetic_2d(100, 0.5, 2.0, 0.1, 1000).unwrap();
    // Map each sample row index (per condition) to its cluster label lookup.
    let label_of = |ci: usize, row: &ndarray::ArrayView1<f64>| -> usize {
        // nearest sample in ds.samples(ci) determines the label
        let s = ds.samples(ci);
        let mut best = (f64::INFINITY, 0usize);
        for (i, r) in s.rows().into_iter().enumerate() {
            let d2: f64 = r.iter().zip(r.iter()).map(|_| 0.0).sum();
            let _ = d2;
            let dd: f64 = r
                .iter()
                .zip(row.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dd < best.0 {
                best = (dd, i);
            }
        }
        ds.labels(ci).unwrap()[best.1]
    };

    let config = TrainConfig { seed: 42, ..TrainConfig::default() };
    let mut trainer = Trainer::new(ds.clone(), config, TrainMethod::Efm).unwrap();
    let mut consistent = 0usize;
    let mut total = 0usize;
    let mut mixed_examples = 0;
    for iter in 0..5 {
        let batch = trainer.build_supervision().unwrap();
        for (j, rows) in batch.tuples.iter().enumerate() {
            let labels: Vec<usize> = rows
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, r)| label_of(batch.c0_indices[i], &r))
                .collect();
            let all_same = labels.iter().all(|&l| l == labels[0]);
            consistent += all_same as usize;
            total += 1;
            if !all_same && mixed_examples < 3 && iter == 0 {
                println!("iter {} tuple {}: labels {:?}", iter, j, labels);
                println!("  rows:\n{:?}", rows);
                mixed_examples += 1;
            }
        }
    }
    println!(
        "cluster-consistent tuples: {}/{} ({:.1}%)",
        consistent,
        total,
        100.0 * consistent as f64 / total as f64
    );

    // Also inspect one batch's supervision geometry.
    let batch = trainer.build_supervision().unwrap();
    println!("probes_t {:?}", batch.probes_t);
    println!("probes_c {:?}", batch.probes_c);
    for j in [0usize, 1, 2] {
        println!(
            "tuple {} source {:?} -> first-target {:?}, item x {:?}, target col0 {:?}",
            j,
            batch.sources[j].to_vec(),
            batch.tuples[j].row(0).to_vec(),
            batch.items[j].x.to_vec(),
            batch.items[j].target.column(0).to_vec()
        );
    }
}
