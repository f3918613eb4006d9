use efm::dataset::make_synthetic_2d;
use efm::transport::kmeans;

// How label-pure are K=4 kmeans groups on a 64-point two-cluster batch?
#[test]
fn inspect_kmeans_purity() {
    let ds = make_synthetic_2d(100, 0.5, 2.0, 0.1, 1000).unwrap();
    for ci in 0..4 {
        let pts = ds.samples(ci);
        let labels = ds.labels(ci).unwrap();
        let cs = kmeans(pts, 4, 100, 7 + ci as u64).unwrap();
        let mut report = String::new();
        for g in 0..4 {
            let members = cs.members(g);
            let inner = members.iter().filter(|&&i| labels[i] == 0).count();
            report.push_str(&format!(" g{}:{}i/{}o", g, inner, members.len() - inner));
        }
        println!("condition {}:{}", ci, report);
    }
}
