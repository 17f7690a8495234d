mod common;

use common::mean_and_ci;
use explore_go::metrics::{write_csv, MetricRecord, Split};
use explore_go::plot::{aggregate, load_groups, render_svg, GroupBy};

fn records(seed: u64, values: &[f64]) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let step = 100 * (i as u64 + 1);
        out.push(MetricRecord::new(step, seed, Split::Train, "success_rate", v));
        out.push(MetricRecord::new(step, seed, Split::TestUnreachable, "success_rate", v / 2.0));
        out.push(MetricRecord::new(step, seed, Split::Global, "coverage_sa", 1.0 - v));
    }
    out
}

#[test]
fn three_seed_aggregation_matches_an_independent_computation() {
    let seeds = [[0.1, 0.4, 0.9], [0.3, 0.35, 0.7], [0.2, 0.6, 1.0]];
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("baseline");
    std::fs::create_dir_all(&run).unwrap();
    for (s, v) in seeds.iter().enumerate() {
        write_csv(&run.join(format!("seed_{s}.csv")), &records(s as u64, v)).unwrap();
    }
    let groups = load_groups(&format!("{}/seed_*.csv", run.display()), &GroupBy::Dir).unwrap();
    assert_eq!(groups.len(), 3);
    assert!(groups.iter().all(|(g, _)| g == "baseline"));

    let series = aggregate(&groups, "success_rate");
    assert_eq!(series.len(), 2);
    for s in &series {
        let scale = if s.split == Split::Train { 1.0 } else { 0.5 };
        assert_eq!(s.points.len(), 3);
        for (i, p) in s.points.iter().enumerate() {
            let xs: Vec<f64> = seeds.iter().map(|v| v[i] * scale).collect();
            let (mean, half) = mean_and_ci(&xs);
            assert_eq!(p.n, 3);
            assert_eq!(p.step, 100 * (i as u64 + 1));
            assert!((p.mean - mean).abs() < 1e-9);
            assert!((p.half_width - half).abs() < 1e-9);
        }
    }
    let svg = render_svg(&series, "success_rate");
    assert_eq!(svg, render_svg(&series, "success_rate"));
    assert!(svg.contains("stroke-dasharray"), "test splits are dashed");
}

#[test]
fn grouping_by_file_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    write_csv(&dir.path().join("a.csv"), &records(0, &[0.5])).unwrap();
    write_csv(&dir.path().join("b.csv"), &records(0, &[0.25])).unwrap();
    let groups = load_groups(&format!("{}/*.csv", dir.path().display()), &GroupBy::File).unwrap();
    let names: Vec<&str> = groups.iter().map(|(g, _)| g.as_str()).collect();
    assert_eq!(names, ["a", "b"]);
    let cov = aggregate(&groups, "coverage_sa");
    assert_eq!(cov.len(), 2);
    assert_eq!(cov[0].points[0].half_width, 0.0);
    assert!(load_groups(&format!("{}/none_*.csv", dir.path().display()), &GroupBy::Dir).is_err());
}
