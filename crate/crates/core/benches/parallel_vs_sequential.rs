use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use medbounds::config::GridConfig;
use medbounds::exec::Execution;
use medbounds::oracle::SyntheticDgp;
use medbounds::pipeline::{evaluate_grid, PipelineOptions};

fn grid(c: &mut Criterion) {
    let data = SyntheticDgp::random(2000, 6, 4, 7).generate().expect("synthetic sample");
    let cells = GridConfig::default().cells();
    let mut group = c.benchmark_group("paper_grid_n2000");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let opts = PipelineOptions {
            execution: exec,
            ..PipelineOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| evaluate_grid(&data.sample, &cells, opts, None).expect("grid"))
        });
    }
    group.finish();
}

criterion_group!(benches, grid);
criterion_main!(benches);
