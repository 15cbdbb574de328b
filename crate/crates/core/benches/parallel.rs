use std::collections::HashSet;

use autoscope::acquire::{edge_mask, evaluate, AcquisitionSpec};
use autoscope::campaign::{run_campaign, CampaignKind, CampaignSpec};
use autoscope::field::Pos;
use autoscope::gp::{fit, FitConfig, GpModel, KernelFamily};
use autoscope::par;
use autoscope::recon::{reconstruct, ReconParams};
use autoscope::sample::{gen_domain_phantom, PhantomConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn training_set(n: usize) -> Vec<(Pos, f64)> {
    let sample = gen_domain_phantom(64, 64, [64.0, 64.0], &PhantomConfig::default(), 1).unwrap();
    let field = sample.piezoresponse();
    autoscope::campaign::halton_pixels(field.grid(), n)
        .unwrap()
        .into_iter()
        .map(|px| (field.grid().center(px), field.get(px)))
        .collect()
}

fn both<R>(c: &mut Criterion, group: &str, size: usize, mut f: impl FnMut() -> R) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", size), |b| b.iter(&mut f));
    g.bench_function(BenchmarkId::new("sequential", size), |b| b.iter(|| par::sequential(&mut f)));
    g.finish();
}

fn posterior(c: &mut Criterion) {
    let data = training_set(256);
    let model = fit(&data, KernelFamily::Matern52, &FitConfig::default()).unwrap();
    let grid = autoscope::field::Grid::new(64, 64, [64.0, 64.0]).unwrap();
    both(c, "gp_posterior_64x64", 256, || model.posterior(grid).unwrap());
}

fn hyper_fit(c: &mut Criterion) {
    let data = training_set(128);
    both(c, "gp_fit", 128, || fit(&data, KernelFamily::Matern52, &FitConfig::default()).unwrap());
}

fn acquisition(c: &mut Criterion) {
    let data = training_set(128);
    let model: GpModel = fit(&data, KernelFamily::Rbf, &FitConfig::default()).unwrap();
    let grid = autoscope::field::Grid::new(64, 64, [64.0, 64.0]).unwrap();
    let post = model.posterior(grid).unwrap();
    let mask = edge_mask(64, 64, 2).unwrap();
    let visited = HashSet::new();
    both(c, "acquisition_64x64", 4096, || {
        evaluate(&AcquisitionSpec::default(), &post, &mask, &visited).unwrap()
    });
}

fn idw(c: &mut Criterion) {
    let data = training_set(400);
    let grid = autoscope::field::Grid::new(64, 64, [64.0, 64.0]).unwrap();
    both(c, "idw_recon_64x64", 400, || reconstruct(&data, grid, &ReconParams::default()).unwrap());
}

fn bench_cells(c: &mut Criterion) {
    let mut spec = CampaignSpec::new(CampaignKind::BenchRecon);
    spec.sample.width = 32;
    spec.sample.height = 32;
    spec.engine.max_measurements = 60;
    spec.bench.n_seeds = 4;
    both(c, "bench_recon_cells", 12, || run_campaign(&spec).unwrap());
}

criterion_group!(benches, posterior, hyper_fit, acquisition, idw, bench_cells);
criterion_main!(benches);
